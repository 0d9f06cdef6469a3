"""
URLs de fpbetter_backend: el único frente web es el admin del registro
de experimentos.
"""

from django.contrib import admin
from django.urls import path

urlpatterns = [
    path('admin/', admin.site.urls),
]
