"""
WSGI config for fpbetter_backend project.

Sólo sirve el admin del registro de experimentos.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'fpbetter_backend.settings')

application = get_wsgi_application()
