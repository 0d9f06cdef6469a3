from django.apps import AppConfig


class RobustezConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'robustez'
    verbose_name = 'Entrenamiento adversarial'
