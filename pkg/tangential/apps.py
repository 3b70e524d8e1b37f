from django.apps import AppConfig


class TangentialConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'tangential'
