from django.apps import AppConfig


class LayerpotConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'layerpot'
