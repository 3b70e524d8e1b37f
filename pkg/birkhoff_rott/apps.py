from django.apps import AppConfig


class BirkhoffRottConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'birkhoff_rott'
