from django.apps import AppConfig


class LinkConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.link'
    verbose_name = 'Entity Linking'
