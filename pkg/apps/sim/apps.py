from django.apps import AppConfig


class SimConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.sim'
    verbose_name = 'Similarity Kernels'
