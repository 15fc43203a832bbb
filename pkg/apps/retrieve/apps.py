from django.apps import AppConfig


class RetrieveConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.retrieve'
    verbose_name = 'Candidate Retrieval'
