from django.apps import AppConfig


class CorpusConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.corpus'
    verbose_name = 'Table Corpus'
