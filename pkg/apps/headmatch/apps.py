from django.apps import AppConfig


class HeadmatchConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.headmatch'
    verbose_name = 'Heading to Property Matching'
