from django.apps import AppConfig


class CoxConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.cox'
    verbose_name = 'Cox engine'
