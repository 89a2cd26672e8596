from django.apps import AppConfig


class NonparametricConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.nonparametric'
    verbose_name = 'Nonparametric term-structures'
