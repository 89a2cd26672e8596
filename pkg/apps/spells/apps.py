from django.apps import AppConfig


class SpellsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.spells'
    verbose_name = 'Spell builder'
