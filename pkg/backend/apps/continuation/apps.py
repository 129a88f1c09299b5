from django.apps import AppConfig


class ContinuationAppConfig(AppConfig):
    name = 'apps.continuation'
    verbose_name = 'Coexistence continuation'
