from django.apps import AppConfig


class DynamicsConfig(AppConfig):
    name = 'apps.dynamics'
    verbose_name = 'Time-dependent simulation'
