from django.apps import AppConfig


class EvolveConfig(AppConfig):
    name = 'apps.evolve'
    verbose_name = 'Age evolution operators'
