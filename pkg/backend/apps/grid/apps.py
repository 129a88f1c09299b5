from django.apps import AppConfig


class GridConfig(AppConfig):
    name = 'apps.grid'
    verbose_name = 'Spatial and age meshes'
