from django.apps import AppConfig


class CommonConfig(AppConfig):
    name = 'apps.common'
    verbose_name = 'Common components'

    def ready(self):
        from .logging import configure_structlog
        configure_structlog()
