"""
Celery application for agebif parameter sweeps
"""
import os

from celery import Celery

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'config.settings')

app = Celery('agebif')

# all celery settings carry the CELERY_ prefix in django settings
app.config_from_object('django.conf:settings', namespace='CELERY')

app.autodiscover_tasks()
