from django.apps import AppConfig


class LcraConfig(AppConfig):
    name = 'lcra'
    verbose_name = 'Layered compressive random access'
