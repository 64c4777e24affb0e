from django.apps import AppConfig


class CrpConfig(AppConfig):
    name = 'crp'
    verbose_name = 'Company response policies'
