from django.apps import AppConfig


class VerifiableConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'verifiable'
    verbose_name = 'Verifiable hybrid-storage queries'
