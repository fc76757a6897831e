from django.apps import AppConfig


class ErgodicConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'ergodic'
    verbose_name = 'Ergodic averages along return times'
