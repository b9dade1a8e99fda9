from django.apps import AppConfig


class CountingLabConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'counting_lab'
    verbose_name = 'Eigenvalue counting laboratory'

    def ready(self):
        import os
        if os.environ.get('OPENTELEMETRY_ENABLED', 'True') == 'True':
            try:
                from spectral_lab.instrumentation import setup_opentelemetry
                setup_opentelemetry()
            except Exception as e:
                import logging
                logger = logging.getLogger(__name__)
                logger.error(f"Failed to initialize OpenTelemetry: {e}")
