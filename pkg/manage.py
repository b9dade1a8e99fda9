#!/usr/bin/env python
"""Django's command-line utility: lab commands and administrative tasks."""
import os
import sys
from opentelemetry.instrumentation.django import DjangoInstrumentor

from spectral_lab.logging import configure_logging


def main():
    """Run administrative tasks and lab commands."""
    # Set up logging early
    configure_logging()
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'spectral_lab.settings')
    if os.environ.get('OPENTELEMETRY_ENABLED', 'True') == 'True':
        DjangoInstrumentor().instrument()
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Are you sure it's installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    execute_from_command_line(sys.argv)

if __name__ == '__main__':
    main()
