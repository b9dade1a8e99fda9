import logging
import os
import sys


def configure_logging(level=None):
    """
    Console logging for command-line runs, before Django settings load
    """
    level = level or os.environ.get('LAB_LOG_LEVEL', 'INFO')
    logging.basicConfig(
        level=level,
        format='[%(asctime)s] %(levelname)s [%(name)s:%(lineno)s] %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S',
        handlers=[
            logging.StreamHandler(sys.stdout)
        ]
    )

    loggers = [
        'django',
        'spectral_lab',
        'counting_lab',
    ]

    for logger_name in loggers:
        logging.getLogger(logger_name).setLevel(level)

    # exporter retries only at WARNING
    logging.getLogger('opentelemetry').setLevel(logging.WARNING)

    return logging.getLogger(__name__)
