import os
import sys
import socket
import logging
from functools import wraps
from opentelemetry import trace
from opentelemetry.trace import Status, StatusCode
from opentelemetry.exporter.otlp.proto.grpc.trace_exporter import OTLPSpanExporter
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import BatchSpanProcessor, ConsoleSpanExporter
from opentelemetry.sdk.resources import Resource

logger = logging.getLogger(__name__)

_otel_config = None


def log_environment_variables():
    """
    Log the environment that shapes a lab run
    """
    env_vars = [
        'OTEL_SERVICE_NAME',
        'OTEL_EXPORTER_OTLP_ENDPOINT',
        'LAB_MAX_DIM',
        'LAB_DEFAULT_TRUNCATION',
        'LAB_THREADS',
        'LAB_OUTPUT_DIR',
        'DB_ENGINE',
    ]

    for var in env_vars:
        value = os.environ.get(var)
        if value:
            logger.info(f"ENV {var}: {value}")
        else:
            logger.debug(f"ENV {var}: Not set")


def _span_attribute(value):
    if isinstance(value, (bool, int, float, str)):
        return value
    return str(value)


def trace_stage(name):
    """
    Decorator opening one span per pipeline stage or command.

    Keyword arguments that are scalars are copied onto the span.
    """
    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            tracer = trace.get_tracer(__name__)
            with tracer.start_as_current_span(f"lab.{name}") as span:
                span.set_attributes({
                    f"lab.arg.{key}": _span_attribute(value)
                    for key, value in kwargs.items()
                    if isinstance(value, (bool, int, float, str))
                })
                try:
                    return func(*args, **kwargs)
                except Exception as e:
                    span.record_exception(e)
                    span.set_status(Status(StatusCode.ERROR))
                    raise

        return wrapper

    return decorator


def trace_lab_request(view_func):
    """
    Decorator to trace registry HTTP requests
    """
    @wraps(view_func)
    def wrapper(request, *args, **kwargs):
        tracer = trace.get_tracer(__name__)
        with tracer.start_as_current_span(
            f"{request.method} {request.path}",
            kind=trace.SpanKind.SERVER
        ) as span:
            span.set_attributes({
                "http.method": request.method,
                "http.url": request.build_absolute_uri(),
                "http.host": request.get_host(),
                "http.user_agent": request.META.get('HTTP_USER_AGENT', 'unknown'),
            })

            try:
                response = view_func(request, *args, **kwargs)
                span.set_attributes({"http.status_code": response.status_code})
                return response
            except Exception as e:
                span.record_exception(e)
                span.set_status(Status(StatusCode.ERROR))
                raise

    return wrapper


def _instrument_database(provider):
    if os.environ.get('DB_ENGINE', 'sqlite3') != 'postgresql':
        return
    try:
        from opentelemetry.instrumentation.psycopg2 import Psycopg2Instrumentor
        Psycopg2Instrumentor().instrument(tracer_provider=provider)
        logger.info("Psycopg2 instrumentation successful")
    except Exception as psycopg_err:
        logger.error(f"Psycopg2 instrumentation failed: {psycopg_err}")


def setup_opentelemetry():
    """
    Install the tracer provider once per process and return its config
    """
    global _otel_config
    if _otel_config is not None:
        return _otel_config

    try:
        logger.info("Starting OpenTelemetry Instrumentation Setup")
        logger.debug(f"Python Version: {sys.version}")
        log_environment_variables()

        resource = Resource.create({
            "service.name": os.environ.get('OTEL_SERVICE_NAME', 'spectral-lab'),
            "service.version": os.environ.get('SERVICE_VERSION', '1.0.0'),
            "deployment.environment": os.environ.get('DEPLOYMENT_ENV', 'development'),
            "service.namespace": os.environ.get('SERVICE_NAMESPACE', 'spectral-lab'),
            "service.instance.id": os.environ.get('HOSTNAME', socket.gethostname()),
        })

        provider = TracerProvider(resource=resource)
        trace.set_tracer_provider(provider)

        exporters = []
        if os.environ.get('OTEL_CONSOLE_EXPORTER', 'False') == 'True':
            exporters.append(ConsoleSpanExporter())

        otlp_endpoint = os.environ.get('OTEL_EXPORTER_OTLP_ENDPOINT', '')
        if otlp_endpoint:
            try:
                exporters.append(OTLPSpanExporter(endpoint=otlp_endpoint))
                logger.info(f"OTLP exporter configured with endpoint: {otlp_endpoint}")
            except Exception as otlp_err:
                logger.warning(f"OTLP exporter configuration failed: {otlp_err}")

        for exporter in exporters:
            provider.add_span_processor(BatchSpanProcessor(
                exporter,
                max_queue_size=2048,
                schedule_delay_millis=5000,
                export_timeout_millis=30000
            ))

        _instrument_database(provider)

        _otel_config = {
            'tracer': provider.get_tracer(__name__),
            'provider': provider,
            'exporters': len(exporters),
        }

    except Exception as setup_err:
        logger.error(f"OpenTelemetry setup failed: {setup_err}")
        _otel_config = {
            'tracer': trace.get_tracer(__name__),
            'provider': None,
            'exporters': 0,
        }

    return _otel_config
