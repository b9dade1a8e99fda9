"""Access to the ``LAB`` settings dict with built-in defaults."""

from pathlib import Path

DEFAULTS = {
    'MAX_DIM': 512,
    'DEFAULT_TRUNCATION': 256,
    'THREADS': 1,
    'OUTPUT_DIR': Path('runs'),
    'RESIDUAL_TOL': 1e-8,
    'POLE_TOL': 1e-12,
    'MAX_CONTOUR_POINTS': 1_000_000,
    'WINDING_TOL': 1e-6,
    'NUDGE_ATTEMPTS': 8,
    'NUDGE_RELATIVE': 1e-6,
    'QUADRATURE_TOL': 1e-8,
    'MIN_WINDOW_A': 0.1,
    'RECTANGLE_GROWTH_LIMIT': 1e6,
}


def lab_setting(name):
    """Return ``settings.LAB[name]``, or the default outside a configured project."""
    from django.conf import settings

    if settings.configured:
        value = getattr(settings, 'LAB', {}).get(name)
        if value is not None:
            return value
    return DEFAULTS[name]
