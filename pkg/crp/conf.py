"""
Settings access for the crp app.

Defaults below are overlaid by the ``CRP`` dictionary in the Django
settings module, so a project only needs to name the keys it changes.
"""
from django.conf import settings

DEFAULTS = {
    'GRID_N': 5000,
    'EPSILON': 1e-6,
    'MAX_ITERATIONS': 100,
    'RELAXATION': 0.0,
    'RANDOM_COUNT': 100,
    'SEED': 20240101,
    'THREADS': 1,
    'DP': {
        'N': 50,
        'M': 400,
        'P': 50,
        'LAMBDA': 0.1,
        'MODE': 'corrected',
    },
    'REPLICATES': 20,
    'REPLICATE_SPREAD': 0.2,
    'CSV_FLOAT_FORMAT': '%.12g',
}


def crp_settings():
    """
    Return the effective CRP configuration.

    Nested ``DP`` options are merged key by key; ``THREADS`` is never below 1.
    """
    user = getattr(settings, 'CRP', {}) if settings.configured else {}
    merged = {**DEFAULTS, **user}
    merged['DP'] = {**DEFAULTS['DP'], **user.get('DP', {})}
    merged['THREADS'] = max(1, int(merged['THREADS']))
    return merged
