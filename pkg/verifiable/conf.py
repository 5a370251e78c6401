from django.conf import settings

DEFAULTS = {
    'THRESHOLD_T': 10,
    'BRANCHING': 16,
    'INDEX_VARIANT': 'bhash',
    'BLOOM_BITS': 2**20,
    'BLOOM_HASHES': 7,
    'GAS_COST_TABLE': {'write': 20000, 'read': 800, 'compute': 1},
    'PLAN_COST_TABLE': {},
    'MAX_PAYLOAD_BYTES': 64 * 1024 * 1024,
    'FETCH_WORKERS': 8,
    'STATE_DIR': None,
    'USE_CACHE': True,
}

INDEX_VARIANTS = ('bhash', 'bplus-only')


def get_setting(name):
    """Value of ``settings.HYBRIDQUERY[name]``, falling back to the built-in default."""
    configured = getattr(settings, 'HYBRIDQUERY', None) or {}
    if name in configured:
        return configured[name]
    return DEFAULTS[name]
