"""
Access to the MUSKAT3D settings block.
核心模組 - 模擬設定存取
"""

from django.conf import settings

DEFAULTS = {
    'CHUNK_PAIRS': 2 ** 21,
    'DENSE_LIMIT': 4096,
    'WORKERS': 1,
    'OUTPUT_ROOT': '.',
}


def get_setting(name):
    """Return settings.MUSKAT3D[name], or the built-in default outside a configured project."""
    if name not in DEFAULTS:
        raise KeyError(f'Unknown MUSKAT3D setting: {name}')
    if settings.configured:
        return getattr(settings, 'MUSKAT3D', {}).get(name, DEFAULTS[name])
    return DEFAULTS[name]
