from functools import lru_cache
from pathlib import Path

from hypident.catalog import load_catalog

FIXTURES = Path(__file__).parent / "fixtures"


def agree(a, b, ctx) -> int:
    """Decimal digits of relative agreement between two values."""
    mp = ctx.mp
    a, b = mp.mpmathify(a), mp.mpmathify(b)
    diff = abs(a - b)
    if diff == 0:
        return 10**6
    scale = max(abs(a), abs(b))
    return int(mp.floor(-mp.log10(diff / scale)))


@lru_cache(maxsize=None)
def bundled():
    return tuple(load_catalog(None))


@lru_cache(maxsize=None)
def bundled_index():
    return {r.id: r for r in bundled()}
