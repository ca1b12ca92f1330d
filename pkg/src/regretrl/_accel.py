"""Optional numba acceleration.

Set ``REGRETRL_DISABLE_NUMBA=1`` to run every kernel as plain Python/numpy.
"""
import os

_DISABLED = os.environ.get("REGRETRL_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    NUMBA_ENABLED = True
except ImportError:  # pragma: no cover - depends on environment
    _njit = None
    NUMBA_ENABLED = False


def jit(fn):
    """Compile ``fn`` with ``numba.njit`` when enabled, else return it unchanged."""
    if NUMBA_ENABLED:
        return _njit(cache=True)(fn)
    return fn
