"""Numba switch.

Set ``CSILAB_DISABLE_NUMBA=1`` to force the pure-numpy kernels. When numba
cannot be imported the numpy path is used automatically.
"""
import os

ENV_FLAG = "CSILAB_DISABLE_NUMBA"

try:
    import numba as _numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    _numba = None
    HAS_NUMBA = False


def numba_enabled():
    return HAS_NUMBA and os.environ.get(ENV_FLAG, "0").strip().lower() not in ("1", "true", "yes")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise."""
    if HAS_NUMBA:
        kwargs.setdefault("cache", True)
        return _numba.njit(*args, **kwargs)

    def wrap(fn):
        return fn

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return wrap
