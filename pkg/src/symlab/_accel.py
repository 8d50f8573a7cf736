"""Optional numba acceleration.

Set ``SYMLAB_NO_NUMBA=1`` to force the pure-numpy code paths. When numba is
not importable the fallback is used automatically.
"""
import os

_disabled = os.environ.get("SYMLAB_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _disabled:
        raise ImportError
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    numba = None
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def worker_count(requested=None):
    """Worker cap from ``SYMLAB_THREADS`` (and the CPU count)."""
    n = os.cpu_count() or 1
    env = os.environ.get("SYMLAB_THREADS")
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            pass
    if requested is not None:
        n = min(n, max(1, int(requested)))
    return n
