"""Backend selection for the hot kernels.

Set ``CROWD_ASSIGN_BACKEND=numpy`` to force the pure-numpy path even when
numba is importable. The value is read once at import; tests may flip
``BACKEND`` at runtime since dispatchers look it up on every call.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

HAVE_NUMBA = numba is not None

_requested = os.environ.get("CROWD_ASSIGN_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"CROWD_ASSIGN_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

BACKEND = "numba" if (_requested == "numba" and HAVE_NUMBA) else "numpy"


def njit(fn):
    """Compile ``fn`` with numba when available, otherwise return it unchanged."""
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def use_numba():
    return BACKEND == "numba" and HAVE_NUMBA


def max_threads():
    """Worker cap for batch evaluation, from ``CROWD_ASSIGN_THREADS``."""
    raw = os.environ.get("CROWD_ASSIGN_THREADS")
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"CROWD_ASSIGN_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)
