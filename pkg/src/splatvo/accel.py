"""Kernel dispatch: numba-jitted loops vs. pure-numpy fallbacks.

Hot inner loops (rasterization, photometric warping) ship in two variants:
a loop implementation compiled with ``numba.njit`` and a vectorized numpy
implementation. The environment variable ``SPLATVO_NUMBA`` selects the path:

    SPLATVO_NUMBA=1   force numba (ImportError if unavailable)
    SPLATVO_NUMBA=0   force the numpy fallback
    unset / auto      numba if importable, else numpy

``benchmarks/bench_kernels.py`` times both paths side by side. Kernels are
compiled single-threaded so that runs with a fixed seed stay bitwise
reproducible.
"""

import os

_FLAG = os.environ.get("SPLATVO_NUMBA", "auto").strip().lower()

if _FLAG in ("0", "false", "off", "no"):
    NUMBA_ENABLED = False
elif _FLAG in ("1", "true", "on", "yes"):
    import numba  # noqa: F401  (fail loudly when forced on)

    NUMBA_ENABLED = True
else:
    try:
        import numba  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False


def njit(func):
    """Jit-compile ``func`` (cached, no fastmath: keeps results reproducible)."""
    from numba import njit as _njit

    return _njit(cache=True, fastmath=False)(func)
