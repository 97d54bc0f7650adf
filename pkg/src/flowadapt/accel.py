"""Optional numba acceleration for the hot kernels.

The compiled path is the default.  Setting the environment variable
``FLOWADAPT_NUMBA=0`` (before import) selects the pure-numpy fallback
implementations instead; the same flag is what the kernel benchmark flips.
"""

import os

_flag = os.environ.get("FLOWADAPT_NUMBA", "1").strip().lower()
_want_numba = _flag not in ("0", "false", "off", "no")

if _want_numba:
    try:
        from numba import njit

        using_numba = True
    except ImportError:
        using_numba = False
else:
    using_numba = False

if not using_numba:

    def njit(*args, **kwargs):
        # identity decorator, works bare or with options
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


def maybe_compiled(compiled, fallback):
    """Pick the jitted kernel or its vectorized numpy twin."""
    return compiled if using_numba else fallback
