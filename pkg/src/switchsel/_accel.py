"""Optional numba acceleration.

The hot kernels in :mod:`switchsel.kernels` exist twice: a numba ``@njit``
version and a vectorised numpy version.  Setting the environment variable
``SWITCHSEL_DISABLE_NUMBA=1`` (or running without numba installed) selects
the numpy path.  The flag is read once, at import time.
"""

import logging
import os

logger = logging.getLogger(__name__)

DISABLE_ENV = "SWITCHSEL_DISABLE_NUMBA"

try:
    import numba

    HAVE_NUMBA = True
    njit = numba.njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        """Null decorator used when numba is unavailable."""
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(func):
            return func

        return wrap


def _flag_set(value):
    return value.strip().lower() in {"1", "true", "yes", "on"}


USE_NUMBA = HAVE_NUMBA and not _flag_set(os.environ.get(DISABLE_ENV, ""))

if HAVE_NUMBA and not USE_NUMBA:
    logger.debug("numba disabled via %s", DISABLE_ENV)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
