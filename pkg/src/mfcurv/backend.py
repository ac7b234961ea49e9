"""Kernel backend selection.

The hot elementwise kernels (logarithmic mean family, dissipation sums,
action derivatives) exist twice: a jit-compiled version backed by numba and
a pure-numpy fallback.  The environment variable ``MFCURV_BACKEND`` picks
one at import time:

* ``auto`` (default): numba if importable, else numpy,
* ``numba``: require numba, fail loudly if missing,
* ``numpy``: force the fallback (useful for debugging and benchmarking).

``mfcurv.backend.kernels`` is the selected module; ``BACKEND`` names it.
"""

import os

_requested = os.environ.get("MFCURV_BACKEND", "auto").strip().lower()
if _requested not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        f"MFCURV_BACKEND must be one of auto/numba/numpy, got {_requested!r}")

if _requested == "numpy":
    from . import _kernels_numpy as kernels
    BACKEND = "numpy"
elif _requested == "numba":
    from . import _kernels_numba as kernels
    BACKEND = "numba"
else:
    try:
        from . import _kernels_numba as kernels
        BACKEND = "numba"
    except ImportError:
        from . import _kernels_numpy as kernels
        BACKEND = "numpy"

__all__ = ["kernels", "BACKEND"]
