"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import time from the environment variable
``HSGS_NUMBA``: "0" forces the numpy path, "1" forces numba (import error
if unavailable), unset means "numba if importable". ``backend_name()``
reports the active choice; benchmarks/bench_kernels.py compares the two.
"""

import os

from . import _numpy

_flag = os.environ.get("HSGS_NUMBA", "").strip()

if _flag == "0":
    _impl = _numpy
    _BACKEND = "numpy"
else:
    try:
        from . import _numba as _impl

        _BACKEND = "numba"
    except ImportError:
        if _flag == "1":
            raise
        _impl = _numpy
        _BACKEND = "numpy"

horizontal_lq_profile = _impl.horizontal_lq_profile
horizontal_linf_profile = _impl.horizontal_linf_profile
cumtrapz_z = _impl.cumtrapz_z
stack_magnitude = _impl.stack_magnitude
kahan_sum = _impl.kahan_sum
weighted_sumsq = _impl.weighted_sumsq


def backend_name():
    return _BACKEND
