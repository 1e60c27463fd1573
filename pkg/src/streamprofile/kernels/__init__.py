"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

Backend selection happens once at import time:

* ``STREAMPROFILE_NUMBA=0`` (or ``false``/``off``/``no``) forces the
  pure-numpy path;
* otherwise the numba path is used when numba imports cleanly, with a
  silent fallback to numpy when it does not.

``BACKEND`` names the active path.  ``benchmarks/bench_kernels.py``
times both implementations side by side.
"""

import os

from . import numpy_impl

_FALSEY = {"0", "false", "off", "no"}


def _numba_enabled() -> bool:
    flag = os.environ.get("STREAMPROFILE_NUMBA", "1").strip().lower()
    return flag not in _FALSEY


BACKEND = "numpy"
_impl = numpy_impl

if _numba_enabled():
    try:
        from . import numba_impl as _numba_impl

        _impl = _numba_impl
        BACKEND = "numba"
    except ImportError:
        pass

lcs_length = _impl.lcs_length
silhouette_samples = _impl.silhouette_samples
nearest_centroid = _impl.nearest_centroid


def available_backends():
    """Map of backend name -> implementation module, for benchmarks/tests."""
    backends = {"numpy": numpy_impl}
    try:
        from . import numba_impl

        backends["numba"] = numba_impl
    except ImportError:
        pass
    return backends


__all__ = [
    "BACKEND",
    "lcs_length",
    "silhouette_samples",
    "nearest_centroid",
    "available_backends",
]
