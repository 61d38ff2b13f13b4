"""Backend dispatch for hot inner-loop kernels.

``impl`` points at the numba-compiled backend unless FACEKIT_NUMBA=0 (or
numba is unavailable), in which case the pure-numpy backend is used. Both
backends expose the same functions and are importable side by side for
parity tests and benchmarks.
"""

from __future__ import annotations

from ..backend import BACKEND_NAME, NUMBA_ENABLED

from . import numpy_backend

if NUMBA_ENABLED:
    from . import numba_backend

    impl = numba_backend
else:
    impl = numpy_backend


def get_backend(name: str):
    if name == "numpy":
        return numpy_backend
    if name == "numba":
        from . import numba_backend

        return numba_backend
    raise ValueError(f"unknown backend {name!r}")
