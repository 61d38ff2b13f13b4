"""Kernel backend selection.

Hot inner loops have two implementations: a numba @njit version and a
pure-numpy fallback. The fallback is selected by setting the environment
variable ``FACEKIT_NUMBA=0`` before the package is imported (or
automatically when numba is not importable).
"""

from __future__ import annotations

import os

_flag = os.environ.get("FACEKIT_NUMBA", "1").strip().lower()
NUMBA_REQUESTED = _flag not in ("0", "false", "off", "no")

if NUMBA_REQUESTED:
    try:
        import numba  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False

BACKEND_NAME = "numba" if NUMBA_ENABLED else "numpy"
