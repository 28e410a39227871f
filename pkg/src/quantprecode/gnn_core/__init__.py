"""Message-passing layer kernels with a compiled fast path.

The same forward/backward layer primitives exist twice: a Cython extension
(`_fast`) that fuses the activation, broadcast and aggregation loops, and a
pure numpy reference (`numpy_core`).  The extension is preferred when it
imported cleanly; set QUANTPRECODE_CORE=numpy or =fast to force a choice.
Matrix products go through BLAS in both.
"""

from __future__ import annotations

import os

from . import numpy_core

_choice = os.environ.get("QUANTPRECODE_CORE", "auto")
if _choice not in ("auto", "fast", "numpy"):
    raise RuntimeError(f"QUANTPRECODE_CORE must be auto|fast|numpy, got {_choice!r}")

backend = numpy_core
BACKEND_NAME = "numpy"
if _choice in ("auto", "fast"):
    try:
        from . import _fast

        backend = _fast
        BACKEND_NAME = "fast"
    except ImportError:
        if _choice == "fast":
            raise

layer_forward = backend.layer_forward
layer_backward = backend.layer_backward
