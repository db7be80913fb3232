"""Kernel backend selection.

The compiled Cython extension is preferred when importable; otherwise the
pure-Python fallback takes over transparently.  Set ``SIGNSCORE_PURE=1``
to force the fallback (used by the equivalence tests and the benchmark).
"""

import os

if os.environ.get("SIGNSCORE_PURE"):
    from . import fallback as _impl

    BACKEND = "python"
else:
    try:
        from . import _dtw_core as _impl

        BACKEND = "compiled"
    except ImportError:
        from . import fallback as _impl

        BACKEND = "python"

dtw_accumulate = _impl.dtw_accumulate


def backend_name():
    return BACKEND
