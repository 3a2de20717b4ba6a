"""Hot loops, compiled when possible.

``run_chain`` resolves to the Cython extension when it has been built and
``SPARSE_IDS_PURE_PYTHON`` is unset; otherwise to the numpy fallback.
``BACKEND`` names the implementation in use.
"""
import os

from . import _fallback

if os.environ.get("SPARSE_IDS_PURE_PYTHON"):
    _compiled = None
else:
    try:
        from . import _chain as _compiled
    except ImportError:
        _compiled = None

if _compiled is not None:
    run_chain = _compiled.run_chain
    BACKEND = "cython"
else:
    run_chain = _fallback.run_chain
    BACKEND = "python"

STATUS_OK = _fallback.STATUS_OK
STATUS_NONFINITE = _fallback.STATUS_NONFINITE
STATUS_DIVERGED = _fallback.STATUS_DIVERGED

__all__ = ["run_chain", "BACKEND", "STATUS_OK", "STATUS_NONFINITE", "STATUS_DIVERGED"]
