"""Backend selection for the hot kernels.

The compiled Cython module is used when it imports cleanly; otherwise the
NumPy fallback is used. Set ``LADDERLAB_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("LADDERLAB_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

hermite_eval = _impl.hermite_eval
hermite_sum = _impl.hermite_sum
phase_sum = _impl.phase_sum

__all__ = ["BACKEND", "hermite_eval", "hermite_sum", "phase_sum"]
