"""Numeric kernel backends.

The compiled Cython core is preferred when built; a pure Python fallback
keeps the package importable without a C toolchain. Selection happens once
at import time and can be forced with SONGSMITH_KERNELS={c,py}.
"""

import os
import warnings

from . import _slow

_forced = os.environ.get("SONGSMITH_KERNELS", "").strip().lower()
_impl = None

if _forced not in ("", "c", "py"):
    raise ImportError(f"SONGSMITH_KERNELS must be 'c' or 'py', got {_forced!r}")

if _forced != "py":
    try:
        from . import _fast as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = None

if _impl is None:
    if _forced == "c":
        raise ImportError("SONGSMITH_KERNELS=c but the compiled kernel module is "
                          "not built; run: python setup.py build_ext --inplace")
    if _forced != "py":
        warnings.warn("compiled kernels unavailable; falling back to the slow pure "
                      "Python versions (build with: python setup.py build_ext --inplace)",
                      RuntimeWarning, stacklevel=2)
    _impl = _slow

BACKEND = "python" if _impl is _slow else "c"

lstm_gates_forward = _impl.lstm_gates_forward
lstm_gates_backward = _impl.lstm_gates_backward
sgns_epoch = _impl.sgns_epoch
