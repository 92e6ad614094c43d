"""Kernel backend selection.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``NBVPOSE_PURE_PYTHON`` is set to a non-empty value
other than ``0``, the NumPy implementation is used. ``BACKEND`` names the
active choice.
"""

import os

from . import _kernels_py

if os.environ.get("NBVPOSE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "compiled" if _impl is not _kernels_py else "python"
energy_grad = _impl.energy_grad
hessian = _impl.hessian


def backends():
    """All importable backends, keyed by name."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        found["compiled"] = _kernels
    return found
