"""Backend selection for the hot loops.

The compiled extension ``phasescope._kernels`` is used when it imports;
otherwise (or when ``PHASESCOPE_PURE_PYTHON=1``) the NumPy fallback in
``phasescope._pykernels`` is used. Both expose the same three functions.
"""

from __future__ import annotations

import os

from . import _pykernels

python_backend = _pykernels

if os.environ.get("PHASESCOPE_PURE_PYTHON", "") not in ("", "0"):
    compiled_backend = None
else:
    try:
        from . import _kernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

backend = compiled_backend or python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

split_step = backend.split_step
euler_maruyama = backend.euler_maruyama
render_lorentzians = backend.render_lorentzians

STATUS_OK = _pykernels.STATUS_OK
STATUS_NORM_COLLAPSE = _pykernels.STATUS_NORM_COLLAPSE
STATUS_NONFINITE = _pykernels.STATUS_NONFINITE


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` ('cython', 'python' or None for the default)."""
    if name is None:
        return backend
    if name == "python":
        return python_backend
    if name == "cython":
        if compiled_backend is None:
            raise ImportError("compiled kernels are not available")
        return compiled_backend
    raise ValueError(f"unknown backend {name!r}")
