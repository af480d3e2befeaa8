"""Kernel backend selection.

The compiled extension is used when importable; set ``ROAR_PURE_PYTHON=1``
to force the numpy fallback.
"""
import importlib
import os

from roar import _pykernels

if os.environ.get("ROAR_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from roar import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

mlp_forward = _impl.mlp_forward
mlp_backward = _impl.mlp_backward
convolve_full = _impl.convolve_full
linear_resample = _impl.linear_resample
ola_stretch = _impl.ola_stretch


def get_backend(name):
    """Return the kernel module for ``name`` ("cython" or "python")."""
    if name == "python":
        return _pykernels
    if name == "cython":
        return importlib.import_module("roar._ckernels")
    raise ValueError(f"unknown kernel backend {name!r}")
