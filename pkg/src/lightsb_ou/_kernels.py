"""Backend selection for the hot kernels.

The compiled ``_core`` extension is used when it imports; otherwise the numpy
fallback.  Setting ``LIGHTSB_OU_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("LIGHTSB_OU_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

mixture_loss_grad = _impl.mixture_loss_grad
mean_pairwise_distance = _impl.mean_pairwise_distance
mean_pairwise_gaussian = _impl.mean_pairwise_gaussian
