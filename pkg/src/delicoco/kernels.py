"""Backend selection for the hot numerical kernels.

The compiled extension is used when it was built and importable; otherwise
the numpy implementations are used. Set ``DELICOCO_PURE_PYTHON=1`` to force
the numpy path.
"""
import os

from delicoco import _pykernels

try:
    if os.environ.get("DELICOCO_PURE_PYTHON"):
        raise ImportError("pure python backend requested")
    from delicoco import _kernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

splitmix64_block = _impl.splitmix64_block
jacobi_eigenvalues = _impl.jacobi_eigenvalues
topk_mask = _impl.topk_mask
qsgd_quantize = _impl.qsgd_quantize

__all__ = [
    "BACKEND",
    "splitmix64_block",
    "jacobi_eigenvalues",
    "topk_mask",
    "qsgd_quantize",
]
