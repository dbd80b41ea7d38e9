"""Backend selection for the hot kernels.

The compiled extension is used when it imports; set ``EXPFAM_PURE_PYTHON=1``
to force the numpy fallback.  ``BACKEND`` names the active one.
"""
from __future__ import annotations

import os

from . import _kernels_py

LOGISTIC = _kernels_py.LOGISTIC
LINEAR = _kernels_py.LINEAR

_impl = _kernels_py
BACKEND = "python"
if os.environ.get("EXPFAM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

soft_threshold = _impl.soft_threshold
project_l1_ball = _impl.project_l1_ball
kkt_residual = _impl.kkt_residual
glm_value_grad = _impl.glm_value_grad
prox_grad_glm = _impl.prox_grad_glm
proximal_gradient = _kernels_py.proximal_gradient

__all__ = [
    "BACKEND",
    "LOGISTIC",
    "LINEAR",
    "soft_threshold",
    "project_l1_ball",
    "kkt_residual",
    "glm_value_grad",
    "prox_grad_glm",
    "proximal_gradient",
]
