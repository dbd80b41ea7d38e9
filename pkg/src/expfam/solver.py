"""L1-regularized maximum likelihood by proximal gradient.

Solves ``min_theta  nll(theta) + lam * |theta|_1`` and the same problem with
the coordinates outside a given support pinned to zero.  Convergence is
declared on the KKT residual, never on objective change.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from . import kernels
from .errors import DomainError, ValidationError
from .families import (
    Dataset,
    ExponentialFamily,
    GaussianPrecision,
    LinearGLM,
    LogisticGLM,
    ParameterVector,
    _values,
    grad_nll,
    nll,
)

__all__ = [
    "SolverConfig",
    "FitResult",
    "soft_threshold",
    "objective",
    "kkt_residual",
    "fit_l1",
    "fit_restricted",
]


@dataclass(frozen=True)
class SolverConfig:
    """Proximal-gradient settings.

    Parameters
    ----------
    lam : float
        Regularization weight (``lambda`` in config files).
    max_iters : int
        Iteration cap; hitting it returns the last iterate with ``converged=False``.
    tol_kkt : float
        KKT residual at which the fit is declared converged.
    shrink : float
        Backtracking factor in (0, 1).
    step0 : float
        Initial step size.
    accelerate : bool
        FISTA momentum with restart-on-increase.
    """

    lam: float
    max_iters: int = 10000
    tol_kkt: float = 1e-6
    shrink: float = 0.5
    step0: float = 1.0
    accelerate: bool = False

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValidationError("lambda must be finite and >= 0")
        if not 0 < self.shrink < 1:
            raise ValidationError("backtracking shrink factor must lie in (0, 1)")
        if not self.tol_kkt > 0:
            raise ValidationError("tol_kkt must be > 0")
        if self.step0 <= 0:
            raise ValidationError("initial step must be > 0")
        if int(self.max_iters) < 1:
            raise ValidationError("max_iters must be >= 1")

    def with_lambda(self, lam: float) -> "SolverConfig":
        return SolverConfig(lam, self.max_iters, self.tol_kkt, self.shrink, self.step0, self.accelerate)

    def to_dict(self) -> dict:
        return {
            "lambda": float(self.lam),
            "max_iters": int(self.max_iters),
            "tol_kkt": float(self.tol_kkt),
            "shrink": float(self.shrink),
            "step0": float(self.step0),
            "accelerate": bool(self.accelerate),
        }


@dataclass(frozen=True, eq=False)
class FitResult:
    estimate: ParameterVector
    objective_trace: np.ndarray
    kkt_residual: float
    iterations: int
    converged: bool
    lam: float
    restricted_support: Optional[frozenset] = None
    # GaussianPrecision only: smallest eigenvalue of the estimated precision
    boundary_distance: Optional[float] = None

    def to_dict(self) -> dict:
        out = {
            "estimate": self.estimate.values.tolist(),
            "support": sorted(self.estimate.support),
            "lambda": float(self.lam),
            "objective_trace": [float(v) for v in self.objective_trace],
            "kkt_residual": float(self.kkt_residual),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }
        if self.restricted_support is not None:
            out["restricted_support"] = sorted(self.restricted_support)
        if self.boundary_distance is not None:
            out["boundary_distance"] = float(self.boundary_distance)
        return out


def soft_threshold(x, tau: float):
    """``sign(x) * max(|x| - tau, 0)`` componentwise."""
    if tau < 0:
        raise ValidationError("threshold must be >= 0")
    return kernels.soft_threshold(np.asarray(x, dtype=float), float(tau))


def objective(family: ExponentialFamily, data: Dataset, lam: float, theta) -> float:
    """``nll(theta) + lam * |theta|_1``."""
    theta = _values(theta)
    return nll(family, theta, data) + lam * float(np.abs(theta).sum())


def kkt_residual(family, data, theta, lam, support: Optional[Iterable[int]] = None) -> float:
    """Largest violation of the L1 optimality conditions, optionally over ``support`` only."""
    theta = _values(theta)
    g = grad_nll(family, theta, data)
    mask = None if support is None else _mask(support, family.dimension)
    return kernels.kkt_residual(g, theta, float(lam), mask)


def _mask(support, p):
    mask = np.zeros(p, dtype=np.uint8)
    idx = np.fromiter((int(i) for i in support), dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= p):
        raise ValidationError(f"support indices must lie in [0, {p})")
    mask[idx] = 1
    return mask


def _glm_link(family):
    if isinstance(family, LogisticGLM):
        return kernels.LOGISTIC
    if isinstance(family, LinearGLM):
        return kernels.LINEAR
    return None


def _solve(family, data, config, mask, theta0):
    if data.dimension != family.dimension:
        raise ValidationError(
            f"dataset has {data.dimension} columns, family dimension is {family.dimension}"
        )
    p = family.dimension
    if theta0 is None:
        theta0 = family.initial_point()
    theta0 = np.array(_values(theta0), dtype=float)
    if mask is not None:
        theta0[mask == 0] = 0.0
    if not family.in_domain(theta0):
        raise DomainError(f"{family.kind}: initial point is outside the parameter space")
    lam = float(config.lam)
    link = _glm_link(family)
    if link is not None:
        if data.covariates is None:
            raise ValidationError(f"{family.kind}: dataset has no covariate columns")
        out = kernels.prox_grad_glm(
            data.covariates,
            data.mean_stat,
            link,
            lam,
            theta0,
            mask,
            int(config.max_iters),
            float(config.tol_kkt),
            float(config.step0),
            float(config.shrink),
            bool(config.accelerate),
        )
    else:
        tbar = data.mean_stat

        def value(th):
            return family.empirical_log_partition(th, data) - float(th @ tbar)

        def grad(th):
            return family.empirical_mean(th, data) - tbar

        in_domain = family.in_domain if isinstance(family, GaussianPrecision) else None
        out = kernels.proximal_gradient(
            value,
            grad,
            theta0,
            lam,
            None if mask is None else mask.astype(bool),
            in_domain,
            int(config.max_iters),
            float(config.tol_kkt),
            float(config.step0),
            float(config.shrink),
            bool(config.accelerate),
        )
    theta, trace, kkt, iters, converged = out
    theta = np.asarray(theta, dtype=float)
    theta[theta == 0] = 0.0  # normalize -0.0
    boundary = None
    if isinstance(family, GaussianPrecision):
        boundary = float(np.linalg.eigvalsh(family.matrix(theta))[0])
    return FitResult(
        estimate=ParameterVector.annotated(theta),
        objective_trace=np.asarray(trace, dtype=float),
        kkt_residual=float(kkt),
        iterations=int(iters),
        converged=bool(converged),
        lam=lam,
        restricted_support=None
        if mask is None
        else frozenset(np.flatnonzero(mask).tolist()),
        boundary_distance=boundary,
    )


def fit_l1(family: ExponentialFamily, data: Dataset, config: SolverConfig, theta0=None) -> FitResult:
    """L1-regularized MLE.

    Starts from 0 (``1e-3 * I`` for a precision matrix).  Every accepted
    iterate stays inside the parameter space.  If ``max_iters`` is reached the
    last iterate is returned with ``converged=False``.
    """
    return _solve(family, data, config, None, theta0)


def fit_restricted(
    family: ExponentialFamily,
    data: Dataset,
    lam: float,
    allowed_support: Iterable[int],
    config: SolverConfig,
    theta0=None,
) -> FitResult:
    """Same problem with every coordinate outside ``allowed_support`` fixed at 0."""
    mask = _mask(allowed_support, family.dimension)
    return _solve(family, data, config.with_lambda(lam), mask, theta0)
