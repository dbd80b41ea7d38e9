"""Restricted Fisher eigenvalues, thresholding and the two-stage refit.

The restricted constants of a Fisher matrix ``F`` on a support ``S`` are

    kappa_max = sqrt(lambda_max(F_SS))
    kappa_min = inf { |delta|_F / |delta_S|_2 : |delta_{S^C}|_1 <= 3 |delta_S|_1 }

``kappa_min`` is a nonconvex minimum.  Fixing ``u = delta_S`` with
``|u|_2 = 1`` leaves a convex problem in ``w = delta_{S^C}``:

    min_w  u'F_SS u + 2 w'F_{S^C S} u + w'F_{S^C S^C} w   s.t.  |w|_1 <= 3 |u|_1

so the search is over the ``|S|``-dimensional sphere only.  Every value
returned is attained by some feasible ``delta``, hence an upper bound on the
true infimum.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
import scipy.optimize

from . import kernels
from .errors import SingularSupport, ValidationError
from .families import Dataset, ExponentialFamily, FisherMatrix, ParameterVector, _values
from .solver import FitResult, SolverConfig, fit_l1, fit_restricted

__all__ = [
    "cone_membership",
    "ReConstants",
    "re_constants",
    "threshold_support",
    "TwoStageConfig",
    "TwoStageResult",
    "two_stage_fit",
    "SupportMetrics",
    "support_metrics",
]

CONE_CONSTANT = 3.0
EXACT_MAX_DIM = 6


def _index_set(S, p) -> np.ndarray:
    idx = np.array(sorted({int(i) for i in S}), dtype=np.intp)
    if idx.size and (idx[0] < 0 or idx[-1] >= p):
        raise ValidationError(f"support indices must lie in [0, {p})")
    return idx


def cone_membership(delta, S: Iterable[int], constant: float = CONE_CONSTANT) -> bool:
    """True iff ``|delta_{S^C}|_1 <= constant * |delta_S|_1``."""
    delta = _values(delta)
    on = np.zeros(delta.size, dtype=bool)
    on[_index_set(S, delta.size)] = True
    return bool(np.abs(delta[~on]).sum() <= constant * np.abs(delta[on]).sum())


@dataclass(frozen=True)
class ReConstants:
    kappa_min: float
    kappa_max: float
    support: frozenset
    method: str  # "exact-enumeration" | "randomized-cone-search" | "support-only"
    certificate_samples: int
    # the minimizing direction, for inspection
    witness: Optional[tuple] = None

    def to_dict(self) -> dict:
        return {
            "kappa_min": self.kappa_min,
            "kappa_max": self.kappa_max,
            "support": sorted(self.support),
            "method": self.method,
            "certificate_samples": self.certificate_samples,
            "kappa_min_is_upper_bound": True,
            "witness": None if self.witness is None else list(self.witness),
        }


class _ConeProblem:
    """Inner problem data for a fixed Fisher matrix and support."""

    def __init__(self, F, S, constant):
        F = np.asarray(F, dtype=float)
        p = F.shape[0]
        self.on = _index_set(S, p)
        mask = np.zeros(p, dtype=bool)
        mask[self.on] = True
        self.off = np.flatnonzero(~mask)
        self.A = F[np.ix_(self.on, self.on)]
        self.B = F[np.ix_(self.off, self.on)]
        self.Q = F[np.ix_(self.off, self.off)]
        self.c = float(constant)
        self.p = p
        self._lip = 2.0 * float(np.linalg.eigvalsh(self.Q)[-1]) if self.off.size else 0.0

    def assemble(self, u, w):
        d = np.zeros(self.p)
        d[self.on] = u
        d[self.off] = w
        return d

    # ---- inner solvers --------------------------------------------------- #

    def inner_iterative(self, u, iters=5000, tol=1e-12):
        """FISTA with projection onto the L1 ball and adaptive restart.

        Stops when the Frank-Wolfe duality gap, an upper bound on the
        suboptimality, drops below ``tol`` (relative to ``max(1, |f|)``).
        The previous solution is reused as the starting point.
        """
        if self.off.size == 0:
            return np.zeros(0)
        b = self.B @ u
        r = self.c * np.abs(u).sum()
        if self._lip == 0.0:
            g = 2.0 * b
            return kernels.project_l1_ball(-g / max(np.abs(g).max(), 1e-300) * r, r)
        step = 1.0 / self._lip
        w = getattr(self, "_warm", None)
        w = np.zeros(self.off.size) if w is None else kernels.project_l1_ball(w, r)
        y = w.copy()
        t = 1.0
        for _ in range(iters):
            g = 2.0 * (self.Q @ y + b)
            w_new = kernels.project_l1_ball(y - step * g, r)
            gw = 2.0 * (self.Q @ w_new + b)
            gap = float(gw @ w_new + r * np.max(np.abs(gw)))
            fval = float(w_new @ (self.Q @ w_new) + 2.0 * b @ w_new)
            if gap <= tol * max(1.0, abs(fval)):
                w = w_new
                break
            if float(g @ (w_new - w)) > 0.0:  # momentum points uphill: restart
                t = 1.0
                y = w_new
            else:
                t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
                y = w_new + ((t - 1.0) / t_new) * (w_new - w)
                t = t_new
            w = w_new
        self._warm = w
        return w

    def _faces(self):
        """Linear systems for every face of the L1 ball (active set and signs)."""
        if hasattr(self, "_face_cache"):
            return self._face_cache
        m = self.off.size
        faces = []
        for size in range(1, m + 1):
            for act in itertools.combinations(range(m), size):
                act = np.array(act)
                Qa = self.Q[np.ix_(act, act)]
                for signs in itertools.product((-1.0, 1.0), repeat=size):
                    sg = np.array(signs)
                    K = np.zeros((size + 1, size + 1))
                    K[:size, :size] = Qa
                    K[:size, size] = sg
                    K[size, :size] = sg
                    faces.append((act, sg, np.linalg.pinv(K)))
        self._face_cache = faces
        return faces

    def inner_exact(self, U):
        """Exact inner optimum for each row of ``U`` by enumerating KKT systems.

        Every candidate that is feasible gives an upper bound and the true
        optimum is one of the candidates, so the smallest feasible value is exact.
        """
        U = np.atleast_2d(U)
        n = U.shape[0]
        m = self.off.size
        base = np.einsum("ij,jk,ik->i", U, self.A, U)
        if m == 0:
            return base, np.zeros((n, 0))
        Bu = U @ self.B.T  # (n, m)
        r = self.c * np.abs(U).sum(axis=1)
        best = np.full(n, np.inf)
        best_w = np.zeros((n, m))

        def consider(W):
            feas = np.abs(W).sum(axis=1) <= r * (1.0 + 1e-12) + 1e-15
            val = np.einsum("ij,jk,ik->i", W, self.Q, W) + 2.0 * np.einsum("ij,ij->i", W, Bu)
            take = feas & (val < best)
            best[take] = val[take]
            best_w[take] = W[take]

        consider(np.zeros((n, m)))
        # interior stationary point
        consider(-Bu @ np.linalg.pinv(self.Q).T)
        for act, sg, Kinv in self._faces():
            rhs = np.concatenate([-Bu[:, act], r[:, None]], axis=1)
            sol = rhs @ Kinv.T
            W = np.zeros((n, m))
            W[:, act] = sol[:, :-1]
            consider(W)
        return base + best, best_w

    def ratio_sq(self, u, exact):
        nu = np.linalg.norm(u)
        if nu == 0:
            raise SingularSupport("delta_S = 0 is excluded from the restricted ratio")
        u = u / nu
        if exact:
            val, _ = self.inner_exact(u[None, :])
            return float(val[0])
        w = self.inner_iterative(u)
        return float(u @ self.A @ u + 2.0 * w @ (self.B @ u) + w @ self.Q @ w)


def _sphere_grid(dim: int, per_angle: int) -> np.ndarray:
    """Points on the unit sphere in ``dim`` dimensions, half-sphere (u and -u are equivalent)."""
    if dim == 1:
        return np.ones((1, 1))
    angles = [np.linspace(0.0, np.pi, per_angle, endpoint=False)] * (dim - 1)
    pts = []
    for ang in itertools.product(*angles):
        x = np.ones(dim)
        for i, a in enumerate(ang):
            x[i] *= math.cos(a)
            x[i + 1 :] *= math.sin(a)
        pts.append(x)
    return np.array(pts)


def _polish(prob, starts, exact, evals):
    best_val, best_u = math.inf, None
    for u0 in starts:
        res = scipy.optimize.minimize(
            lambda u: prob.ratio_sq(u, exact),
            u0,
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-15, "maxfev": evals},
        )
        u = res.x / np.linalg.norm(res.x)
        val = prob.ratio_sq(u, exact)
        if val < best_val:
            best_val, best_u = val, u
    return best_val, best_u


def re_constants(
    F,
    S: Iterable[int],
    budget: int = 2000,
    method: str = "auto",
    seed: int = 0,
    constant: float = CONE_CONSTANT,
    restrict_to_support: bool = False,
    polish_starts: int = 5,
) -> ReConstants:
    """Restricted eigenvalue constants of ``F`` on ``S``.

    Parameters
    ----------
    F : FisherMatrix or array
    S : iterable of int
        Support (0-based), nonempty.
    budget : int
        Number of sampled sphere directions for the randomized search.
    method : {"auto", "exact", "randomized"}
        ``auto`` picks exhaustive enumeration when ``p <= 6``.
    restrict_to_support : bool
        Search only ``delta`` supported on ``S`` (then ``kappa_min^2`` is
        ``lambda_min(F_SS)``); for checking the search itself.

    Returns
    -------
    ReConstants
        ``kappa_min`` is an infimum estimate, i.e. an upper bound on the true value.
    """
    F = np.asarray(F.entries if isinstance(F, FisherMatrix) else F, dtype=float)
    if F.ndim != 2 or F.shape[0] != F.shape[1]:
        raise ValidationError("Fisher matrix must be square")
    p = F.shape[0]
    idx = _index_set(S, p)
    if idx.size == 0:
        raise ValidationError("support S must be nonempty")
    prob = _ConeProblem(F, idx, constant)
    kappa_max = math.sqrt(max(float(np.linalg.eigvalsh(prob.A)[-1]), 0.0))
    if method == "auto":
        method = "exact" if p <= EXACT_MAX_DIM else "randomized"
    if method not in ("exact", "randomized"):
        raise ValidationError(f"unknown method {method!r}")
    if restrict_to_support or prob.off.size == 0:
        prob = _ConeProblem(F[np.ix_(idx, idx)], range(idx.size), constant)
    s = idx.size
    rng = np.random.default_rng(seed)
    if method == "exact":
        if prob.p > EXACT_MAX_DIM:
            raise ValidationError(f"exact enumeration is limited to p <= {EXACT_MAX_DIM}")
        per_angle = {1: 1, 2: 720, 3: 96, 4: 28, 5: 14, 6: 9}[s]
        U = _sphere_grid(s, per_angle)
        vals, _ = prob.inner_exact(U)
        order = np.argsort(vals)[:polish_starts]
        best_val, best_u = _polish(prob, U[order], True, 4000)
        samples = U.shape[0]
        label = "exact-enumeration"
    else:
        U = rng.standard_normal((budget, s))
        U = np.vstack([np.eye(s), U / np.linalg.norm(U, axis=1, keepdims=True)])
        vals = np.array([prob.ratio_sq(u, False) for u in U])
        order = np.argsort(vals)[:polish_starts]
        best_val, best_u = _polish(prob, U[order], False, 2000)
        if vals[order[0]] < best_val:
            best_val, best_u = float(vals[order[0]]), U[order[0]]
        samples = U.shape[0]
        label = "randomized-cone-search"
    if restrict_to_support or prob.off.size == 0:
        label = "support-only"
    kappa_min = math.sqrt(max(best_val, 0.0))
    return ReConstants(
        kappa_min=kappa_min,
        kappa_max=kappa_max,
        support=frozenset(idx.tolist()),
        method=label,
        certificate_samples=int(samples),
        witness=None if best_u is None else tuple(float(x) for x in best_u),
    )


# --------------------------------------------------------------------------- #
# Threshold and refit
# --------------------------------------------------------------------------- #


def threshold_support(theta_hat, tau: float) -> frozenset:
    """``{i : |theta_hat_i| > tau}`` (strict inequality)."""
    if tau < 0:
        raise ValidationError("tau must be >= 0")
    return frozenset(np.flatnonzero(np.abs(_values(theta_hat)) > tau).tolist())


@dataclass(frozen=True)
class TwoStageConfig:
    """Threshold-and-refit settings.

    ``tau`` defaults to ``18 lam / kappa_min^2`` when ``kappa_min`` is given;
    with neither, construction fails rather than guessing ``kappa_min``.
    """

    lam: float
    tau: Optional[float] = None
    kappa_min: Optional[float] = None
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(0.0))

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValidationError("lambda must be >= 0")
        if self.tau is None:
            if self.kappa_min is None:
                raise ValidationError("tau needs an explicit value or kappa_min")
            if not self.kappa_min > 0:
                raise ValidationError("kappa_min must be > 0")
            object.__setattr__(self, "tau", 18.0 * self.lam / self.kappa_min**2)
        if not self.tau >= 0:
            raise ValidationError("tau must be >= 0")
        object.__setattr__(self, "solver", self.solver.with_lambda(self.lam))

    def to_dict(self) -> dict:
        return {
            "lambda": float(self.lam),
            "tau": float(self.tau),
            "kappa_min": None if self.kappa_min is None else float(self.kappa_min),
            "solver": self.solver.to_dict(),
        }


@dataclass(frozen=True)
class TwoStageResult:
    stage1: FitResult
    stage2: FitResult
    support: frozenset

    def __iter__(self):
        return iter((self.stage1, self.stage2, self.support))


def two_stage_fit(
    family: ExponentialFamily, data: Dataset, cfg: TwoStageConfig, stage1: Optional[FitResult] = None
) -> TwoStageResult:
    """L1 fit, keep ``|theta_hat_i| > tau``, refit with the rest pinned to 0.

    A stage-1 fit already computed with the same lambda can be passed in.
    """
    if stage1 is None:
        stage1 = fit_l1(family, data, cfg.solver)
    support = threshold_support(stage1.estimate, cfg.tau)
    stage2 = fit_restricted(family, data, cfg.lam, support, cfg.solver)
    return TwoStageResult(stage1, stage2, support)


@dataclass(frozen=True)
class SupportMetrics:
    size: int
    precision: float
    recall: float
    l1_error: float
    l2_error: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def support_metrics(theta_hat, theta_star) -> SupportMetrics:
    """Support size, precision, recall and the L1/L2 distance to ``theta_star``.

    Precision of an empty estimate and recall of an empty truth are 1 (nothing
    wrong was selected / nothing was missed).
    """
    a = _values(theta_hat)
    b = _values(theta_star)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.size} vs {b.size}")
    est = a != 0
    true = b != 0
    hits = int(np.sum(est & true))
    precision = hits / est.sum() if est.any() else 1.0
    recall = hits / true.sum() if true.any() else 1.0
    d = a - b
    return SupportMetrics(
        size=int(est.sum()),
        precision=float(precision),
        recall=float(recall),
        l1_error=float(np.abs(d).sum()),
        l2_error=float(np.linalg.norm(d)),
    )
