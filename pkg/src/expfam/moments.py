"""Moments, cumulants and the analytic standardized constant alpha.

For a direction ``v`` write ``z = <v, t>``.  The standardized ratios are
``m_k / m_2^{k/2}`` (central moments) and ``c_k / c_2^{k/2}`` (cumulants);
``alpha`` is the smallest constant with ``|ratio_k| <= k! alpha^{k-2} / 2``
for every sampled direction and ``3 <= k <= k_max``.

Also here: the truncated regret series in either form, the window in which
the series is certified to converge, and the quadratic sandwich check of the
regret against the Fisher risk.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg

from .errors import DivergenceError, DomainError, ValidationError
from .families import (
    Bernoulli,
    ExponentialFamily,
    GaussianPrecision,
    UnitVarGaussian,
    _GLM,
    _values,
    cumulants_to_moments,
    fisher_risk,
    moments_to_cumulants,
    population_regret,
    sample,
    unpack_symmetric,
)

log = logging.getLogger(__name__)

__all__ = [
    "AllDirections",
    "RestrictedCone",
    "ExplicitDirections",
    "direction_matrix",
    "cumulants_along",
    "central_moments_along",
    "monte_carlo_moments",
    "wishart_cumulant",
    "numeric_derivative",
    "MomentProfile",
    "moment_profile",
    "alpha_from_ratios",
    "fit_alpha",
    "analytic_alpha",
    "SeriesValue",
    "regret_series",
    "series_window",
    "ConvexityReport",
    "sandwich_check",
    "verify_convexity",
    "cumulants_to_moments",
    "moments_to_cumulants",
]

KURTOSIS_FLOOR = 1.0 / math.sqrt(12.0)


# --------------------------------------------------------------------------- #
# Direction sets
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class AllDirections:
    """Uniformly random unit directions."""

    sample_count: int
    seed: int = 0


@dataclass(frozen=True)
class RestrictedCone:
    """Unit directions with ``|v_{S^C}|_1 <= constant * |v_S|_1``.

    The ``|S|`` coordinate axes of the support are always included.  The other
    draws start from a dense Gaussian vector and shrink its off-support block
    to ``min(|g_{S^C}|_1, constant * |g_S|_1 * u)`` with ``u ~ U[0, 1]``, which
    covers both the interior and the boundary of the cone.
    """

    support: frozenset
    sample_count: int
    seed: int = 0
    constant: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "support", frozenset(int(i) for i in self.support))
        if not self.support:
            raise ValidationError("cone directions need a nonempty support")


@dataclass(frozen=True, eq=False)
class ExplicitDirections:
    vectors: np.ndarray

    def __post_init__(self):
        V = np.array(self.vectors, dtype=float)
        if V.ndim == 1:
            V = V[None, :]
        norms = np.linalg.norm(V, axis=1)
        if np.any(norms == 0):
            raise ValidationError("directions must be nonzero")
        V = V / norms[:, None]
        V.setflags(write=False)
        object.__setattr__(self, "vectors", V)


DirectionSet = Union[AllDirections, RestrictedCone, ExplicitDirections]


def direction_matrix(directions: DirectionSet, p: int) -> np.ndarray:
    """Rows are the unit directions of the set, in a deterministic order."""
    if isinstance(directions, ExplicitDirections):
        if directions.vectors.shape[1] != p:
            raise ValidationError(f"directions have length {directions.vectors.shape[1]}, expected {p}")
        return np.array(directions.vectors)
    rng = np.random.default_rng(directions.seed)
    if isinstance(directions, AllDirections):
        G = rng.standard_normal((directions.sample_count, p))
        return G / np.linalg.norm(G, axis=1, keepdims=True)
    S = np.array(sorted(directions.support))
    if S.max() >= p:
        raise ValidationError(f"support index {S.max()} out of range for p={p}")
    on = np.zeros(p, dtype=bool)
    on[S] = True
    rows = [np.eye(p)[i] for i in S]
    for _ in range(directions.sample_count):
        g = rng.standard_normal(p)
        u = rng.random()
        off_mass = np.abs(g[~on]).sum()
        target = min(off_mass, directions.constant * np.abs(g[on]).sum() * u)
        if off_mass > 0:
            g[~on] *= target / off_mass
        rows.append(g / np.linalg.norm(g))
    return np.array(rows)


# --------------------------------------------------------------------------- #
# Cumulants and moments along a direction
# --------------------------------------------------------------------------- #


@lru_cache(maxsize=None)
def _central_weights(k: int, order: int) -> tuple:
    """Central finite-difference weights for the k-th derivative, accuracy ``order``.

    Solved exactly in rationals: a floating-point Vandermonde solve loses
    enough digits to dominate high-order derivative estimates.
    """
    half = (2 * ((k + 1) // 2) - 1 + order) // 2
    nodes = list(range(-half, half + 1))
    n = len(nodes)
    # augmented system sum_j w_j x_j^i = k! [i == k], i = 0..n-1
    rows = [[Fraction(x) ** i for x in nodes] + [Fraction(math.factorial(k) if i == k else 0)] for i in range(n)]
    for c in range(n):
        piv = next(r for r in range(c, n) if rows[r][c] != 0)
        rows[c], rows[piv] = rows[piv], rows[c]
        inv = 1 / rows[c][c]
        rows[c] = [a * inv for a in rows[c]]
        for r in range(n):
            if r != c and rows[r][c] != 0:
                fac = rows[r][c]
                rows[r] = [a - fac * b for a, b in zip(rows[r], rows[c])]
    return tuple(float(x) for x in nodes), tuple(float(rows[i][n]) for i in range(n))


def _fd_derivative(f, k, h_max, order, ratio=1.25, levels=30, depth=4):
    """k-th derivative of ``f`` at 0 by central differences and Richardson extrapolation.

    The stencil is evaluated at ``h_max / ratio^i``.  Each estimate has an
    error expansion in ``h^order, h^(order+2), ...``; a Richardson table of
    ``depth`` columns removes the leading terms, and the entry that agrees
    best with its neighbour is returned.  A ratio close to 1 gives a dense
    ladder of steps, so the trade-off between truncation and rounding error
    is resolved finely.
    """
    nodes, weights = _central_weights(k, order)
    nodes = np.array(nodes)
    weights = np.array(weights)
    col = np.empty(levels)
    for i in range(levels):
        h = h_max / ratio**i
        col[i] = float(weights @ np.array([f(x * h) for x in nodes])) / h**k
    best, best_err = col[-1], math.inf
    for j in range(depth):
        col = col[1:] + (col[1:] - col[:-1]) / (ratio ** (order + 2 * j) - 1.0)
        if col.size < 2:
            break
        if col.size < 3:
            break
        # two consecutive differences, so a sequence that merely crosses
        # the true value is not mistaken for a converged one
        d = np.abs(np.diff(col))
        err = np.maximum(d[1:], d[:-1])
        i = int(np.argmin(err))
        if err[i] < best_err:
            best, best_err = col[i + 1], err[i]
    return float(best)


def numeric_derivative(f, k: int, h_max: float) -> float:
    """k-th derivative at 0 of a smooth scalar function, with accuracy order k + 2 (rounded up to even).

    ``h_max`` times the stencil half-width must stay inside the region where
    ``f`` is analytic.
    """
    order = 2 * ((k + 3) // 2)
    half = (2 * ((k + 1) // 2) - 1 + order) // 2
    return _fd_derivative(f, k, h_max / half, order)


def _numeric_cumulants(family, theta, v, k_max):
    def logz(s):
        return family.log_partition(theta + s * v)

    half = max(_central_weights(k, 2 * ((k + 3) // 2))[0][-1] for k in range(2, k_max + 1))
    h = 0.5 / max(float(np.max(np.abs(v))), 1e-300)
    for _ in range(60):
        if all(family.in_domain(theta + s * v) for s in (-half * h, half * h)):
            break
        h *= 0.5
    else:
        raise DomainError(f"{family.kind}: no finite-difference stencil fits inside the domain")
    base = logz(0.0)
    out = np.empty(k_max - 1)
    for k in range(2, k_max + 1):
        order = 2 * ((k + 3) // 2)  # k + 2 rounded up to even
        out[k - 2] = _fd_derivative(lambda s: logz(s) - base, k, h, order)
    return out


def cumulants_along(family: ExponentialFamily, theta, v, k_max: int, method: str = "closed") -> np.ndarray:
    """Cumulants ``c_2 .. c_{k_max}`` of ``<v, t>`` under ``P(.|theta)``.

    ``method="closed"`` uses the family's exact formula (averaged conditional
    cumulants for GLMs); ``"numeric"`` differentiates
    ``s -> log Z(theta + s v)`` at 0 with high-order central differences,
    shrinking the stencil to stay in the domain and raising ``DomainError``
    if it cannot.
    """
    if k_max < 2:
        raise ValidationError("k_max must be >= 2")
    theta = family.check_domain(theta)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != theta.shape:
        raise ValidationError(f"direction has length {v.size}, expected {theta.size}")
    if method == "closed":
        return np.asarray(family.cumulants_along(theta, v, k_max), dtype=float)
    if method == "numeric":
        return _numeric_cumulants(family, theta, v, k_max)
    raise ValidationError(f"unknown method {method!r}")


def central_moments_along(family: ExponentialFamily, theta, v, k_max: int) -> np.ndarray:
    """Central moments ``m_2 .. m_{k_max}`` of ``<v, t>``.

    Exact where a closed form exists (two-point Bernoulli, Gaussian double
    factorials), otherwise converted from the cumulants.  For GLMs these are
    covariate averages of the conditional central moments.
    """
    if k_max < 2:
        raise ValidationError("k_max must be >= 2")
    theta = family.check_domain(theta)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != theta.shape:
        raise ValidationError(f"direction has length {v.size}, expected {theta.size}")
    return np.asarray(family.central_moments_along(theta, v, k_max), dtype=float)


def monte_carlo_moments(family, theta, v, k_max, n_samples=100000, seed=0):
    """Sample central moments of ``<v, t>`` and their standard errors.

    Centred at the exact mean ``<v, E t>``.  For GLMs this is the
    unconditional moment of ``<v, t>``, not the covariate-averaged
    conditional moment returned by :func:`central_moments_along`.
    """
    theta = family.check_domain(theta)
    v = np.asarray(v, dtype=float)
    data = sample(family, theta, n_samples, seed)
    z = data.sufficient_stats @ v - float(v @ family.mean(theta))
    ks = np.arange(2, k_max + 1)
    powers = z[None, :] ** ks[:, None]
    return powers.mean(axis=1), powers.std(axis=1, ddof=1) / math.sqrt(n_samples)


def wishart_cumulant(precision, V, k: int) -> float:
    """k-th cumulant of ``Y^T V Y`` with ``Y ~ N(0, precision^{-1})``.

    ``c_k = 2^{k-1} (k-1)! sum_i lambda_i^k`` with ``lambda`` the eigenvalues
    of ``V precision^{-1}``.
    """
    P = np.atleast_2d(np.asarray(precision, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if k < 2:
        raise ValidationError("k must be >= 2")
    if P.shape != V.shape or P.shape[0] != P.shape[1]:
        raise ValidationError("precision and V must be square and of equal size")
    try:
        L = scipy.linalg.cholesky(0.5 * (P + P.T), lower=True)
    except np.linalg.LinAlgError as exc:
        raise DomainError("precision matrix is not positive definite") from exc
    A = scipy.linalg.solve_triangular(L, 0.5 * (V + V.T), lower=True)
    A = scipy.linalg.solve_triangular(L, A.T, lower=True)
    lam = np.linalg.eigvalsh(0.5 * (A + A.T))
    return float(2.0 ** (k - 1) * math.factorial(k - 1) * np.sum(lam**k))


# --------------------------------------------------------------------------- #
# Profiles and alpha
# --------------------------------------------------------------------------- #


def alpha_from_ratios(ratios) -> float:
    """``max_k (2 |r_k| / k!)^{1/(k-2)}`` for ratios ``r_3 .. r_K``."""
    best = 0.0
    for k, r in enumerate(np.asarray(ratios, dtype=float), start=3):
        if r != 0.0:
            best = max(best, (2.0 * abs(r) / math.factorial(k)) ** (1.0 / (k - 2)))
    return best


def _standardize(values):
    """Ratios ``x_k / x_2^{k/2}`` for k >= 3, or None when ``x_2 <= 0``."""
    x2 = values[0]
    if not x2 > 0:
        return None
    ks = np.arange(3, len(values) + 2)
    return values[1:] / x2 ** (ks / 2.0)


@dataclass(frozen=True, eq=False)
class MomentProfile:
    direction: np.ndarray
    central_moments: np.ndarray  # m_2 .. m_K
    cumulants: np.ndarray  # c_2 .. c_K
    k_max: int
    alpha_moment: float
    alpha_cumulant: float

    @property
    def degenerate(self) -> bool:
        return not self.central_moments[0] > 0

    @property
    def moment_ratios(self) -> Optional[np.ndarray]:
        return _standardize(self.central_moments)

    @property
    def cumulant_ratios(self) -> Optional[np.ndarray]:
        return _standardize(self.cumulants)

    def to_dict(self) -> dict:
        mr, cr = self.moment_ratios, self.cumulant_ratios
        return {
            "direction": self.direction.tolist(),
            "central_moments": self.central_moments.tolist(),
            "cumulants": self.cumulants.tolist(),
            "moment_ratios": None if mr is None else mr.tolist(),
            "cumulant_ratios": None if cr is None else cr.tolist(),
            "alpha_moment": self.alpha_moment,
            "alpha_cumulant": self.alpha_cumulant,
        }


def moment_profile(family, theta, v, k_max: int = 8, method: str = "closed") -> MomentProfile:
    """Moments, cumulants and both per-direction alpha values along ``v``."""
    c = cumulants_along(family, theta, v, k_max, method)
    m = central_moments_along(family, theta, v, k_max) if method == "closed" else cumulants_to_moments(c)
    mr, cr = _standardize(m), _standardize(c)
    a_m = 0.0 if mr is None else alpha_from_ratios(mr)
    a_c = 0.0 if cr is None else alpha_from_ratios(cr)
    if mr is None:
        log.info("degenerate direction (m_2 = 0) skipped in alpha fit")
    return MomentProfile(np.asarray(v, dtype=float), m, c, int(k_max), a_m, a_c)


def fit_alpha(
    family: ExponentialFamily,
    theta,
    directions: DirectionSet,
    k_max: int = 8,
    mode: str = "cumulant",
    method: str = "closed",
    return_profiles: bool = False,
):
    """Smallest alpha for which every sampled direction meets the growth bound up to ``k_max``.

    Directions with zero variance contribute nothing.  With
    ``return_profiles`` the per-direction :class:`MomentProfile` list is
    returned alongside the value.
    """
    if k_max < 3:
        raise ValidationError("k_max must be >= 3")
    if mode not in ("moment", "cumulant"):
        raise ValidationError(f"mode must be 'moment' or 'cumulant', got {mode!r}")
    theta = family.check_domain(theta)
    V = direction_matrix(directions, family.dimension)
    profiles = [moment_profile(family, theta, v, k_max, method) for v in V]
    attr = "alpha_moment" if mode == "moment" else "alpha_cumulant"
    alpha = max((getattr(pr, attr) for pr in profiles), default=0.0)
    return (alpha, profiles) if return_profiles else alpha


def analytic_alpha(family: ExponentialFamily, theta, v=None, mode: str = "cumulant", kappa_min=None) -> float:
    """A closed-form alpha valid for all orders k along ``v`` (or all directions).

    Bernoulli: ``|v|_inf / sqrt(v^T F v)`` for cumulants; for a single
    coordinate ``1/sqrt(m_2)`` also bounds the moments.  Unit-variance
    Gaussian: 0 for cumulants, 1 for moments.  Gaussian precision: sqrt(2)
    for cumulants.  GLMs: ``B / lambda_min`` of the Fisher matrix, or
    ``B / kappa_min`` when a restricted constant is supplied.
    """
    theta = family.check_domain(theta)
    if isinstance(family, UnitVarGaussian):
        return 0.0 if mode == "cumulant" else 1.0
    if isinstance(family, GaussianPrecision):
        if mode == "cumulant":
            return math.sqrt(2.0)
    elif isinstance(family, Bernoulli):
        F = np.diag(family.fisher(theta))
        if v is None:
            return float(1.0 / np.sqrt(F.min()))
        v = np.asarray(v, dtype=float)
        m2 = float(np.sum(v * v * F))
        if mode == "cumulant" or np.count_nonzero(v) == 1:
            return float(np.max(np.abs(v)) / math.sqrt(m2))
    elif isinstance(family, _GLM):
        B = family.stat_bound
        if B is not None:
            if kappa_min is not None:
                return float(B / kappa_min)
            return float(B / np.linalg.eigvalsh(family.fisher(theta))[0])
    raise ValidationError(f"no closed-form alpha for {family.kind} in {mode} mode")


# --------------------------------------------------------------------------- #
# Regret series
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class SeriesValue:
    value: float
    tail_bound: float
    k_max: int
    mode: str


def _envelope_tail(s, m2, alpha, k_max):
    """Sum over k > k_max of ``s^2 m_2 (s alpha sqrt(m_2))^{k-2} / 2``."""
    r = s * alpha * math.sqrt(max(m2, 0.0))
    if r >= 1.0:
        return math.inf
    if r == 0.0:
        return 0.0
    return 0.5 * s * s * m2 * r ** (k_max - 1) / (1.0 - r)


def regret_series(coefficients, s: float, mode: str = "cumulant", alpha: Optional[float] = None, tol: float = math.inf) -> SeriesValue:
    """Truncated series for the regret at ``theta* + s * delta``.

    ``coefficients`` are ``c_2..c_K`` (cumulant mode) or ``m_2..m_K`` (moment
    mode) of ``<delta, t>``.  Cumulant mode returns ``sum c_k s^k / k!``;
    moment mode returns ``log(1 + sum m_k s^k / k!)``.  The tail bound comes
    from the alpha growth envelope and is infinite when ``alpha`` is None.

    Raises
    ------
    DivergenceError
        If the tail bound exceeds ``tol``.  The bound is infinite when
        ``s * alpha * sqrt(m_2) >= 1``, so any finite ``tol`` rejects
        points outside the certified window.
    """
    if not 0.0 <= s <= 1.0:
        raise ValidationError("s must lie in [0, 1]")
    if mode not in ("moment", "cumulant"):
        raise ValidationError(f"mode must be 'moment' or 'cumulant', got {mode!r}")
    coef = np.asarray(coefficients, dtype=float)
    K = coef.size + 1
    ks = np.arange(2, K + 1)
    fact = np.array([math.factorial(int(k)) for k in ks], dtype=float)
    terms = coef * s**ks / fact
    partial = float(np.sum(terms))
    m2 = float(coef[0]) if coef.size else 0.0
    if alpha is None:
        tail = 0.0 if s == 0.0 else math.inf
    else:
        tail = _envelope_tail(s, m2, alpha, K)
    if mode == "cumulant":
        value = partial
    else:
        value = math.log1p(partial)
        if math.isfinite(tail):
            slack = 1.0 + partial - tail
            tail = tail / slack if slack > 0 else math.inf
    if tail > tol:
        raise DivergenceError(
            f"truncation tail bound {tail:.3g} exceeds tolerance {tol:.3g} at s={s}"
            + ("" if math.isfinite(tail) else " (outside the certified window)")
        )
    return SeriesValue(value, tail, K, mode)


def series_window(m2: float, alpha: float):
    """Certified evaluation point and bracket for the series.

    ``s* = min(1 / (4 alpha sqrt(m2)), 1)``; the series at ``s*`` lies in
    ``(1/3, 2/3) * m2 / max(16 alpha^2 m2, 1)``.
    """
    if m2 < 0 or alpha < 0:
        raise ValidationError("m2 and alpha must be >= 0")
    if m2 == 0:
        return 1.0, 0.0, 0.0
    s_star = 1.0 if alpha == 0 else min(1.0 / (4.0 * alpha * math.sqrt(m2)), 1.0)
    scale = m2 / max(16.0 * alpha * alpha * m2, 1.0)
    return s_star, scale / 3.0, 2.0 * scale / 3.0


# --------------------------------------------------------------------------- #
# Quadratic sandwich
# --------------------------------------------------------------------------- #

# Relative slack in the sandwich comparison, absorbing rounding in regret and risk.
SANDWICH_RTOL = 1e-9


@dataclass(frozen=True)
class ConvexityReport:
    fisher_risk: float
    regret: float
    precondition_loss: bool
    precondition_fisher: bool
    ratio: float
    ratio_defined: bool
    sandwich_holds: bool

    @property
    def applicable(self) -> bool:
        return self.precondition_loss or self.precondition_fisher

    @property
    def violation(self) -> bool:
        return self.applicable and self.ratio_defined and not self.sandwich_holds

    def to_dict(self) -> dict:
        return {
            "fisher_risk": self.fisher_risk,
            "regret": self.regret,
            "precondition_loss": self.precondition_loss,
            "precondition_fisher": self.precondition_fisher,
            "ratio": self.ratio,
            "ratio_defined": self.ratio_defined,
            "sandwich_holds": self.sandwich_holds,
            "applicable": self.applicable,
        }


def sandwich_check(family: ExponentialFamily, theta_star, theta, alpha: float, fisher=None) -> ConvexityReport:
    """Compare the regret with the Fisher risk around ``theta_star``.

    The preconditions are ``regret <= 1/(65 alpha^2)`` and
    ``fisher_risk <= 1/(16 alpha^2)`` (both always true for ``alpha = 0``).
    ``sandwich_holds`` records whether ``fisher_risk/4 <= regret <= 3 fisher_risk/4``;
    it only counts as a violation when a precondition holds.
    """
    if alpha < 0:
        raise ValidationError("alpha must be >= 0")
    theta_star = family.check_domain(theta_star)
    theta = family.check_domain(theta)
    F = family.fisher(theta_star) if fisher is None else np.asarray(fisher, dtype=float)
    fr = fisher_risk(F, theta, theta_star)
    reg = population_regret(family, theta, theta_star)
    a2 = alpha * alpha
    pre_loss = a2 == 0 or reg <= 1.0 / (65.0 * a2)
    pre_fisher = a2 == 0 or fr <= 1.0 / (16.0 * a2)
    if fr > 0:
        ratio = reg / fr
        slack = SANDWICH_RTOL * fr
        holds = 0.25 * fr - slack <= reg <= 0.75 * fr + slack
        defined = True
    else:
        ratio, holds, defined = math.nan, reg == 0.0, False
    return ConvexityReport(fr, reg, bool(pre_loss), bool(pre_fisher), ratio, defined, bool(holds))


def verify_convexity(
    family: ExponentialFamily,
    theta_star,
    alpha: float,
    cases: int = 1000,
    seed=0,
    radius_range=(0.01, 2.0),
    bins: int = 20,
) -> dict:
    """Run :func:`sandwich_check` on random perturbations of ``theta_star``.

    Each case picks a Gaussian direction ``d`` with ``|d|_F = 1`` and a squared
    Fisher radius ``f / (16 alpha^2)`` (``f`` when ``alpha = 0``), with ``f``
    log-uniform on ``radius_range``, so cases fall on both sides of the
    threshold.  Points outside the parameter space are counted and skipped.
    """
    if cases < 1:
        raise ValidationError("cases must be >= 1")
    lo, hi = radius_range
    if not 0 < lo <= hi:
        raise ValidationError("radius range must satisfy 0 < lo <= hi")
    theta_star = family.check_domain(theta_star)
    F = family.fisher(theta_star)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    unit = 1.0 / (16.0 * alpha * alpha) if alpha > 0 else 1.0
    ratios, applicable, skipped, violations, below, above = [], 0, 0, 0, 0, 0
    worst = {"min_ratio": math.inf, "max_ratio": -math.inf}
    for _ in range(cases):
        frac = math.exp(rng.uniform(math.log(lo), math.log(hi)))
        d = rng.standard_normal(theta_star.size)
        norm2 = float(d @ F @ d)
        if norm2 <= 0:
            skipped += 1
            continue
        theta = theta_star + math.sqrt(frac * unit / norm2) * d
        if not family.in_domain(theta):
            skipped += 1
            continue
        below += frac <= 1.0
        above += frac > 1.0
        rep = sandwich_check(family, theta_star, theta, alpha, fisher=F)
        if not rep.applicable:
            continue
        applicable += 1
        violations += rep.violation
        if rep.ratio_defined:
            ratios.append(rep.ratio)
            worst["min_ratio"] = min(worst["min_ratio"], rep.ratio)
            worst["max_ratio"] = max(worst["max_ratio"], rep.ratio)
    counts, edges = np.histogram(ratios, bins=bins, range=(0.0, 1.0))
    return {
        "kind": family.kind,
        "alpha": float(alpha),
        "cases": int(cases),
        "evaluated": int(cases - skipped),
        "out_of_domain": int(skipped),
        "below_threshold": int(below),
        "above_threshold": int(above),
        "applicable": int(applicable),
        "not_applicable": int(cases - skipped - applicable),
        "violations": int(violations),
        "min_ratio": worst["min_ratio"] if ratios else math.nan,
        "max_ratio": worst["max_ratio"] if ratios else math.nan,
        "histogram": {"edges": [round(e, 12) for e in edges.tolist()], "counts": counts.tolist()},
    }
