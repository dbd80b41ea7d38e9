"""Exponential families in natural form.

Every family here is written as ``P(t|theta) = h_t exp{<theta, t> - log Z(theta)}``
and exposes its log-partition function, mean and covariance of the sufficient
statistic, a sampler, and closed-form cumulants/central moments of the
projection ``<v, t>``.

Constant offsets that do not depend on ``theta`` (the base measure ``h_t``,
``(p/2) log 2pi`` and so on) are dropped from ``log Z`` everywhere; only
differences in ``theta`` enter any downstream quantity.

Families
--------
Bernoulli(p)
    ``p`` independent Bernoulli coordinates, ``log Z = sum log(1 + e^theta_i)``.
UnitVarGaussian(p)
    ``p`` independent unit-variance Gaussians, ``log Z = |theta|^2 / 2``.
GaussianPrecision(p)
    Zero-mean Gaussian parameterized by its precision matrix, stored packed
    (upper triangle, row major).  ``t = -YY^T / 2`` so ``log Z = -log det(Theta)/2``.
LogisticGLM(p, covariates), LinearGLM(p, covariates)
    Generalized linear models with ``t = y X`` and ``Z_X(theta) = Z(<theta, X>)``.
    Population expectations average over the configured covariate source.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.special import expit, log1p, expm1

from .errors import DomainError, ValidationError

__all__ = [
    "ParameterVector",
    "Dataset",
    "FisherMatrix",
    "ExponentialFamily",
    "Bernoulli",
    "UnitVarGaussian",
    "GaussianPrecision",
    "LogisticGLM",
    "LinearGLM",
    "FixedDesign",
    "TruncatedGaussianDesign",
    "pack_symmetric",
    "unpack_symmetric",
    "bernoulli_cumulants",
    "bernoulli_central_moments",
    "cumulants_to_moments",
    "moments_to_cumulants",
    "log_partition",
    "mean_sufficient_stat",
    "fisher_information",
    "nll",
    "grad_nll",
    "population_regret",
    "fisher_risk",
    "sample",
    "family_from_spec",
]


# --------------------------------------------------------------------------- #
# Value types
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class ParameterVector:
    """A natural parameter with an optional support annotation.

    If ``support`` is given it must equal ``{i : values[i] != 0}`` exactly.
    """

    values: np.ndarray
    support: Optional[frozenset] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.support is not None:
            support = frozenset(int(i) for i in self.support)
            nonzero = frozenset(np.flatnonzero(values).tolist())
            if support != nonzero:
                raise ValidationError(
                    f"support annotation {sorted(support)} does not match "
                    f"nonzero coordinates {sorted(nonzero)}"
                )
            object.__setattr__(self, "support", support)

    @classmethod
    def annotated(cls, values) -> "ParameterVector":
        values = np.asarray(values, dtype=float).reshape(-1)
        return cls(values, frozenset(np.flatnonzero(values).tolist()))

    @property
    def dimension(self) -> int:
        return self.values.shape[0]

    @property
    def sparsity(self) -> int:
        return int(np.count_nonzero(self.values))

    def __len__(self):
        return self.dimension


@dataclass(frozen=True, eq=False)
class Dataset:
    """``n`` rows of sufficient statistics (and, for GLMs, the covariates)."""

    sufficient_stats: np.ndarray
    covariates: Optional[np.ndarray] = None

    def __post_init__(self):
        stats = np.array(self.sufficient_stats, dtype=float)
        if stats.ndim == 1:
            stats = stats[:, None]
        if stats.ndim != 2 or stats.shape[0] < 1:
            raise ValidationError("dataset needs at least one row (n >= 1)")
        stats.setflags(write=False)
        object.__setattr__(self, "sufficient_stats", stats)
        if self.covariates is not None:
            cov = np.array(self.covariates, dtype=float)
            if cov.shape != stats.shape:
                raise ValidationError(
                    f"covariates shape {cov.shape} does not match statistics {stats.shape}"
                )
            cov.setflags(write=False)
            object.__setattr__(self, "covariates", cov)
        tbar = stats.mean(axis=0)
        tbar.setflags(write=False)
        object.__setattr__(self, "mean_stat", tbar)

    @property
    def n(self) -> int:
        return self.sufficient_stats.shape[0]

    @property
    def dimension(self) -> int:
        return self.sufficient_stats.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        same_cov = (self.covariates is None and other.covariates is None) or (
            self.covariates is not None
            and other.covariates is not None
            and np.array_equal(self.covariates, other.covariates)
        )
        return same_cov and np.array_equal(self.sufficient_stats, other.sufficient_stats)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class FisherMatrix:
    """Symmetric positive semidefinite ``p x p`` matrix."""

    entries: np.ndarray

    def __post_init__(self):
        F = np.array(self.entries, dtype=float)
        if F.ndim != 2 or F.shape[0] != F.shape[1]:
            raise ValidationError(f"Fisher matrix must be square, got shape {F.shape}")
        asym = np.max(np.abs(F - F.T)) if F.size else 0.0
        if asym > 1e-12 * max(1.0, np.max(np.abs(F))):
            raise ValidationError(f"Fisher matrix not symmetric (max asymmetry {asym:.3g})")
        F = 0.5 * (F + F.T)
        if F.size:
            lo = np.linalg.eigvalsh(F)[0]
            if lo < -1e-9 * max(np.trace(F), 1e-300):
                raise ValidationError(f"Fisher matrix not PSD (min eigenvalue {lo:.3g})")
        F.setflags(write=False)
        object.__setattr__(self, "entries", F)

    @property
    def dimension(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


def _values(theta) -> np.ndarray:
    if isinstance(theta, ParameterVector):
        return theta.values
    return np.asarray(theta, dtype=float).reshape(-1)


# --------------------------------------------------------------------------- #
# Scalar link families: cumulants and central moments
# --------------------------------------------------------------------------- #

# Above this order the float evaluation of the Bernoulli cumulant polynomials
# loses all digits to cancellation.
_FLOAT_CUMULANT_ORDER = 14


@lru_cache(maxsize=None)
def _bernoulli_cumulant_poly(k: int) -> tuple:
    """Integer coefficients (increasing powers of mu) of the k-th Bernoulli cumulant.

    kappa_1 = mu and d mu / d eta = mu (1 - mu), so
    kappa_{k+1}(mu) = kappa_k'(mu) * (mu - mu^2).
    """
    if k == 1:
        return (0, 1)
    prev = _bernoulli_cumulant_poly(k - 1)
    deriv = [i * c for i, c in enumerate(prev)][1:]
    out = [0] * (len(deriv) + 2)
    for i, c in enumerate(deriv):
        out[i + 1] += c
        out[i + 2] -= c
    while len(out) > 1 and out[-1] == 0:
        out.pop()
    return tuple(out)


def _poly_mp(coeffs, mu):
    import mpmath

    acc = mpmath.mpf(0)
    for c in reversed(coeffs):
        acc = acc * mu + c
    return acc


def bernoulli_cumulants(eta, k_max: int) -> np.ndarray:
    """Cumulants ``kappa_2 .. kappa_{k_max}`` of a Bernoulli variable with natural parameter ``eta``.

    Returns an array of shape ``(k_max - 1,) + eta.shape``.
    """
    eta = np.asarray(eta, dtype=float)
    # kappa_k(-eta) = (-1)^k kappa_k(eta); evaluating at the smaller of mu, 1 - mu
    # keeps the polynomial dominated by its low-order terms.
    flip = eta > 0
    mu = expit(-np.abs(eta))
    out = np.empty((k_max - 1,) + eta.shape)
    for k in range(2, k_max + 1):
        coeffs = _bernoulli_cumulant_poly(k)
        if k <= _FLOAT_CUMULANT_ORDER:
            val = np.polynomial.polynomial.polyval(mu, np.array(coeffs, dtype=float))
            out[k - 2] = np.where(flip & (k % 2 == 1), -val, val)
        else:
            import mpmath

            with mpmath.workdps(60):
                flat = [
                    float(_poly_mp(coeffs, mpmath.mpf(1) / (1 + mpmath.exp(-mpmath.mpf(float(e))))))
                    for e in eta.reshape(-1)
                ]
            out[k - 2] = np.array(flat).reshape(eta.shape)
    return out


def bernoulli_central_moments(eta, k_max: int) -> np.ndarray:
    """Central moments ``m_2 .. m_{k_max}`` of a Bernoulli variable (two-point expectation)."""
    eta = np.asarray(eta, dtype=float)
    mu = expit(eta)
    q = expit(-eta)
    ks = np.arange(2, k_max + 1).reshape((-1,) + (1,) * eta.ndim)
    return mu * q**ks + q * (-mu) ** ks


def _gaussian_central_moments(k_max: int) -> np.ndarray:
    """Central moments m_2..m_K of N(0, 1): (k-1)!! for even k, 0 for odd."""
    out = np.zeros(k_max - 1)
    for k in range(2, k_max + 1):
        if k % 2 == 0:
            out[k - 2] = math.prod(range(k - 1, 0, -2))
    return out


def cumulants_to_moments(cumulants) -> np.ndarray:
    """Central moments from cumulants ``c_2..c_K`` (the mean cumulant is taken as 0).

    Uses ``m_n = sum_{j=2}^{n} C(n-1, j-1) c_j m_{n-j}`` with ``m_0 = 1, m_1 = 0``.
    """
    c = np.asarray(cumulants, dtype=float)
    K = c.shape[0] + 1
    cum = np.zeros((K + 1,) + c.shape[1:])
    cum[2:] = c
    m = np.zeros_like(cum)
    m[0] = 1.0
    for n in range(2, K + 1):
        acc = np.zeros(c.shape[1:])
        for j in range(2, n + 1):
            acc = acc + math.comb(n - 1, j - 1) * cum[j] * m[n - j]
        m[n] = acc
    return m[2:]


def moments_to_cumulants(moments) -> np.ndarray:
    """Inverse of :func:`cumulants_to_moments`."""
    m_in = np.asarray(moments, dtype=float)
    K = m_in.shape[0] + 1
    m = np.zeros((K + 1,) + m_in.shape[1:])
    m[0] = 1.0
    m[2:] = m_in
    c = np.zeros_like(m)
    for n in range(2, K + 1):
        acc = m[n].copy()
        for j in range(2, n):
            acc = acc - math.comb(n - 1, j - 1) * c[j] * m[n - j]
        c[n] = acc
    return c[2:]


class _BernoulliLink:
    name = "bernoulli"

    @staticmethod
    def log_z(eta):
        return np.logaddexp(0.0, eta)

    @staticmethod
    def mean(eta):
        return expit(eta)

    @staticmethod
    def variance(eta):
        return expit(eta) * expit(-eta)

    @staticmethod
    def bregman(eta, eta_star):
        # log Z(eta) - log Z(eta*) - (eta - eta*) mu(eta*), written to avoid
        # subtracting two large softplus values.
        d = eta - eta_star
        mu = expit(eta_star)
        big = d > 30.0
        out = np.empty_like(d)
        small = ~big
        out[small] = log1p(mu[small] * expm1(d[small])) - d[small] * mu[small]
        out[big] = np.logaddexp(0.0, eta[big]) - np.logaddexp(0.0, eta_star[big]) - d[big] * mu[big]
        return out

    @staticmethod
    def cumulants(eta, k_max):
        return bernoulli_cumulants(eta, k_max)

    @staticmethod
    def central_moments(eta, k_max):
        return bernoulli_central_moments(eta, k_max)

    @staticmethod
    def draw(eta, rng):
        return (rng.random(eta.shape) < expit(eta)).astype(float)


class _GaussianLink:
    name = "gaussian"

    @staticmethod
    def log_z(eta):
        return 0.5 * eta * eta

    @staticmethod
    def mean(eta):
        return eta

    @staticmethod
    def variance(eta):
        return np.ones_like(eta)

    @staticmethod
    def bregman(eta, eta_star):
        d = eta - eta_star
        return 0.5 * d * d

    @staticmethod
    def cumulants(eta, k_max):
        eta = np.asarray(eta, dtype=float)
        out = np.zeros((k_max - 1,) + eta.shape)
        out[0] = 1.0
        return out

    @staticmethod
    def central_moments(eta, k_max):
        eta = np.asarray(eta, dtype=float)
        m = _gaussian_central_moments(k_max).reshape((-1,) + (1,) * eta.ndim)
        return m * np.ones_like(eta)

    @staticmethod
    def draw(eta, rng):
        return eta + rng.standard_normal(eta.shape)


# --------------------------------------------------------------------------- #
# Family base class
# --------------------------------------------------------------------------- #


class ExponentialFamily(ABC):
    """Natural-form exponential family.

    Subclasses implement the population quantities for a parameter already
    known to be in the domain; the module-level functions do the checking.
    """

    kind: str = ""
    is_glm: bool = False

    def __init__(self, dimension: int):
        if int(dimension) < 1:
            raise ValidationError("dimension must be >= 1")
        self.dimension = int(dimension)

    def __repr__(self):
        return f"{type(self).__name__}(dimension={self.dimension})"

    @property
    def stat_bound(self) -> Optional[float]:
        """Almost-sure L2 bound on ``t`` if one exists."""
        return None

    def in_domain(self, theta) -> bool:
        theta = _values(theta)
        return theta.shape == (self.dimension,) and bool(np.all(np.isfinite(theta)))

    def check_domain(self, theta) -> np.ndarray:
        theta = _values(theta)
        if theta.shape != (self.dimension,):
            raise DomainError(
                f"{self.kind}: parameter has length {theta.shape[0]}, expected {self.dimension}"
            )
        if not self.in_domain(theta):
            raise DomainError(f"{self.kind}: parameter outside the natural parameter space")
        return theta

    def initial_point(self) -> np.ndarray:
        return np.zeros(self.dimension)

    @abstractmethod
    def log_partition(self, theta: np.ndarray) -> float: ...

    @abstractmethod
    def mean(self, theta: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def fisher(self, theta: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def draw(self, theta: np.ndarray, n: int, rng: np.random.Generator) -> Dataset: ...

    @abstractmethod
    def cumulants_along(self, theta, v, k_max: int) -> np.ndarray: ...

    def central_moments_along(self, theta, v, k_max: int) -> np.ndarray:
        return cumulants_to_moments(self.cumulants_along(theta, v, k_max))

    def regret(self, theta, theta_star) -> float:
        delta = theta - theta_star
        return (
            self.log_partition(theta)
            - self.log_partition(theta_star)
            - float(delta @ self.mean(theta_star))
        )

    # Empirical log-partition: identical to the population one except for GLMs,
    # where the covariates of the sample replace the covariate distribution.
    def empirical_log_partition(self, theta, data: Dataset) -> float:
        return self.log_partition(theta)

    def empirical_mean(self, theta, data: Dataset) -> np.ndarray:
        return self.mean(theta)

    def spec(self) -> dict:
        return {"kind": self.kind, "p": self.dimension}


class Bernoulli(ExponentialFamily):
    kind = "bernoulli"

    @property
    def stat_bound(self):
        return math.sqrt(self.dimension)

    def log_partition(self, theta):
        return float(np.sum(np.logaddexp(0.0, theta)))

    def mean(self, theta):
        return expit(theta)

    def fisher(self, theta):
        return np.diag(expit(theta) * expit(-theta))

    def regret(self, theta, theta_star):
        return float(np.sum(_BernoulliLink.bregman(theta, theta_star)))

    def draw(self, theta, n, rng):
        u = rng.random((n, self.dimension))
        return Dataset((u < expit(theta)).astype(float))

    def cumulants_along(self, theta, v, k_max):
        kap = bernoulli_cumulants(theta, k_max)  # (K-1, p)
        ks = np.arange(2, k_max + 1)[:, None]
        return np.sum(kap * v[None, :] ** ks, axis=1)

    def central_moments_along(self, theta, v, k_max):
        if self.dimension == 1:
            ks = np.arange(2, k_max + 1)
            return bernoulli_central_moments(theta, k_max)[:, 0] * v[0] ** ks
        return super().central_moments_along(theta, v, k_max)


class UnitVarGaussian(ExponentialFamily):
    kind = "gaussian"

    def log_partition(self, theta):
        return 0.5 * float(theta @ theta)

    def mean(self, theta):
        return np.array(theta, dtype=float)

    def fisher(self, theta):
        return np.eye(self.dimension)

    def regret(self, theta, theta_star):
        d = theta - theta_star
        return 0.5 * float(d @ d)

    def draw(self, theta, n, rng):
        return Dataset(theta + rng.standard_normal((n, self.dimension)))

    def cumulants_along(self, theta, v, k_max):
        out = np.zeros(k_max - 1)
        out[0] = float(v @ v)
        return out

    def central_moments_along(self, theta, v, k_max):
        scale = math.sqrt(float(v @ v))
        return _gaussian_central_moments(k_max) * scale ** np.arange(2, k_max + 1)


# --------------------------------------------------------------------------- #
# Gaussian precision (packed symmetric storage)
# --------------------------------------------------------------------------- #


@lru_cache(maxsize=None)
def _triu_indices(p: int):
    return np.triu_indices(p)


def pack_symmetric(M) -> np.ndarray:
    """Upper triangle (including the diagonal) of a symmetric matrix, row major."""
    M = np.asarray(M, dtype=float)
    return M[_triu_indices(M.shape[0])].copy()


def unpack_symmetric(v, p: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (p * (p + 1) // 2,):
        raise ValidationError(f"packed length {v.shape} does not match p={p}")
    iu = _triu_indices(p)
    M = np.zeros((p, p))
    M[iu] = v
    M[(iu[1], iu[0])] = v
    return M


class GaussianPrecision(ExponentialFamily):
    """Zero-mean Gaussian with precision ``Theta``; sufficient statistic ``-YY^T/2``.

    In packed coordinates ``<theta, t> = <Theta, -YY^T/2>_F``, so the packed
    statistic carries ``-Y_i^2 / 2`` on the diagonal and ``-Y_i Y_j`` off it.
    """

    kind = "gaussian-precision"

    def __init__(self, p: int):
        self.p = int(p)
        super().__init__(self.p * (self.p + 1) // 2)
        iu = _triu_indices(self.p)
        self._rows, self._cols = iu
        self._weights = np.where(iu[0] == iu[1], 0.5, 1.0)

    def __repr__(self):
        return f"GaussianPrecision(p={self.p})"

    def spec(self):
        return {"kind": self.kind, "p": self.p}

    def matrix(self, theta) -> np.ndarray:
        return unpack_symmetric(_values(theta), self.p)

    def _cholesky(self, theta):
        try:
            return scipy.linalg.cholesky(self.matrix(theta), lower=True)
        except np.linalg.LinAlgError as exc:
            raise DomainError("precision matrix is not positive definite") from exc

    def in_domain(self, theta):
        if not super().in_domain(theta):
            return False
        try:
            L = scipy.linalg.cholesky(self.matrix(theta), lower=True)
        except np.linalg.LinAlgError:
            return False
        return bool(np.all(np.diag(L) > 0))

    def initial_point(self, eps: float = 1e-3):
        return pack_symmetric(eps * np.eye(self.p))

    def covariance(self, theta) -> np.ndarray:
        L = self._cholesky(theta)
        Linv = scipy.linalg.solve_triangular(L, np.eye(self.p), lower=True)
        return Linv.T @ Linv

    def log_partition(self, theta):
        L = self._cholesky(theta)
        return -float(np.sum(np.log(np.diag(L))))

    def mean(self, theta):
        S = self.covariance(theta)
        return -self._weights * S[self._rows, self._cols]

    def fisher(self, theta):
        S = self.covariance(theta)
        r, c, w = self._rows, self._cols, self._weights
        F = S[np.ix_(r, r)] * S[np.ix_(c, c)] + S[np.ix_(r, c)] * S[np.ix_(c, r)]
        return w[:, None] * w[None, :] * F

    def regret(self, theta, theta_star):
        mu = self._relative_eigs(theta_star, theta - theta_star)
        return 0.5 * float(np.sum(mu - log1p(mu)))

    def _relative_eigs(self, theta, direction):
        """Eigenvalues of ``V Theta^{-1}`` with ``V`` the unpacked direction."""
        L = self._cholesky(theta)
        V = unpack_symmetric(direction, self.p)
        A = scipy.linalg.solve_triangular(L, V, lower=True)
        A = scipy.linalg.solve_triangular(L, A.T, lower=True)
        return np.linalg.eigvalsh(0.5 * (A + A.T))

    def draw(self, theta, n, rng):
        L = self._cholesky(theta)
        z = rng.standard_normal((n, self.p))
        # Y = L^{-T} z has covariance (L L^T)^{-1}
        Y = scipy.linalg.solve_triangular(L.T, z.T, lower=False).T
        t = -self._weights * Y[:, self._rows] * Y[:, self._cols]
        return Dataset(t)

    def cumulants_along(self, theta, v, k_max):
        lam = self._relative_eigs(theta, v)
        ks = np.arange(2, k_max + 1)
        fact = np.array([math.factorial(k - 1) for k in ks], dtype=float)
        powers = np.sum(lam[None, :] ** ks[:, None], axis=1)
        return (-1.0) ** ks * 0.5 * fact * powers


# --------------------------------------------------------------------------- #
# Covariate sources and GLMs
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class FixedDesign:
    """A finite design matrix; covariates are drawn uniformly from its rows.

    Population expectations over ``X`` are exact averages over the rows.
    """

    matrix: np.ndarray
    origin: Optional[dict] = None

    def __post_init__(self):
        X = np.array(self.matrix, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValidationError("design matrix must be 2-d with at least one row")
        X.setflags(write=False)
        object.__setattr__(self, "matrix", X)

    @classmethod
    def random(cls, p: int, pool_size: int, generator: str = "rademacher", seed: int = 0):
        rng = np.random.default_rng(seed)
        if generator == "rademacher":
            X = rng.choice(np.array([-1.0, 1.0]), size=(pool_size, p))
        elif generator == "gaussian":
            X = rng.standard_normal((pool_size, p))
        else:
            raise ValidationError(f"unknown design generator {generator!r}")
        origin = {"type": "fixed", "generator": generator, "pool_size": int(pool_size), "seed": int(seed)}
        return cls(X, origin)

    @property
    def p(self) -> int:
        return self.matrix.shape[1]

    @property
    def pool(self) -> np.ndarray:
        return self.matrix

    @property
    def max_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.matrix, axis=1)))

    def draw(self, n, rng):
        return self.matrix[rng.integers(0, self.matrix.shape[0], size=n)]

    def spec(self):
        if self.origin is not None:
            return dict(self.origin)
        return {"type": "fixed", "matrix": self.matrix.tolist()}


@dataclass(frozen=True)
class TruncatedGaussianDesign:
    """Isotropic Gaussian covariates conditioned on ``|X|_2 <= bound``.

    Draws are exact (uniform direction times a truncated chi radius).
    Population expectations use a seeded Monte Carlo pool of ``mc_samples`` rows.
    """

    p: int
    bound: float
    mc_samples: int = 20000
    seed: int = 0

    def __post_init__(self):
        if self.bound <= 0:
            raise ValidationError("truncation bound must be > 0")

    def draw(self, n, rng):
        from scipy.stats import chi

        z = rng.standard_normal((n, self.p))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        top = chi.cdf(self.bound, self.p)
        r = chi.ppf(rng.random(n) * top, self.p)
        return z * r[:, None]

    @cached_property
    def pool(self) -> np.ndarray:
        X = self.draw(self.mc_samples, np.random.default_rng(self.seed))
        X.setflags(write=False)
        return X

    @property
    def max_norm(self) -> float:
        return float(self.bound)

    def spec(self):
        return {
            "type": "truncated-gaussian",
            "bound": float(self.bound),
            "mc_samples": int(self.mc_samples),
            "seed": int(self.seed),
        }


class _GLM(ExponentialFamily):
    is_glm = True
    link = None

    def __init__(self, p: int, covariates=None):
        super().__init__(p)
        if covariates is not None and getattr(covariates, "p", p) != p:
            raise ValidationError(f"covariate source has p={covariates.p}, family has p={p}")
        self.covariates = covariates

    def __repr__(self):
        return f"{type(self).__name__}(p={self.dimension}, covariates={type(self.covariates).__name__})"

    def spec(self):
        out = {"kind": self.kind, "p": self.dimension}
        if self.covariates is not None:
            out["design"] = self.covariates.spec()
        return out

    @property
    def pool(self) -> np.ndarray:
        if self.covariates is None:
            raise ValidationError(
                f"{self.kind}: population quantities need a covariate source"
            )
        return self.covariates.pool

    def log_partition(self, theta):
        return float(np.mean(self.link.log_z(self.pool @ theta)))

    def mean(self, theta):
        X = self.pool
        return X.T @ self.link.mean(X @ theta) / X.shape[0]

    def fisher(self, theta):
        X = self.pool
        w = self.link.variance(X @ theta)
        return (X * w[:, None]).T @ X / X.shape[0]

    def regret(self, theta, theta_star):
        X = self.pool
        return float(np.mean(self.link.bregman(X @ theta, X @ theta_star)))

    def _sample_covariates(self, data: Dataset) -> np.ndarray:
        if data.covariates is None:
            raise ValidationError(f"{self.kind}: dataset has no covariate columns")
        return data.covariates

    def empirical_log_partition(self, theta, data):
        X = self._sample_covariates(data)
        return float(np.mean(self.link.log_z(X @ theta)))

    def empirical_mean(self, theta, data):
        X = self._sample_covariates(data)
        return X.T @ self.link.mean(X @ theta) / X.shape[0]

    def draw(self, theta, n, rng):
        if self.covariates is None:
            raise ValidationError(f"{self.kind}: sampling needs a covariate source")
        X = self.covariates.draw(n, rng)
        y = self.link.draw(X @ theta, rng)
        return Dataset(y[:, None] * X, covariates=X)

    def _conditional(self, what, theta, k_max):
        # The per-row conditional moments depend only on theta; alpha fits
        # query many directions at one theta, so keep the last result.
        key = (int(k_max), np.asarray(theta, dtype=float).tobytes())
        cache = self.__dict__.setdefault("_cond_cache", {})
        hit = cache.get(what)
        if hit is None or hit[0] != key:
            fn = self.link.cumulants if what == "cumulants" else self.link.central_moments
            hit = cache[what] = (key, fn(self.pool @ theta, k_max))
        return hit[1]

    def _along(self, what, theta, v, k_max):
        # Conditional quantities of y <X, v> given X, averaged over X.
        u = self.pool @ v
        cond = self._conditional(what, theta, k_max)
        powers = np.cumprod(np.vstack([u * u] + [u] * (k_max - 2)), axis=0)
        return np.mean(cond * powers, axis=1)

    def cumulants_along(self, theta, v, k_max):
        return self._along("cumulants", theta, v, k_max)

    def central_moments_along(self, theta, v, k_max):
        return self._along("moments", theta, v, k_max)


class LogisticGLM(_GLM):
    kind = "logistic-glm"
    link = _BernoulliLink

    @property
    def stat_bound(self):
        return None if self.covariates is None else self.covariates.max_norm


class LinearGLM(_GLM):
    kind = "linear-glm"
    link = _GaussianLink


# --------------------------------------------------------------------------- #
# Operations
# --------------------------------------------------------------------------- #


def log_partition(family: ExponentialFamily, theta) -> float:
    """``log Z(theta)`` (theta-independent constants excluded)."""
    return family.log_partition(family.check_domain(theta))


def mean_sufficient_stat(family: ExponentialFamily, theta) -> np.ndarray:
    """``E[t] = grad log Z(theta)``."""
    return family.mean(family.check_domain(theta))


def fisher_information(family: ExponentialFamily, theta) -> FisherMatrix:
    """``Cov(t) = hess log Z(theta)``; for GLMs the expected Fisher over the covariates."""
    return FisherMatrix(family.fisher(family.check_domain(theta)))


def _check_data(family, data: Dataset):
    if data.dimension != family.dimension:
        raise ValidationError(
            f"dataset has {data.dimension} columns, family dimension is {family.dimension}"
        )


def nll(family: ExponentialFamily, theta, data: Dataset) -> float:
    """Empirical negative log-likelihood up to a theta-independent constant."""
    theta = family.check_domain(theta)
    _check_data(family, data)
    return -float(theta @ data.mean_stat) + family.empirical_log_partition(theta, data)


def grad_nll(family: ExponentialFamily, theta, data: Dataset) -> np.ndarray:
    theta = family.check_domain(theta)
    _check_data(family, data)
    return family.empirical_mean(theta, data) - data.mean_stat


def population_regret(family: ExponentialFamily, theta, theta_star) -> float:
    """``L(theta) - L(theta*)`` when the data come from ``P(.|theta*)``.

    Equals the Bregman divergence of ``log Z``; rounding-level negatives are clipped to 0.
    """
    theta = family.check_domain(theta)
    theta_star = family.check_domain(theta_star)
    return max(float(family.regret(theta, theta_star)), 0.0)


def fisher_risk(F, theta, theta_star) -> float:
    """``(theta - theta*)^T F (theta - theta*)``."""
    F = np.asarray(F.entries if isinstance(F, FisherMatrix) else F, dtype=float)
    d = _values(theta) - _values(theta_star)
    if F.shape != (d.shape[0], d.shape[0]):
        raise ValidationError(f"dimension mismatch: F is {F.shape}, difference has length {d.shape[0]}")
    return max(float(d @ F @ d), 0.0)


def sample(family: ExponentialFamily, theta, n: int, seed) -> Dataset:
    """``n`` i.i.d. rows of sufficient statistics under ``P(.|theta)``; deterministic in ``seed``."""
    theta = family.check_domain(theta)
    if int(n) < 1:
        raise ValidationError("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return family.draw(theta, int(n), rng)


# --------------------------------------------------------------------------- #
# Construction from a plain-dict spec (config files, CLI)
# --------------------------------------------------------------------------- #


def design_from_spec(spec: dict, p: int):
    kind = spec.get("type", "fixed")
    if kind == "fixed":
        if "matrix" in spec:
            return FixedDesign(np.asarray(spec["matrix"], dtype=float))
        return FixedDesign.random(
            p,
            int(spec.get("pool_size", 20000)),
            spec.get("generator", "rademacher"),
            int(spec.get("seed", 0)),
        )
    if kind == "truncated-gaussian":
        return TruncatedGaussianDesign(
            p, float(spec["bound"]), int(spec.get("mc_samples", 20000)), int(spec.get("seed", 0))
        )
    raise ValidationError(f"unknown design type {kind!r}")


FAMILY_KINDS = ("bernoulli", "gaussian", "gaussian-precision", "logistic-glm", "linear-glm")


def family_from_spec(spec: dict) -> ExponentialFamily:
    kind = spec.get("kind")
    p = int(spec.get("p", 1))
    if kind == "bernoulli":
        return Bernoulli(p)
    if kind == "gaussian":
        return UnitVarGaussian(p)
    if kind == "gaussian-precision":
        return GaussianPrecision(p)
    if kind in ("logistic-glm", "linear-glm"):
        design = spec.get("design")
        source = design_from_spec(design, p) if design is not None else None
        cls = LogisticGLM if kind == "logistic-glm" else LinearGLM
        return cls(p, source)
    raise ValidationError(f"unknown family kind {kind!r}; expected one of {FAMILY_KINDS}")
