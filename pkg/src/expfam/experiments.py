"""Synthetic estimation experiments and in-vivo checks of the risk bounds.

A sweep fixes a sparse ground truth per config, draws independent datasets
for every (n, trial) pair, fits the L1 and two-stage estimators and records
risks next to the bounds evaluated with the true constants.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, ValidationError
from .families import (
    Bernoulli,
    Dataset,
    ExponentialFamily,
    GaussianPrecision,
    LinearGLM,
    LogisticGLM,
    ParameterVector,
    UnitVarGaussian,
    family_from_spec,
    fisher_information,
    fisher_risk,
    mean_sufficient_stat,
    population_regret,
    sample,
)
from .moments import RestrictedCone, fit_alpha, sandwich_check
from .solver import SolverConfig, fit_l1
from .sparsity import ReConstants, TwoStageConfig, re_constants, support_metrics, two_stage_fit

log = logging.getLogger(__name__)

__all__ = [
    "LambdaRule",
    "ExperimentConfig",
    "ExperimentSetup",
    "ExperimentRecord",
    "SubGaussianCheck",
    "SweepResult",
    "make_sparse_parameter",
    "default_sigma",
    "measurement_error",
    "check_subgaussian_bound",
    "prepare",
    "run_trial",
    "run_trials",
    "sweep",
    "rate_slope",
    "summarize",
]

LAMBDA_RULES = ("corollary", "fixed", "error-multiple")


@dataclass(frozen=True)
class LambdaRule:
    """How lambda is chosen per trial.

    ``corollary``: ``2 sigma sqrt(log(p/delta)/n)``; ``fixed``: ``value``;
    ``error-multiple``: ``value * measurement_error``.
    """

    kind: str = "corollary"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in LAMBDA_RULES:
            raise ValidationError(f"lambda rule must be one of {LAMBDA_RULES}, got {self.kind!r}")
        if self.kind != "corollary" and not (math.isfinite(self.value) and self.value > 0):
            raise ValidationError(f"lambda rule {self.kind!r} needs a value > 0")

    def resolve(self, sigma, p, delta, n, meas_err) -> float:
        if self.kind == "corollary":
            return 2.0 * sigma * math.sqrt(math.log(p / delta) / n)
        if self.kind == "fixed":
            return float(self.value)
        return float(self.value) * float(meas_err)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind != "corollary":
            out["value"] = float(self.value)
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a family, a sparse truth and a grid of sample sizes.

    Parameters
    ----------
    family : dict
        Family spec without ``p`` (``{"kind": ..., "design": ...}``).
    p, s : int
        Dimension and number of nonzeros of the ground truth.
    n_grid : tuple of int
        Sample sizes; a single ``n`` is a one-point grid.
    signal_magnitude : float or None
        ``|theta*_i|`` on the support.  ``None`` picks the largest value up to 1
        for which the lambda-size condition of the L1 bound holds at the
        smallest ``n``.
    sigma : float or None
        Sub-Gaussian parameter of ``t``; ``None`` uses :func:`default_sigma`.
    contamination : float
        Fraction of rows replaced by draws at ``-theta*``; for robustness runs only.
    """

    family: dict
    p: int
    s: int
    n_grid: tuple
    signal_magnitude: Optional[float] = None
    sigma: Optional[float] = None
    delta: float = 0.05
    trials: int = 50
    seed: int = 0
    lambda_rule: LambdaRule = field(default_factory=LambdaRule)
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(0.0, accelerate=True))
    re_budget: int = 500
    alpha_k_max: int = 8
    alpha_directions: int = 200
    contamination: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        if int(self.p) < 1:
            raise ValidationError("p must be >= 1")
        if not 1 <= int(self.s) <= int(self.p):
            raise ValidationError(f"1 <= s <= p violated (s={self.s}, p={self.p}): s ≤ p required")
        if not self.n_grid or min(self.n_grid) < 1:
            raise ValidationError("n >= 1 required for every grid point")
        if not 0 < self.delta < 1:
            raise ValidationError("delta must lie in (0, 1)")
        if int(self.trials) < 1:
            raise ValidationError("trials must be >= 1")
        if self.signal_magnitude is not None and not self.signal_magnitude > 0:
            raise ValidationError("signal_magnitude must be > 0")
        if self.sigma is not None and not self.sigma > 0:
            raise ValidationError("sigma must be > 0")
        if not 0 <= self.contamination < 1:
            raise ValidationError("contamination must lie in [0, 1)")
        if self.alpha_k_max < 3 or self.alpha_directions < 1 or self.re_budget < 1:
            raise ValidationError("alpha_k_max >= 3, alpha_directions >= 1 and re_budget >= 1 required")
        if "kind" not in self.family:
            raise ValidationError("family spec needs a 'kind'")

    def family_spec(self) -> dict:
        spec = {k: v for k, v in self.family.items() if k != "p"}
        spec["p"] = int(self.p)
        return spec

    def to_dict(self) -> dict:
        return {
            "family": dict(self.family),
            "p": int(self.p),
            "s": int(self.s),
            "n_grid": list(self.n_grid),
            "signal_magnitude": self.signal_magnitude,
            "sigma": self.sigma,
            "delta": float(self.delta),
            "trials": int(self.trials),
            "seed": int(self.seed),
            "lambda_rule": self.lambda_rule.to_dict(),
            "solver": {k: v for k, v in self.solver.to_dict().items() if k != "lambda"},
            "re_budget": int(self.re_budget),
            "alpha_k_max": int(self.alpha_k_max),
            "alpha_directions": int(self.alpha_directions),
            "contamination": float(self.contamination),
        }


def make_sparse_parameter(p: int, s: int, magnitude: float, seed) -> ParameterVector:
    """``s`` uniformly chosen coordinates set to ``+-magnitude`` with random signs."""
    if not 0 <= s <= p:
        raise ValidationError(f"s ≤ p required (s={s}, p={p})")
    rng = np.random.default_rng(seed)
    theta = np.zeros(p)
    idx = rng.choice(p, size=s, replace=False)
    theta[idx] = magnitude * rng.choice(np.array([-1.0, 1.0]), size=s)
    return ParameterVector.annotated(theta)


def default_sigma(family: ExponentialFamily, theta_star) -> float:
    """Sub-Gaussian parameter of each coordinate of ``t`` under ``theta_star``.

    Bernoulli 1/2 and unit-variance Gaussian 1.  Logistic GLM: half the largest
    coordinate range of ``y X`` (Hoeffding).  Linear GLM: ``max|X_ij|`` times
    ``sqrt(1 + |theta*|_F^2)``, covering the noise and the signal part.
    """
    if isinstance(family, Bernoulli):
        return 0.5
    if isinstance(family, UnitVarGaussian):
        return 1.0
    if isinstance(family, LogisticGLM):
        X = family.pool
        hi = np.maximum(X.max(axis=0), 0.0)
        lo = np.minimum(X.min(axis=0), 0.0)
        return float(np.max(hi - lo) / 2.0)
    if isinstance(family, LinearGLM):
        c = float(np.max(np.abs(family.pool)))
        theta_star = np.asarray(theta_star, dtype=float)
        signal = float(theta_star @ family.fisher(theta_star) @ theta_star)
        return c * math.sqrt(1.0 + signal)
    raise ValidationError(f"{family.kind}: no default sigma, set 'sigma' explicitly")


def measurement_error(data: Dataset, family: ExponentialFamily, theta_star) -> float:
    """``|E_hat[t] - E[t]|_inf`` with ``E[t]`` taken under ``theta_star``."""
    return float(np.max(np.abs(data.mean_stat - mean_sufficient_stat(family, theta_star))))


@dataclass(frozen=True)
class SubGaussianCheck:
    violation_rate: float
    bound: float
    allowed: float
    trials: int

    @property
    def ok(self) -> bool:
        return self.violation_rate <= self.allowed

    def to_dict(self) -> dict:
        return {
            "violation_rate": self.violation_rate,
            "bound": self.bound,
            "allowed": self.allowed,
            "trials": self.trials,
            "ok": self.ok,
        }


def check_subgaussian_bound(family, theta_star, n, delta, sigma, trials, seed) -> SubGaussianCheck:
    """Fraction of datasets whose measurement error exceeds ``sigma sqrt(log(p/delta)/n)``.

    ``allowed`` is ``delta + 3 sqrt(delta/trials)``.
    """
    if not 0 < delta < 1 or sigma <= 0 or trials < 1 or n < 1:
        raise ValidationError("need 0 < delta < 1, sigma > 0, trials >= 1, n >= 1")
    p = family.dimension
    bound = sigma * math.sqrt(math.log(p / delta) / n)
    rng = np.random.default_rng(seed)
    mean = mean_sufficient_stat(family, theta_star)
    hits = 0
    for _ in range(trials):
        data = sample(family, theta_star, n, rng)
        hits += float(np.max(np.abs(data.mean_stat - mean))) > bound
    rate = hits / trials
    return SubGaussianCheck(rate, bound, delta + 3.0 * math.sqrt(delta / trials), int(trials))


# --------------------------------------------------------------------------- #
# Per-config setup
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class ExperimentSetup:
    """Quantities fixed for a whole sweep: truth, population Fisher, constants."""

    config: ExperimentConfig
    family: ExponentialFamily
    theta_star: np.ndarray
    support: frozenset
    fisher: np.ndarray
    mean_star: np.ndarray
    re: ReConstants
    alpha: float
    alpha_moment: float
    alpha_cumulant: float
    sigma: float
    magnitude: float

    @property
    def kappa_min(self) -> float:
        return self.re.kappa_min

    @property
    def kappa_max(self) -> float:
        return self.re.kappa_max

    def to_dict(self) -> dict:
        return {
            "support": sorted(self.support),
            "theta_star_l1": float(np.abs(self.theta_star).sum()),
            "signal_magnitude": self.magnitude,
            "sigma": self.sigma,
            "alpha": self.alpha,
            "alpha_moment": self.alpha_moment,
            "alpha_cumulant": self.alpha_cumulant,
            "re_constants": self.re.to_dict(),
        }


def _alphas(family, theta, support, cfg):
    directions = RestrictedCone(sorted(support), cfg.alpha_directions, seed=cfg.seed)
    _, profiles = fit_alpha(family, theta, directions, cfg.alpha_k_max, "cumulant", return_profiles=True)
    a_m = max((pr.alpha_moment for pr in profiles), default=0.0)
    a_c = max((pr.alpha_cumulant for pr in profiles), default=0.0)
    return a_m, a_c


def _base_theta(cfg: ExperimentConfig, magnitude: float) -> np.ndarray:
    seq = np.random.SeedSequence([int(cfg.seed), 0])
    return make_sparse_parameter(cfg.p, cfg.s, magnitude, np.random.default_rng(seq)).values


def prepare(cfg: ExperimentConfig) -> ExperimentSetup:
    """Draw the ground truth and compute every constant the bounds need."""
    family = family_from_spec(cfg.family_spec())
    if family.dimension != cfg.p:
        raise ValidationError(f"family dimension {family.dimension} differs from p={cfg.p}")
    unit = _base_theta(cfg, 1.0)
    support = frozenset(np.flatnonzero(unit).tolist())
    n_min = min(cfg.n_grid)

    if isinstance(family, GaussianPrecision):
        raise ValidationError("experiments need a family whose parameter is a free sparse vector")

    def constants(mag):
        theta = unit * mag
        a_m, a_c = _alphas(family, theta, support, cfg)
        sigma = cfg.sigma if cfg.sigma is not None else default_sigma(family, theta)
        return theta, a_m, a_c, sigma

    if cfg.signal_magnitude is not None:
        magnitude = float(cfg.signal_magnitude)
        theta, a_m, a_c, sigma = constants(magnitude)
    else:
        # Fixed-point search for the largest magnitude (capped at 1) meeting
        # lam <= 1/(100 alpha^2 |theta*|_1) with margin 0.9 at the smallest n.
        magnitude = 1.0
        for _ in range(4):
            theta, a_m, a_c, sigma = constants(magnitude)
            alpha = min(a_m, a_c)
            if alpha == 0:
                break
            lam = cfg.lambda_rule.resolve(sigma, cfg.p, cfg.delta, n_min, math.nan)
            if not math.isfinite(lam):
                break
            target = min(1.0, 0.9 / (100.0 * alpha**2 * cfg.s * lam))
            if abs(target - magnitude) <= 1e-3 * magnitude:
                break
            magnitude = target
        theta, a_m, a_c, sigma = constants(magnitude)
    F = np.asarray(fisher_information(family, theta).entries)
    re = re_constants(F, support, budget=cfg.re_budget, seed=cfg.seed)
    return ExperimentSetup(
        config=cfg,
        family=family,
        theta_star=theta,
        support=support,
        fisher=F,
        mean_star=mean_sufficient_stat(family, theta),
        re=re,
        alpha=float(min(a_m, a_c)),
        alpha_moment=float(a_m),
        alpha_cumulant=float(a_c),
        sigma=float(sigma),
        magnitude=float(magnitude),
    )


# --------------------------------------------------------------------------- #
# Trials
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class ExperimentRecord:
    """One trial.  The leading fields are the report columns in declared order."""

    trial_id: str
    fisher_risk: float
    regret: float
    l1_risk: float
    support_size_stage1: float
    support_size_stage2: float
    measurement_error: float
    bound_fisher: float
    bound_l1: float
    bound_twostage: float
    eq6_met: bool
    blambda1_met: bool
    # extended diagnostics
    n: int = 0
    trial: int = 0
    lam: float = math.nan
    tau: float = math.nan
    noise_ok: bool = False
    bound_regret: float = math.nan
    bound_l1_thm: float = math.nan
    bound_fisher_thm: float = math.nan
    bound_twostage_regret: float = math.nan
    stage2_fisher_risk: float = math.nan
    stage2_regret: float = math.nan
    stage2_l1_risk: float = math.nan
    offsupport_l1: float = math.nan
    onsupport_error_l1: float = math.nan
    precision: float = math.nan
    recall: float = math.nan
    sandwich_applicable: bool = False
    sandwich_holds: bool = False
    stage1_converged: bool = False
    stage2_converged: bool = False
    stage1_kkt: float = math.nan
    stage2_kkt: float = math.nan
    failed: bool = False
    error: str = ""

    @classmethod
    def columns(cls) -> list:
        return [f.name for f in fields(cls)]

    def row(self) -> list:
        return [getattr(self, name) for name in self.columns()]

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.columns()}

    # Lemma-7 style cone checks, only meaningful when noise_ok.
    @property
    def cone_ok(self) -> bool:
        slack = 1e-9 * max(1.0, self.onsupport_error_l1)
        return self.offsupport_l1 <= 3.0 * self.onsupport_error_l1 + slack

    @property
    def l1_split_ok(self) -> bool:
        slack = 1e-9 * max(1.0, self.onsupport_error_l1)
        return self.l1_risk <= 4.0 * self.onsupport_error_l1 + slack


def _trial_seed(seed: int, n_index: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), 1, int(n_index), int(trial)])


def _contaminate(setup, data, rng):
    cfg = setup.config
    k = int(round(cfg.contamination * data.n))
    if k == 0:
        return data
    bad = -setup.theta_star
    if not setup.family.in_domain(bad):
        bad = setup.family.initial_point()
    other = sample(setup.family, bad, k, rng)
    rows = rng.choice(data.n, size=k, replace=False)
    t = np.array(data.sufficient_stats)
    t[rows] = other.sufficient_stats
    X = None
    if data.covariates is not None:
        X = np.array(data.covariates)
        X[rows] = other.covariates
    return Dataset(t, covariates=X)


def _failed(trial_id, n, trial, message) -> ExperimentRecord:
    nan = math.nan
    return ExperimentRecord(
        trial_id, nan, nan, nan, nan, nan, nan, nan, nan, nan, False, False,
        n=int(n), trial=int(trial), failed=True, error=message,
    )


def run_trial(setup: ExperimentSetup, n: int, trial: int, n_index: int = 0) -> ExperimentRecord:
    """Sample one dataset, fit both estimators and evaluate every bound.

    Solver and domain errors do not propagate; they produce a record with
    ``failed=True`` and NaN risks.
    """
    cfg = setup.config
    trial_id = f"n{n}-t{trial}"
    try:
        return _run_trial(setup, n, trial, n_index, trial_id)
    except (DomainError, ValidationError, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.warning("trial %s failed: %s", trial_id, exc)
        return _failed(trial_id, n, trial, f"{type(exc).__name__}: {exc}")


def _run_trial(setup, n, trial, n_index, trial_id):
    cfg = setup.config
    family, theta_star, F = setup.family, setup.theta_star, setup.fisher
    rng = np.random.default_rng(_trial_seed(cfg.seed, n_index, trial))
    data = sample(family, theta_star, n, rng)
    if cfg.contamination > 0:
        data = _contaminate(setup, data, rng)
    meas = float(np.max(np.abs(data.mean_stat - setup.mean_star)))
    p, s, delta, sigma = cfg.p, cfg.s, cfg.delta, setup.sigma
    lam = cfg.lambda_rule.resolve(sigma, p, delta, n, meas)
    k_min, k_max, alpha = setup.kappa_min, setup.kappa_max, setup.alpha
    l1_star = float(np.abs(theta_star).sum())
    a2 = alpha * alpha

    solver = cfg.solver.with_lambda(lam)
    stage1 = fit_l1(family, data, solver)
    ts_cfg = TwoStageConfig(lam, kappa_min=k_min, solver=solver)
    ts = two_stage_fit(family, data, ts_cfg, stage1=stage1)
    est1 = stage1.estimate.values
    est2 = ts.stage2.estimate.values

    S = np.zeros(p, dtype=bool)
    S[sorted(setup.support)] = True
    diff = est1 - theta_star
    noise_ok = meas <= lam / 2.0
    eq6 = noise_ok and (a2 == 0 or lam <= 1.0 / (100.0 * a2 * l1_star))
    bl1 = noise_ok and (
        a2 == 0
        or (lam <= 1.0 / (270.0 * a2 * l1_star) and lam <= k_min**2 / (340.0 * k_max * alpha * math.sqrt(s)))
    )
    log_term = math.log(p / delta)
    inflate = (12.0 * k_max / k_min) ** 2
    metrics = support_metrics(est1, theta_star)
    sw = sandwich_check(family, theta_star, est1, alpha, fisher=F)
    return ExperimentRecord(
        trial_id=trial_id,
        fisher_risk=fisher_risk(F, est1, theta_star),
        regret=population_regret(family, est1, theta_star),
        l1_risk=float(np.abs(diff).sum()),
        support_size_stage1=int(np.count_nonzero(est1)),
        support_size_stage2=int(np.count_nonzero(est2)),
        measurement_error=meas,
        bound_fisher=36.0 * sigma**2 * s * log_term / (n * k_min**2),
        bound_l1=48.0 * sigma * s * math.sqrt(log_term / n) / k_min**2,
        bound_twostage=inflate * 36.0 * s * sigma**2 * log_term / (n * k_min**2),
        eq6_met=bool(eq6),
        blambda1_met=bool(bl1),
        n=int(n),
        trial=int(trial),
        lam=float(lam),
        tau=float(ts_cfg.tau),
        noise_ok=bool(noise_ok),
        bound_regret=9.0 * s * lam**2 / k_min**2,
        bound_l1_thm=24.0 * s * lam / k_min**2,
        bound_fisher_thm=36.0 * s * lam**2 / k_min**2,
        bound_twostage_regret=inflate * 9.0 * s * lam**2 / k_min**2,
        stage2_fisher_risk=fisher_risk(F, est2, theta_star),
        stage2_regret=population_regret(family, est2, theta_star),
        stage2_l1_risk=float(np.abs(est2 - theta_star).sum()),
        offsupport_l1=float(np.abs(est1[~S]).sum()),
        onsupport_error_l1=float(np.abs(diff[S]).sum()),
        precision=metrics.precision,
        recall=metrics.recall,
        sandwich_applicable=sw.applicable,
        sandwich_holds=sw.sandwich_holds,
        stage1_converged=stage1.converged,
        stage2_converged=ts.stage2.converged,
        stage1_kkt=stage1.kkt_residual,
        stage2_kkt=ts.stage2.kkt_residual,
    )


# --------------------------------------------------------------------------- #
# Sweeps
# --------------------------------------------------------------------------- #


def rate_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise ValidationError("insufficient grid: the rate fit needs at least 3 points")
    if np.any(x <= 0) or np.any(y <= 0):
        return math.nan
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _workers() -> int:
    raw = os.environ.get("EXPFAM_THREADS")
    cap = os.cpu_count() or 1
    if raw:
        try:
            return max(1, min(int(raw), cap))
        except ValueError:
            raise ValidationError(f"EXPFAM_THREADS must be an integer, got {raw!r}") from None
    return cap


@dataclass(frozen=True, eq=False)
class SweepResult:
    setup: ExperimentSetup
    records: list
    summary: dict


def _frac(flags) -> float:
    flags = list(flags)
    return float(np.mean(flags)) if flags else math.nan


def summarize(setup: ExperimentSetup, records: Sequence[ExperimentRecord]) -> dict:
    """Rate slope, per-n medians, violation counts and bound-satisfaction fractions."""
    cfg = setup.config
    ok = [r for r in records if not r.failed]
    per_n = []
    for n in cfg.n_grid:
        rs = [r for r in ok if r.n == n]
        per_n.append(
            {
                "n": n,
                "trials": len(rs),
                "median_fisher_risk": float(np.median([r.fisher_risk for r in rs])) if rs else math.nan,
                "median_measurement_error": float(np.median([r.measurement_error for r in rs])) if rs else math.nan,
                "lambda": rs[0].lam if rs and cfg.lambda_rule.kind != "error-multiple" else math.nan,
                "fraction_within_bound_fisher": _frac(r.fisher_risk <= r.bound_fisher for r in rs),
            }
        )
    slope = math.nan
    if len(cfg.n_grid) >= 3:
        x = [cfg.s * math.log(cfg.p) / n for n in cfg.n_grid]
        y = [row["median_fisher_risk"] for row in per_n]
        slope = rate_slope(x, y) if all(np.isfinite(y)) else math.nan
    qual = [r for r in ok if r.noise_ok]
    eq6 = [r for r in ok if r.eq6_met]
    bl1 = [r for r in ok if r.blambda1_met]
    viol = {
        "l1_regret": sum(r.regret > r.bound_regret * (1 + 1e-9) for r in eq6),
        "l1_l1_risk": sum(r.l1_risk > r.bound_l1_thm * (1 + 1e-9) for r in eq6),
        "twostage_support": sum(r.support_size_stage2 > 2 * cfg.s for r in bl1),
        "twostage_regret": sum(r.stage2_regret > r.bound_twostage_regret * (1 + 1e-9) for r in bl1),
        "cone": sum(not r.cone_ok for r in qual),
        "cone_l1_split": sum(not r.l1_split_ok for r in qual),
        "sandwich": sum(r.sandwich_applicable and not r.sandwich_holds for r in ok),
    }
    return {
        "trials": len(records),
        "failed_trials": len(records) - len(ok),
        "setup": setup.to_dict(),
        "rate_slope": slope,
        "per_n": per_n,
        "counts": {
            "noise_ok": len(qual),
            "eq6_met": len(eq6),
            "blambda1_met": len(bl1),
            "sandwich_applicable": sum(r.sandwich_applicable for r in ok),
        },
        "violations": {k: int(v) for k, v in viol.items()},
        "fractions": {
            "fisher_within_bound_fisher": _frac(r.fisher_risk <= r.bound_fisher for r in ok),
            "fisher_within_bound_l1": _frac(r.l1_risk <= r.bound_l1 for r in ok),
            "stage2_fisher_within_bound_twostage": _frac(r.stage2_fisher_risk <= r.bound_twostage for r in ok),
            "stage1_converged": _frac(r.stage1_converged for r in ok),
            "stage2_converged": _frac(r.stage2_converged for r in ok),
        },
    }


def run_trials(setup: ExperimentSetup, progress=None) -> list:
    """Every (n, trial) pair of the config, in grid order.

    Trials run on up to ``EXPFAM_THREADS`` threads; results are collected in
    (n, trial) order so the output does not depend on scheduling.
    """
    cfg = setup.config
    jobs = [(n, t, i) for i, n in enumerate(cfg.n_grid) for t in range(cfg.trials)]

    def job(args):
        n, t, i = args
        rec = run_trial(setup, n, t, i)
        if progress is not None:
            progress(rec)
        return rec

    workers = _workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(job, jobs))
    return [job(a) for a in jobs]


def sweep(cfg: ExperimentConfig, setup: Optional[ExperimentSetup] = None, progress=None) -> SweepResult:
    """Run ``trials`` trials at every grid point and fit the risk rate."""
    if len(cfg.n_grid) < 3:
        raise ValidationError("insufficient grid: a sweep needs at least 3 sample sizes")
    setup = prepare(cfg) if setup is None else setup
    records = run_trials(setup, progress)
    return SweepResult(setup, records, summarize(setup, records))
