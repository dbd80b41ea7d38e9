import math

import numpy as np
import pytest

import oracles
from expfam import (
    Bernoulli,
    Dataset,
    DomainError,
    FisherMatrix,
    FixedDesign,
    GaussianPrecision,
    LinearGLM,
    LogisticGLM,
    ParameterVector,
    TruncatedGaussianDesign,
    UnitVarGaussian,
    ValidationError,
    family_from_spec,
    fisher_information,
    fisher_risk,
    grad_nll,
    log_partition,
    mean_sufficient_stat,
    nll,
    pack_symmetric,
    population_regret,
    sample,
    unpack_symmetric,
)


def _families():
    return [
        Bernoulli(3),
        UnitVarGaussian(3),
        GaussianPrecision(2),
        LogisticGLM(3, FixedDesign.random(3, 500, seed=1)),
        LinearGLM(3, FixedDesign.random(3, 500, "gaussian", seed=2)),
    ]


def _random_theta(family, rng):
    if isinstance(family, GaussianPrecision):
        A = rng.standard_normal((family.p, family.p))
        return pack_symmetric(A @ A.T + 0.5 * np.eye(family.p))
    return rng.uniform(-1.5, 1.5, family.dimension)


# ---- log partition, mean and Fisher at fixed points -------------------------


def test_log_partition_examples():
    assert log_partition(Bernoulli(1), [0.0]) == pytest.approx(math.log(2), abs=1e-15)
    assert log_partition(UnitVarGaussian(1), [1.5]) == 1.125
    assert log_partition(GaussianPrecision(2), pack_symmetric(np.eye(2))) == 0.0


def test_gaussian_precision_log_partition_matches_determinant(rng):
    fam = GaussianPrecision(3)
    for _ in range(5):
        theta = _random_theta(fam, rng)
        expected = oracles.gaussian_precision_logz(fam.matrix(theta))
        assert log_partition(fam, theta) == pytest.approx(expected, rel=1e-12, abs=1e-14)


def test_mean_examples():
    assert mean_sufficient_stat(Bernoulli(1), [0.0])[0] == 0.5
    assert mean_sufficient_stat(UnitVarGaussian(1), [2.0])[0] == 2.0


def test_logistic_glm_mean_matches_monte_carlo():
    fam = LogisticGLM(3, FixedDesign.random(3, 200, seed=5))
    theta = np.array([1.0, 0.0, 0.0])
    mc = sample(fam, theta, 10**6, seed=11).mean_stat
    np.testing.assert_allclose(mean_sufficient_stat(fam, theta), mc, atol=2e-3)


def test_fisher_examples():
    assert fisher_information(Bernoulli(1), [0.0]).entries[0, 0] == 0.25
    assert fisher_information(UnitVarGaussian(1), [7.3]).entries[0, 0] == 1.0
    # Var(-y^2/2) for y ~ N(0, 1/2) is 1/8
    F = fisher_information(GaussianPrecision(1), [2.0]).entries
    assert F[0, 0] == pytest.approx(0.125, rel=1e-14)


def test_gaussian_precision_fisher_is_monte_carlo_covariance():
    y = np.random.default_rng(0).normal(0.0, math.sqrt(0.5), 10**6)
    var = np.var(-0.5 * y * y)
    assert var == pytest.approx(0.125, rel=0.01)


@pytest.mark.parametrize("family", [f for f in _families() if not f.is_glm], ids=lambda f: f.kind)
def test_fisher_equals_sampled_covariance(family):
    """GLMs are covered by the averaged-conditional-variance test below."""
    rng = np.random.default_rng(4)
    theta = _random_theta(family, rng)
    n = 10**6
    T = sample(family, theta, n, seed=9).sufficient_stats
    cov = np.cov(T, rowvar=False)
    F = fisher_information(family, theta).entries
    centered = T - T.mean(axis=0)
    se = np.sqrt(np.var(centered[:, :, None] * centered[:, None, :], axis=0) / n)
    assert np.all(np.abs(cov - F) <= 5 * se + 1e-12)


def test_glm_fisher_is_averaged_conditional_variance():
    fam = LogisticGLM(3, FixedDesign.random(3, 300, "gaussian", seed=6))
    theta = np.array([0.4, -0.2, 0.9])
    X = fam.pool
    mu = 1 / (1 + np.exp(-X @ theta))
    expected = (X * (mu * (1 - mu))[:, None]).T @ X / X.shape[0]
    np.testing.assert_allclose(fisher_information(fam, theta).entries, expected, rtol=1e-12, atol=1e-15)


# ---- nll and its gradient --------------------------------------------------


def test_grad_examples():
    data = Dataset(np.array([[0.0], [2.0]]))
    assert grad_nll(UnitVarGaussian(1), [0.0], data)[0] == -1.0
    data = Dataset(np.array([[0.0], [1.0]]))
    assert grad_nll(Bernoulli(1), [0.0], data)[0] == 0.0


@pytest.mark.parametrize("family", _families(), ids=lambda f: f.kind)
def test_gradient_matches_finite_differences(family):
    rng = np.random.default_rng(12)
    theta0 = _random_theta(family, rng)
    data = sample(family, theta0, 200, seed=1)
    eps = np.finfo(float).eps ** (1 / 3)
    for _ in range(100):
        theta = _random_theta(family, rng)
        g = grad_nll(family, theta, data)
        fd = np.empty_like(g)
        for i in range(theta.size):
            h = eps * max(1.0, abs(theta[i]))
            e = np.zeros_like(theta)
            e[i] = h
            fd[i] = (nll(family, theta + e, data) - nll(family, theta - e, data)) / (2 * h)
        scale = max(1.0, np.max(np.abs(g)))
        assert np.max(np.abs(fd - g)) <= 1e-5 * scale


@pytest.mark.parametrize("family", _families(), ids=lambda f: f.kind)
def test_log_partition_convex_along_lines(family):
    rng = np.random.default_rng(3)
    for _ in range(50):
        a, b = _random_theta(family, rng), _random_theta(family, rng)
        ts = np.linspace(0, 1, 11)
        vals = np.array([log_partition(family, (1 - t) * a + t * b) for t in ts])
        second = vals[:-2] - 2 * vals[1:-1] + vals[2:]
        assert np.all(second >= -1e-12 * max(1.0, np.max(np.abs(vals))))


# ---- regret and Fisher risk ------------------------------------------------


def test_regret_examples():
    assert population_regret(UnitVarGaussian(1), [0.5], [0.0]) == 0.125
    assert population_regret(Bernoulli(1), [1.0], [0.0]) == pytest.approx(0.120115, abs=1e-6)
    assert population_regret(Bernoulli(1), [1.0], [0.0]) == pytest.approx(
        oracles.bernoulli_regret([1.0], [0.0]), rel=1e-13
    )
    assert population_regret(Bernoulli(2), [0.3, -1], [0.3, -1]) == 0.0


def test_bernoulli_regret_matches_high_precision(rng):
    fam = Bernoulli(4)
    for _ in range(20):
        a, b = rng.uniform(-4, 4, 4), rng.uniform(-4, 4, 4)
        assert population_regret(fam, a, b) == pytest.approx(oracles.bernoulli_regret(a, b), rel=1e-10, abs=1e-15)


@pytest.mark.parametrize("family", _families(), ids=lambda f: f.kind)
def test_regret_nonnegative(family):
    rng = np.random.default_rng(8)
    for _ in range(30):
        a, b = _random_theta(family, rng), _random_theta(family, rng)
        assert population_regret(family, a, b) >= 0.0
        assert population_regret(family, a, a) == pytest.approx(0.0, abs=1e-14)


def test_fisher_risk_examples(rng):
    assert fisher_risk(np.eye(2), [3.0, 4.0], [0.0, 0.0]) == 25.0
    assert fisher_risk([[0.25]], [0.2], [0.0]) == pytest.approx(0.01, rel=1e-15)
    L = rng.standard_normal((4, 4))
    d = rng.standard_normal(4)
    assert fisher_risk(L @ L.T, d, np.zeros(4)) == pytest.approx(float(np.sum((L.T @ d) ** 2)), rel=1e-12)
    with pytest.raises(ValidationError):
        fisher_risk(np.eye(3), [1.0, 2.0], [0.0, 0.0])


# ---- sampling ----------------------------------------------------------------


def test_sampling_examples():
    t = sample(Bernoulli(1), [0.0], 10**6, seed=0).sufficient_stats
    assert abs(t.mean() - 0.5) < 0.003
    t = sample(UnitVarGaussian(1), [1.0], 10**6, seed=0).sufficient_stats
    assert abs(t.var() - 1) < 0.01
    for fam in _families():
        theta = _random_theta(fam, np.random.default_rng(1))
        assert sample(fam, theta, 50, seed=3) == sample(fam, theta, 50, seed=3)


def test_gaussian_precision_sampler_covariance():
    fam = GaussianPrecision(3)
    P = np.array([[2.0, 0.3, 0.0], [0.3, 1.0, -0.2], [0.0, -0.2, 1.5]])
    n = 10**5
    T = sample(fam, pack_symmetric(P), n, seed=2).sufficient_stats
    # packed statistic: -y_i^2/2 on the diagonal, -y_i y_j off it
    weights = np.where(np.eye(3, dtype=bool), -0.5, -1.0)[np.triu_indices(3)]
    yy = T / weights
    est = unpack_symmetric(yy.mean(axis=0), 3)
    se = unpack_symmetric(yy.std(axis=0) / math.sqrt(n), 3)
    assert np.all(np.abs(est - np.linalg.inv(P)) <= 5 * se)


# ---- domain handling and value types ----------------------------------------


def test_domain_errors():
    fam = GaussianPrecision(2)
    bad = pack_symmetric(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert not fam.in_domain(bad)
    with pytest.raises(DomainError):
        log_partition(fam, bad)
    with pytest.raises(DomainError):
        sample(fam, bad, 5, seed=0)


def test_parameter_vector_support_annotation():
    pv = ParameterVector.annotated([0.0, 1.5, 0.0, -2.0])
    assert pv.support == frozenset({1, 3}) and pv.sparsity == 2
    with pytest.raises(ValidationError):
        ParameterVector(np.array([1.0, 0.0]), frozenset({1}))
    with pytest.raises(ValueError):
        pv.values[0] = 1.0


def test_dataset_and_fisher_validation():
    with pytest.raises(ValidationError):
        Dataset(np.zeros((0, 2)))
    with pytest.raises(ValidationError):
        FisherMatrix(np.array([[1.0, 0.5], [0.4, 1.0]]))
    with pytest.raises(ValidationError):
        FisherMatrix(np.diag([1.0, -1.0]))
    with pytest.raises(ValidationError):
        nll(Bernoulli(2), [0.0, 0.0], Dataset(np.zeros((3, 3))))


def test_pack_roundtrip(rng):
    A = rng.standard_normal((4, 4))
    S = A + A.T
    np.testing.assert_array_equal(unpack_symmetric(pack_symmetric(S), 4), S)


def test_family_from_spec():
    fam = family_from_spec({"kind": "linear-glm", "p": 4, "design": {"type": "fixed", "pool_size": 50, "seed": 1}})
    assert isinstance(fam, LinearGLM) and fam.pool.shape == (50, 4)
    fam = family_from_spec({"kind": "logistic-glm", "p": 2, "design": {"type": "truncated-gaussian", "bound": 2.0}})
    assert isinstance(fam.covariates, TruncatedGaussianDesign)
    assert np.all(np.linalg.norm(fam.pool, axis=1) <= 2.0 + 1e-12)
    with pytest.raises(ValidationError):
        family_from_spec({"kind": "poisson", "p": 2})
