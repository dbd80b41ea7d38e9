import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from expfam import (
    AllDirections,
    Bernoulli,
    DivergenceError,
    DomainError,
    ExplicitDirections,
    FixedDesign,
    GaussianPrecision,
    LogisticGLM,
    RestrictedCone,
    UnitVarGaussian,
    ValidationError,
    central_moments_along,
    cumulants_along,
    fit_alpha,
    pack_symmetric,
    population_regret,
    regret_series,
    sandwich_check,
    series_window,
    verify_convexity,
    wishart_cumulant,
)
from expfam.families import cumulants_to_moments, moments_to_cumulants
from expfam.moments import direction_matrix, moment_profile


# ---- cumulants and moments ---------------------------------------------------


def test_gaussian_cumulants():
    c = cumulants_along(UnitVarGaussian(1), [0.7], [1.0], 8)
    np.testing.assert_array_equal(c, [1, 0, 0, 0, 0, 0, 0])


def test_bernoulli_cumulants_match_symbolic_oracle():
    c = cumulants_along(Bernoulli(1), [0.0], [1.0], 4)
    np.testing.assert_allclose(c, [0.25, 0.0, -0.125], atol=1e-15)
    for eta in (-2.3, 0.4, 1.7):
        got = cumulants_along(Bernoulli(1), [eta], [1.0], 10)
        np.testing.assert_allclose(got, oracles.bernoulli_cumulants(eta, 10), rtol=1e-10, atol=1e-14)


def test_bernoulli_central_moments():
    m = central_moments_along(Bernoulli(1), [0.0], [1.0], 4)
    np.testing.assert_allclose(m, [0.25, 0.0, 0.0625], atol=1e-15)
    got = central_moments_along(Bernoulli(1), [1.3], [1.0], 8)
    np.testing.assert_allclose(got, oracles.bernoulli_central_moments(1.3, 8), rtol=1e-12, atol=1e-15)


def test_gaussian_fourth_moment():
    assert central_moments_along(UnitVarGaussian(1), [0.0], [1.0], 4)[2] == 3.0


@pytest.mark.parametrize(
    "family, theta",
    [
        (Bernoulli(3), np.array([0.3, -1.0, 2.0])),
        (UnitVarGaussian(3), np.array([1.0, 2.0, 3.0])),
        (GaussianPrecision(2), pack_symmetric(np.array([[2.0, 0.3], [0.3, 1.0]]))),
        (LogisticGLM(3, FixedDesign.random(3, 300, seed=2)), np.array([0.5, -0.5, 0.2])),
    ],
    ids=["bernoulli", "gaussian", "precision", "logistic"],
)
def test_low_order_moments_equal_cumulants(family, theta):
    v = np.random.default_rng(0).standard_normal(theta.size)
    v /= np.linalg.norm(v)
    m = central_moments_along(family, theta, v, 6)
    c = cumulants_along(family, theta, v, 6)
    np.testing.assert_allclose(m[:2], c[:2], rtol=1e-10, atol=1e-15)


def test_numeric_cumulants_agree_with_closed_form():
    fam = Bernoulli(2)
    theta, v = np.array([0.3, -0.8]), np.array([0.6, 0.8])
    closed = cumulants_along(fam, theta, v, 6)
    numeric = cumulants_along(fam, theta, v, 6, method="numeric")
    np.testing.assert_allclose(numeric, closed, rtol=1e-5, atol=1e-8)


def test_gaussian_precision_cumulants_match_wishart():
    fam = GaussianPrecision(3)
    rng = np.random.default_rng(7)
    A = rng.standard_normal((3, 3))
    P = A @ A.T + np.eye(3)
    theta = pack_symmetric(P)
    for _ in range(3):
        B = rng.standard_normal((3, 3))
        V = B @ B.T
        v = pack_symmetric(V)
        c = cumulants_along(fam, theta, v, 6)
        # packed <v, t> equals -y^T unpack(v) y / 2
        Vq = -0.5 * fam.matrix(v)
        for k in range(2, 7):
            assert c[k - 2] == pytest.approx(wishart_cumulant(P, Vq, k), rel=1e-6)


def test_wishart_examples():
    assert wishart_cumulant(np.eye(2), np.eye(2), 2) == pytest.approx(4.0, rel=1e-15)
    assert wishart_cumulant(np.eye(1), np.eye(1), 3) == pytest.approx(8.0, rel=1e-15)
    for k in range(2, 7):
        assert wishart_cumulant(np.eye(3), np.zeros((3, 3)), k) == 0.0
    with pytest.raises(DomainError):
        wishart_cumulant(np.diag([1.0, -1.0]), np.eye(2), 2)


def test_wishart_against_derivative_oracle(rng):
    for p in (1, 2, 3):
        A, B = rng.standard_normal((p, p)), rng.standard_normal((p, p))
        P, V = A @ A.T + 0.5 * np.eye(p), B @ B.T
        eigs = np.linalg.eigvals(V @ np.linalg.inv(P)).real
        for k in range(2, 7):
            assert wishart_cumulant(P, V, k) == pytest.approx(oracles.wishart_derivative(eigs, k), rel=1e-8)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=7, max_size=7), st.floats(0.05, 4.0))
def test_cumulant_moment_roundtrip(tail, var):
    c = np.array([var] + tail)
    m = cumulants_to_moments(c)
    back = moments_to_cumulants(m)
    scale = np.maximum(1.0, np.abs(c))
    assert np.all(np.abs(back - c) <= 1e-9 * scale * max(1.0, np.max(np.abs(m))))


def test_moment_conversion_against_raw_moment_oracle():
    c = np.array([1.0, 0.5, -0.25, 0.3, 0.1, -0.2, 0.05])
    m = cumulants_to_moments(c)
    # zero-mean raw moments equal central moments; the oracle works from raw moments
    kappa = oracles.cumulants_from_moments([0.0] + list(m))
    np.testing.assert_allclose(kappa[1:], c, rtol=1e-12, atol=1e-14)


# ---- direction sets and alpha -------------------------------------------------


def test_cone_directions_are_unit_and_in_cone():
    V = direction_matrix(RestrictedCone(frozenset({0, 4}), 300, seed=1), 10)
    np.testing.assert_allclose(np.linalg.norm(V, axis=1), 1.0, rtol=1e-12)
    on = np.abs(V[:, [0, 4]]).sum(axis=1)
    off = np.abs(np.delete(V, [0, 4], axis=1)).sum(axis=1)
    assert np.all(off <= 3 * on + 1e-12)
    assert any(np.allclose(v, np.eye(10)[0]) for v in V)


def test_alpha_examples():
    assert fit_alpha(UnitVarGaussian(4), np.zeros(4), AllDirections(50), 8, "cumulant") == 0.0
    fam = GaussianPrecision(3)
    theta = pack_symmetric(np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.1], [0.0, 0.1, 1.5]]))
    a = fit_alpha(fam, theta, RestrictedCone(frozenset({0, 3}), 200, seed=0), 8, "cumulant")
    assert 0 < a <= math.sqrt(2) + 1e-9
    a = fit_alpha(Bernoulli(1), [0.0], ExplicitDirections(np.array([[1.0]])), 8, "moment")
    # the symmetric two-point law has kurtosis exactly 1, so alpha sits on the floor
    assert a == pytest.approx(1 / math.sqrt(12), rel=1e-12)
    assert 1 / math.sqrt(12) * (1 - 1e-12) <= a <= 2


def test_alpha_definition_holds_for_returned_value():
    fam = Bernoulli(3)
    theta = np.array([0.5, -1.0, 0.0])
    a, profiles = fit_alpha(fam, theta, AllDirections(40, seed=2), 8, "moment", return_profiles=True)
    for pr in profiles:
        m = pr.central_moments
        for k in range(3, 9):
            bound = 0.5 * math.factorial(k) * a ** (k - 2) * m[0] ** (k / 2)
            assert abs(m[k - 2]) <= bound * (1 + 1e-12)


def test_alpha_monotone_in_k_max_and_directions():
    fam = Bernoulli(4)
    theta = np.array([1.0, -0.5, 0.0, 2.0])
    by_k = [fit_alpha(fam, theta, AllDirections(30, seed=1), k) for k in range(3, 10)]
    assert all(b >= a for a, b in zip(by_k, by_k[1:]))
    vecs = direction_matrix(AllDirections(60, seed=4), 4)
    by_dir = [fit_alpha(fam, theta, ExplicitDirections(vecs[:m]), 8) for m in (5, 20, 60)]
    assert by_dir[0] <= by_dir[1] <= by_dir[2]


def test_kurtosis_floor():
    rng = np.random.default_rng(5)
    fam = Bernoulli(3)
    for _ in range(20):
        theta = rng.uniform(-3, 3, 3)
        v = rng.standard_normal(3)
        v /= np.linalg.norm(v)
        pr = moment_profile(fam, theta, v, 8)
        assert pr.alpha_moment >= (1 - 1e-12) / math.sqrt(12)


def test_fit_alpha_rejects_bad_arguments():
    with pytest.raises(ValidationError):
        fit_alpha(Bernoulli(1), [0.0], AllDirections(3), 2)
    with pytest.raises(ValidationError):
        fit_alpha(Bernoulli(1), [0.0], AllDirections(3), 8, "median")


def test_degenerate_direction_contributes_nothing():
    fam = Bernoulli(2)
    # coordinate 1 sits at a huge natural parameter: variance underflows to 0
    a = fit_alpha(fam, [0.0, 800.0], ExplicitDirections(np.array([[0.0, 1.0]])), 6, "moment")
    assert a == 0.0


# ---- regret series -------------------------------------------------------------


def test_series_examples():
    c = cumulants_along(UnitVarGaussian(1), [0.0], [0.5], 30)
    assert regret_series(c, 1.0, "cumulant", alpha=0.0).value == 0.125
    fam = Bernoulli(1)
    c = cumulants_along(fam, [0.0], [1.0], 30)
    val = regret_series(c, 1.0, "cumulant", alpha=2.0)
    assert val.value == pytest.approx(population_regret(fam, [1.0], [0.0]), abs=1e-8)
    assert regret_series(c, 0.0, "cumulant").value == 0.0
    m = central_moments_along(fam, [0.0], [1.0], 30)
    assert regret_series(m, 0.0, "moment").value == 0.0


def test_moment_series_matches_regret():
    fam = Bernoulli(1)
    m = central_moments_along(fam, [0.4], [0.5], 30)
    val = regret_series(m, 1.0, "moment", alpha=2.5)
    assert abs(val.value - population_regret(fam, [0.9], [0.4])) <= max(val.tail_bound, 1e-14)


def test_series_outside_window_diverges():
    c = cumulants_along(Bernoulli(1), [0.0], [4.0], 30)
    with pytest.raises(DivergenceError):
        regret_series(c, 1.0, "cumulant", alpha=2.0, tol=1e-6)


def test_series_window_examples():
    assert series_window(1.0, 0.0) == (1.0, pytest.approx(1 / 3), pytest.approx(2 / 3))
    s, lo, hi = series_window(0.25, 2.0)
    # 16 * alpha^2 * m2 = 16, so the bracket is m2/16 * (1/3, 2/3)
    assert s == 0.25 and lo == pytest.approx(1 / 192) and hi == pytest.approx(1 / 96)
    assert series_window(0.0, 3.0)[1:] == (0.0, 0.0)


def test_series_at_window_point_lies_in_bracket(rng):
    fam = Bernoulli(1)
    for _ in range(50):
        eta = rng.uniform(-2, 2)
        d = rng.uniform(0.2, 5) * rng.choice([-1, 1])
        c = cumulants_along(fam, [eta], [d], 30)
        alpha = 1 / math.sqrt(c[0] / d**2)
        s_star, lo, hi = series_window(c[0], alpha)
        val = regret_series(c, s_star, "cumulant", alpha=alpha).value
        assert lo <= val <= hi


# ---- sandwich ----------------------------------------------------------------------


def test_sandwich_examples():
    rep = sandwich_check(UnitVarGaussian(1), [0.0], [3.0], 0.0)
    assert rep.precondition_loss and rep.precondition_fisher and rep.ratio == 0.5 and rep.sandwich_holds
    rep = sandwich_check(Bernoulli(1), [0.0], [0.2], 2.0)
    assert rep.fisher_risk == pytest.approx(0.01) and rep.precondition_fisher
    assert rep.regret == pytest.approx(-0.1 + math.log((1 + math.exp(0.2)) / 2), rel=1e-12)
    assert rep.regret == pytest.approx(0.004990, abs=5e-6)
    assert rep.ratio == pytest.approx(0.499, abs=1e-3) and rep.sandwich_holds
    rep = sandwich_check(Bernoulli(1), [0.0], [5.0], 2.0)
    assert not rep.precondition_loss and not rep.precondition_fisher
    assert not rep.applicable and not rep.violation


def test_verify_convexity_reports():
    rep = verify_convexity(UnitVarGaussian(3), np.zeros(3), 0.0, cases=200, seed=1)
    assert rep["violations"] == 0 and rep["min_ratio"] == pytest.approx(0.5, abs=1e-12)
    assert rep["max_ratio"] == pytest.approx(0.5, abs=1e-12)
    rep = verify_convexity(Bernoulli(1), [0.0], 2.0, cases=200, seed=2, radius_range=(0.1, 0.1))
    assert rep["applicable"] == 200 and rep["violations"] == 0
    assert 0.25 <= rep["min_ratio"] <= rep["max_ratio"] <= 0.75
    rep = verify_convexity(Bernoulli(2), np.zeros(2), 2.0, cases=300, seed=3, radius_range=(5.0, 50.0))
    assert rep["violations"] == 0 and rep["not_applicable"] > 0
