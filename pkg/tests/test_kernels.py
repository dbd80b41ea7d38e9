"""The compiled kernels and the numpy fallback must agree."""
import os
import subprocess
import sys

import numpy as np
import pytest

from expfam import _kernels_py as py
from expfam import kernels

compiled = pytest.importorskip("expfam._kernels")


def _problem(seed, n=400, p=30, link=py.LINEAR):
    rng = np.random.default_rng(seed)
    X = rng.choice([-1.0, 1.0], size=(n, p))
    theta = np.zeros(p)
    theta[:3] = [0.5, -0.4, 0.3]
    eta = X @ theta
    if link == py.LINEAR:
        y = eta + rng.standard_normal(n)
    else:
        y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    return X, (y[:, None] * X).mean(axis=0)


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


def test_soft_threshold_agrees():
    x = np.random.default_rng(0).standard_normal(1000) * 3
    for tau in (0.0, 0.3, 5.0):
        np.testing.assert_array_equal(compiled.soft_threshold(x, tau), py.soft_threshold(x, tau))


def test_project_l1_ball_agrees():
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = rng.standard_normal(50) * 2
        r = rng.uniform(0.1, 20)
        a, b = compiled.project_l1_ball(x, r), py.project_l1_ball(x, r)
        np.testing.assert_allclose(a, b, atol=1e-12)
        assert np.abs(a).sum() <= r * (1 + 1e-12) or np.allclose(a, x)


def test_kkt_residual_agrees():
    rng = np.random.default_rng(2)
    g, x = rng.standard_normal(40), rng.standard_normal(40) * (rng.random(40) < 0.5)
    mask = (rng.random(40) < 0.7).astype(np.uint8)
    assert compiled.kkt_residual(g, x, 0.3) == pytest.approx(py.kkt_residual(g, x, 0.3), rel=1e-15)
    assert compiled.kkt_residual(g, x, 0.3, mask) == pytest.approx(py.kkt_residual(g, x, 0.3, mask), rel=1e-15)


@pytest.mark.parametrize("link", [py.LINEAR, py.LOGISTIC], ids=["linear", "logistic"])
def test_value_and_gradient_agree(link):
    X, tbar = _problem(3, link=link)
    theta = np.random.default_rng(4).standard_normal(X.shape[1]) * 0.2
    v1, g1 = compiled.glm_value_grad(X, tbar, theta, link)
    v2, g2 = py.glm_value_grad(X, tbar, theta, link)
    assert v1 == pytest.approx(v2, rel=1e-12)
    np.testing.assert_allclose(g1, g2, rtol=1e-10, atol=1e-14)


@pytest.mark.parametrize("accelerate", [False, True])
@pytest.mark.parametrize("link", [py.LINEAR, py.LOGISTIC], ids=["linear", "logistic"])
def test_solver_agrees(link, accelerate):
    X, tbar = _problem(5, link=link)
    p = X.shape[1]
    mask = np.ones(p, dtype=np.uint8)
    args = (X, tbar, link, 0.02, np.zeros(p), mask, 5000, 1e-9, 1.0, 0.5, accelerate)
    xa, _, kkt_a, it_a, conv_a = compiled.prox_grad_glm(*args)
    xb, _, kkt_b, it_b, conv_b = py.prox_grad_glm(*args)
    assert conv_a and conv_b
    assert kkt_a <= 1e-9 and kkt_b <= 1e-9
    np.testing.assert_allclose(xa, xb, atol=1e-7)


def test_pure_python_switch():
    code = "import expfam; print(expfam.BACKEND)"
    env = dict(os.environ, EXPFAM_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
