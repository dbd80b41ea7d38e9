"""Compare the compiled kernels with the numpy fallback.

Run ``python3 benchmarks/bench_kernels.py``.  Both backends solve the same
problems; the script checks that the estimates agree before timing them.
"""
import argparse
import time

import numpy as np

from expfam import _kernels_py as py

try:
    from expfam import _kernels as cy
except ImportError:  # extension not built
    cy = None


def problem(n, p, s, link, seed):
    rng = np.random.default_rng(seed)
    X = rng.choice([-1.0, 1.0], size=(n, p))
    theta = np.zeros(p)
    theta[rng.choice(p, s, replace=False)] = rng.choice([-1.0, 1.0], s)
    eta = X @ theta
    if link == py.LOGISTIC:
        y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    else:
        y = eta + rng.standard_normal(n)
    tbar = (y[:, None] * X).mean(axis=0)
    lam = 2 * np.sqrt(np.log(p / 0.05) / n)
    return X, tbar, lam


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--sizes", default="1000x50,8000x200,20000x500")
    args = ap.parse_args()
    if cy is None:
        print("compiled extension not available; nothing to compare")
        return
    print(f"{'problem':<24}{'accel':>6}{'numpy [s]':>12}{'cython [s]':>12}{'speedup':>9}{'iters':>7}{'max diff':>11}")
    for size in args.sizes.split(","):
        n, p = (int(v) for v in size.split("x"))
        for link, name in ((py.LINEAR, "linear"), (py.LOGISTIC, "logistic")):
            X, tbar, lam = problem(n, p, 5, link, 0)
            for accel in (False, True):
                call = (X, tbar, link, lam, np.zeros(p), None, 10000, 1e-8, 1.0, 0.5, accel)
                t_py, r_py = best_of(lambda: py.prox_grad_glm(*call), args.repeat)
                t_cy, r_cy = best_of(lambda: cy.prox_grad_glm(*call), args.repeat)
                diff = float(np.max(np.abs(r_py[0] - r_cy[0])))
                label = f"{name} n={n} p={p}"
                print(f"{label:<24}{str(accel):>6}{t_py:>12.4f}{t_cy:>12.4f}{t_py / t_cy:>9.2f}{r_cy[3]:>7}{diff:>11.2e}")
    x = np.random.default_rng(1).standard_normal(100000)
    for fname, args_ in (("soft_threshold", (x, 0.5)), ("project_l1_ball", (x, 10.0))):
        t_py, a = best_of(lambda: getattr(py, fname)(*args_), args.repeat)
        t_cy, b = best_of(lambda: getattr(cy, fname)(*args_), args.repeat)
        print(f"{fname + ' p=100000':<30}{t_py:>12.4f}{t_cy:>12.4f}{t_py / t_cy:>9.2f}{'':>7}{np.max(np.abs(a - b)):>11.2e}")


if __name__ == "__main__":
    main()
