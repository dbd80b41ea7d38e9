# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: soft-thresholding, L1-ball projection, and the GLM proximal-gradient loop.

The GLM loop exploits sparsity of the iterate: the linear predictor only
touches the nonzero columns, and the gradient only the allowed ones.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, fabs, sqrt

cnp.import_array()

cdef enum:
    LOGISTIC = 0
    LINEAR = 1

# Below this relative size a difference of loss values is dominated by rounding.
cdef double RELIABLE = 1e-10


cdef inline double _sign(double v) noexcept nogil:
    return (v > 0) - (v < 0)


def soft_threshold(x, double tau):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xv = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t i, n = xv.shape[0]
    out = np.empty(n)
    cdef double[::1] o = out
    cdef double a
    for i in range(n):
        a = fabs(xv[i]) - tau
        o[i] = _sign(xv[i]) * a if a > 0 else 0.0
    return out.reshape(np.shape(x))


def project_l1_ball(x, double radius):
    xa = np.asarray(x, dtype=np.float64)
    if radius <= 0:
        return np.zeros_like(xa)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a = np.abs(xa).reshape(-1)
    if a.sum() <= radius:
        return xa.copy()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] u = np.sort(a)[::-1].copy()
    cdef Py_ssize_t j, rho = 0, n = u.shape[0]
    cdef double css = 0.0, css_rho = 0.0
    for j in range(n):
        css += u[j]
        if u[j] * (j + 1) > css - radius:
            rho = j
            css_rho = css
    cdef double shift = (css_rho - radius) / (rho + 1.0)
    return np.sign(xa) * np.maximum(np.abs(xa) - shift, 0.0)


cdef double _kkt(double[::1] g, double[::1] x, double lam, unsigned char[::1] mask) noexcept nogil:
    cdef Py_ssize_t j
    cdef double r, worst = 0.0
    for j in range(x.shape[0]):
        if not mask[j]:
            continue
        if x[j] != 0.0:
            r = fabs(g[j] + lam * _sign(x[j]))
        else:
            r = fabs(g[j]) - lam
        if r > worst:
            worst = r
    return worst


def kkt_residual(grad, x, double lam, mask=None):
    g = np.ascontiguousarray(grad, dtype=np.float64)
    xx = np.ascontiguousarray(x, dtype=np.float64)
    m = np.ones(xx.shape[0], dtype=np.uint8) if mask is None else np.ascontiguousarray(mask, dtype=np.uint8)
    return float(_kkt(g, xx, lam, m))


cdef inline double _log1pexp(double e) noexcept nogil:
    if e > 0:
        return e + log1p(exp(-e))
    return log1p(exp(e))


cdef inline double _sigmoid(double e) noexcept nogil:
    cdef double z
    if e >= 0:
        return 1.0 / (1.0 + exp(-e))
    z = exp(e)
    return z / (1.0 + z)


cdef inline void _neumaier(double v, double* total, double* comp) noexcept nogil:
    cdef double t = total[0] + v
    if fabs(total[0]) >= fabs(v):
        comp[0] += (total[0] - t) + v
    else:
        comp[0] += (v - t) + total[0]
    total[0] = t


cdef double _value(const double[:, ::1] X, const double[::1] tbar, double[::1] theta, int link,
                   double[::1] eta, Py_ssize_t[::1] nz) noexcept nogil:
    """Loss at theta; leaves the linear predictor in eta.

    The row sum is compensated: the line search compares losses whose
    difference can be far below the rounding error of a plain sum.
    """
    cdef Py_ssize_t i, k, j, n = X.shape[0], p = X.shape[1], m = 0
    cdef double acc, total = 0.0, comp = 0.0, lin = 0.0, lcomp = 0.0
    for j in range(p):
        if theta[j] != 0.0:
            nz[m] = j
            m += 1
            _neumaier(theta[j] * tbar[j], &lin, &lcomp)
    for i in range(n):
        acc = 0.0
        for k in range(m):
            j = nz[k]
            acc += X[i, j] * theta[j]
        eta[i] = acc
        if link == LOGISTIC:
            _neumaier(_log1pexp(acc), &total, &comp)
        else:
            _neumaier(0.5 * acc * acc, &total, &comp)
    return (total + comp) / n - (lin + lcomp)


cdef void _grad(const double[:, ::1] X, const double[::1] tbar, double[::1] eta, int link,
                unsigned char[::1] mask, double[::1] g) noexcept nogil:
    cdef Py_ssize_t i, j, n = X.shape[0], p = X.shape[1]
    cdef double mu
    for j in range(p):
        g[j] = 0.0
    for i in range(n):
        mu = _sigmoid(eta[i]) if link == LOGISTIC else eta[i]
        for j in range(p):
            if mask[j]:
                g[j] += X[i, j] * mu
    for j in range(p):
        g[j] = g[j] / n - tbar[j] if mask[j] else 0.0


def glm_value_grad(X, tbar, theta, int link):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] tb = np.ascontiguousarray(tbar, dtype=np.float64)
    cdef double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0], p = Xv.shape[1]
    eta = np.empty(n)
    nz = np.empty(p, dtype=np.intp)
    g = np.empty(p)
    mask = np.ones(p, dtype=np.uint8)
    cdef double v = _value(Xv, tb, th, link, eta, nz)
    _grad(Xv, tb, eta, link, mask, g)
    return v, g


def prox_grad_glm(X, tbar, int link, double lam, theta0, mask, int max_iters, double tol,
                  double step0, double shrink, bint accelerate):
    """Same algorithm as the numpy ``proximal_gradient`` specialised to GLM losses."""
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] tb = np.ascontiguousarray(tbar, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0], p = Xv.shape[1], j
    cdef unsigned char[::1] mk = np.ascontiguousarray(
        np.ones(p, dtype=np.uint8) if mask is None else np.asarray(mask, dtype=np.uint8))

    xa = np.array(theta0, dtype=np.float64)
    ya = np.empty(p); za = np.empty(p); xpa = np.empty(p)
    gxa = np.empty(p); gya = np.empty(p); gza = np.empty(p)
    eta = np.empty(n); nzbuf = np.empty(p, dtype=np.intp)
    cdef double[::1] x = xa, y = ya, z = za, xp = xpa
    cdef double[::1] gx = gxa, gy = gya, gz = gza
    cdef double[::1] et = eta
    cdef Py_ssize_t[::1] nz = nzbuf

    for j in range(p):
        if not mk[j]:
            x[j] = 0.0
    cdef double L = 1.0 / step0
    cdef double fx, fy, fz, Fx, Fz, l1, lin, quad, curv, d, a, t = 1.0, t_new, beta, kkt
    cdef bint have_gz = False, extrapolated = False
    fx = _value(Xv, tb, x, link, et, nz)
    _grad(Xv, tb, et, link, mk, gx)
    l1 = 0.0
    for j in range(p):
        l1 += fabs(x[j])
    Fx = fx + lam * l1
    trace = [Fx]
    y[:] = x
    gy[:] = gx
    fy = fx
    kkt = _kkt(gx, x, lam, mk)
    if kkt <= tol:
        return xa, np.array(trace), kkt, 0, True

    cdef int it = 0
    for it in range(1, max_iters + 1):
        L = L * shrink
        if L < 1e-12:
            L = 1e-12
        while True:
            lin = 0.0
            quad = 0.0
            l1 = 0.0
            for j in range(p):
                if mk[j]:
                    a = y[j] - gy[j] / L
                    d = fabs(a) - lam / L
                    z[j] = _sign(a) * d if d > 0 else 0.0
                else:
                    z[j] = 0.0
                d = z[j] - y[j]
                lin += gy[j] * d
                quad += d * d
                l1 += fabs(z[j])
            with nogil:
                fz = _value(Xv, tb, z, link, et, nz)
            have_gz = False
            if fabs(fz - fy) > RELIABLE * (fabs(fy) if fabs(fy) > 1.0 else 1.0):
                if fz - fy - lin <= 0.5 * L * quad:
                    break
            else:
                with nogil:
                    _grad(Xv, tb, et, link, mk, gz)
                have_gz = True
                curv = 0.0
                for j in range(p):
                    curv += (gz[j] - gy[j]) * (z[j] - y[j])
                if curv <= L * quad:
                    break
            L /= shrink
            if L > 1e300:
                return xa, np.array(trace), kkt, it, False
        Fz = fz + lam * l1
        if extrapolated and Fz > Fx:
            t = 1.0
            extrapolated = False
            y[:] = x
            gy[:] = gx
            fy = fx
            trace.append(Fx)
            continue
        if not have_gz:
            with nogil:
                _grad(Xv, tb, et, link, mk, gz)
        if accelerate:
            t_new = 0.5 * (1.0 + sqrt(1.0 + 4.0 * t * t))
            beta = (t - 1.0) / t_new
            xp[:] = x
            x[:] = z
            gx[:] = gz
            fx = fz
            Fx = Fz
            t = t_new
            extrapolated = beta != 0.0
            if extrapolated:
                for j in range(p):
                    y[j] = x[j] + beta * (x[j] - xp[j])
                with nogil:
                    fy = _value(Xv, tb, y, link, et, nz)
                    _grad(Xv, tb, et, link, mk, gy)
            else:
                y[:] = x
                gy[:] = gx
                fy = fx
        else:
            x[:] = z
            gx[:] = gz
            fx = fz
            Fx = Fz
            y[:] = x
            gy[:] = gx
            fy = fx
        trace.append(Fx)
        kkt = _kkt(gx, x, lam, mk)
        if kkt <= tol:
            return xa, np.array(trace), kkt, it, True
    return xa, np.array(trace), kkt, it, False
