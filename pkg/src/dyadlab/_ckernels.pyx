# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; same signatures as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, pow

cnp.import_array()

DEF KIND_ZERO = 0
DEF KIND_HILBERT = 1
DEF KIND_RIESZ = 2
DEF KIND_FRACINT = 3


cdef inline double _ramp(double t) noexcept nogil:
    if t <= 0.0:
        return 0.0
    if t >= 1.0:
        return 1.0
    return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


cdef inline int _pow_code(double e) noexcept nogil:
    """0..4 for integer exponents, 10..14 for half-integers, -1 otherwise."""
    cdef int k
    for k in range(5):
        if e == k:
            return k
        if e == k + 0.5:
            return 10 + k
    return -1


cdef inline double _fpow(double x, double e, int code) noexcept nogil:
    # numpy fast-paths small exponents; generic pow would lose to it
    cdef double out = 1.0
    cdef int k
    if code < 0:
        return pow(x, e)
    k = code % 10
    while k > 0:
        out = out * x
        k = k - 1
    if code >= 10:
        out = out * sqrt(x)
    return out


cdef inline double _profile(double r, double delta, double R, double w, bint smooth) noexcept nogil:
    if smooth:
        return _ramp((r - delta) / (w * delta)) * _ramp((R - r) / (w * R))
    return 1.0 if (r > delta and r < R) else 0.0


def truncation_profile(r, double delta, double R, double w, bint smooth):
    cdef const double[::1] rv = np.ascontiguousarray(np.ravel(r), dtype=np.float64)
    out = np.empty(rv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    for i in range(rv.shape[0]):
        ov[i] = _profile(rv[i], delta, R, w, smooth)
    return out.reshape(np.shape(r))


def kernel_matrix(xs, ys, int kind, double alpha, int comp, double delta, double R, double w, bint smooth):
    cdef const double[:, ::1] X = np.ascontiguousarray(xs, dtype=np.float64)
    cdef const double[:, ::1] Y = np.ascontiguousarray(ys, dtype=np.float64)
    cdef Py_ssize_t nx = X.shape[0], ny = Y.shape[0], n = X.shape[1]
    out = np.zeros((nx, ny))
    cdef double[:, ::1] O = out
    cdef Py_ssize_t i, j, d
    cdef double r2, r, t, k, eta, dc
    cdef double e_riesz = n + 1 - alpha, e_frac = n - alpha
    cdef int c_riesz = _pow_code(e_riesz), c_frac = _pow_code(e_frac)
    with nogil:
        for i in range(nx):
            for j in range(ny):
                r2 = 0.0
                for d in range(n):
                    t = X[i, d] - Y[j, d]
                    r2 = r2 + t * t
                if r2 == 0.0:
                    continue
                r = sqrt(r2)
                eta = _profile(r, delta, R, w, smooth)
                if eta == 0.0:
                    continue
                if kind == KIND_HILBERT:
                    k = 1.0 / (X[i, 0] - Y[j, 0])
                elif kind == KIND_RIESZ:
                    dc = X[i, comp] - Y[j, comp]
                    k = dc / _fpow(r, e_riesz, c_riesz)
                elif kind == KIND_FRACINT:
                    k = 1.0 / _fpow(r, e_frac, c_frac)
                else:
                    k = 0.0
                O[i, j] = k * eta
    return out


def poisson_sums(centers, sides, ys, masses, double alpha, double m, bint reproducing):
    cdef const double[:, ::1] C = np.ascontiguousarray(centers, dtype=np.float64)
    cdef const double[::1] S = np.ascontiguousarray(sides, dtype=np.float64)
    cdef const double[:, ::1] Y = np.ascontiguousarray(ys, dtype=np.float64)
    marr = np.asarray(masses, dtype=np.float64)
    one_d = marr.ndim == 1
    cdef const double[:, ::1] M = np.ascontiguousarray(marr.reshape(marr.shape[0], -1))
    cdef Py_ssize_t nc = C.shape[0], ny = Y.shape[0], n = Y.shape[1], p = M.shape[1]
    out = np.zeros((nc, p))
    cdef double[:, ::1] O = out
    cdef Py_ssize_t i, j, d, q
    cdef double r2, r, t, ell, v, a, num
    cdef double e_rep = n - alpha, e_den = n + m - alpha
    cdef int c_rep = _pow_code(e_rep), c_den = _pow_code(e_den), c_m = _pow_code(m)
    with nogil:
        for i in range(nc):
            ell = S[i]
            num = _fpow(ell, m, c_m)
            for j in range(ny):
                r2 = 0.0
                for d in range(n):
                    t = C[i, d] - Y[j, d]
                    r2 = r2 + t * t
                r = sqrt(r2)
                if reproducing:
                    a = ell + r
                    v = _fpow(ell / (a * a), e_rep, c_rep)
                else:
                    v = num / _fpow(ell + r, e_den, c_den)
                for q in range(p):
                    O[i, q] = O[i, q] + v * M[j, q]
    return out[:, 0].copy() if one_d else out


def frac_potential(xs, ys, masses, double alpha):
    cdef const double[:, ::1] X = np.ascontiguousarray(xs, dtype=np.float64)
    cdef const double[:, ::1] Y = np.ascontiguousarray(ys, dtype=np.float64)
    cdef const double[::1] M = np.ascontiguousarray(masses, dtype=np.float64)
    cdef Py_ssize_t nx = X.shape[0], ny = Y.shape[0], n = X.shape[1]
    out = np.zeros(nx)
    cdef double[::1] O = out
    cdef Py_ssize_t i, j, d
    cdef double r2, t, acc
    cdef double e = n - alpha
    cdef int code = _pow_code(e)
    with nogil:
        for i in range(nx):
            acc = 0.0
            for j in range(ny):
                r2 = 0.0
                for d in range(n):
                    t = X[i, d] - Y[j, d]
                    r2 = r2 + t * t
                if r2 > 0.0:
                    acc = acc + M[j] / _fpow(sqrt(r2), e, code)
            O[i] = acc
    return out
