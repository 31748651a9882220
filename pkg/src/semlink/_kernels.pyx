# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; semantics identical to ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport erfc, exp, log, log1p, sqrt, INFINITY

from ._pykernels import _fill_ties
from .errors import SolverError

cnp.import_array()

cdef double SQRT2 = sqrt(2.0)
cdef double SQRT2PI = sqrt(2.0 * 3.141592653589793)
cdef double LN2 = log(2.0)
cdef int MAX_DOUBLINGS = 2000


def q_func(x):
    cdef cnp.ndarray[double, ndim=1] xa, out
    arr = np.asarray(x, dtype=np.float64)
    xa = np.ascontiguousarray(arr).ravel()
    out = np.empty(xa.shape[0])
    cdef Py_ssize_t i
    for i in range(xa.shape[0]):
        out[i] = 0.5 * erfc(xa[i] / SQRT2)
    return out.reshape(arr.shape) if arr.ndim else float(out[0])


cdef inline double _rho_hat(double p, double g, double sqd, double rate) nogil:
    return 0.5 * erfc(sqd * (log1p(g * p) - rate * LN2) / SQRT2)


def rho_hat_vec(p, g, blocklength, rate):
    cdef cnp.ndarray[double, ndim=1] pa, ga, out
    pb, gb = np.broadcast_arrays(np.asarray(p, dtype=np.float64), np.asarray(g, dtype=np.float64))
    shape = pb.shape
    pa = np.ascontiguousarray(pb, dtype=np.float64).ravel()
    ga = np.ascontiguousarray(gb, dtype=np.float64).ravel()
    out = np.empty(pa.shape[0])
    cdef double sqd = sqrt(<double>blocklength), r = rate
    cdef Py_ssize_t i
    for i in range(pa.shape[0]):
        out[i] = _rho_hat(pa[i], ga[i], sqd, r)
    return out.reshape(shape)


cdef inline double _surrogate(double p, double g, double sqd, double rate, double c2, double k) nogil:
    if g * p >= c2 - 1.0:
        return _rho_hat(p, g, sqd, rate)
    return -k * g / c2 * p + 0.5 + k * (c2 - 1.0) / c2


def surrogate_vec(p, g, blocklength, rate):
    cdef cnp.ndarray[double, ndim=1] pa, ga, out
    pb, gb = np.broadcast_arrays(np.asarray(p, dtype=np.float64), np.asarray(g, dtype=np.float64))
    shape = pb.shape
    pa = np.ascontiguousarray(pb, dtype=np.float64).ravel()
    ga = np.ascontiguousarray(gb, dtype=np.float64).ravel()
    out = np.empty(pa.shape[0])
    cdef double sqd = sqrt(<double>blocklength), r = rate
    cdef double c2 = 2.0 ** r, k = sqd / SQRT2PI
    cdef Py_ssize_t i
    for i in range(pa.shape[0]):
        out[i] = _surrogate(pa[i], ga[i], sqd, r, c2, k)
    return out.reshape(shape)


def weighted_surrogate(p, w, g, blocklength, rate):
    cdef double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    cdef double sqd = sqrt(<double>blocklength), r = rate
    cdef double c2 = 2.0 ** r, k = sqd / SQRT2PI, acc = 0.0
    cdef Py_ssize_t i
    for i in range(pv.shape[0]):
        acc += wv[i] * _surrogate(pv[i], gv[i], sqd, r, c2, k)
    return acc


def weighted_rho_hat(p, w, g, blocklength, rate):
    cdef double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    cdef double sqd = sqrt(<double>blocklength), r = rate, acc = 0.0
    cdef Py_ssize_t i
    for i in range(pv.shape[0]):
        acc += wv[i] * _rho_hat(pv[i], gv[i], sqd, r)
    return acc


cdef double _power_sum(double x, double[::1] xi, double[::1] gs, double[::1] out,
                       double sqd, double inv_d, double c2) nogil:
    cdef Py_ssize_t i
    cdef double d, s, acc = 0.0
    for i in range(xi.shape[0]):
        d = x - xi[i]
        if d > 0.0:
            s = -1.0 / sqd + sqrt(inv_d + 2.0 * d)
            out[i] = (c2 * exp(s / sqd) - 1.0) / gs[i]
        else:
            out[i] = 0.0
        acc += out[i]
    return acc


def dual_allocate(w, g, double budget, blocklength, double rate,
                  double xtol=1e-14, int max_iter=400):
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    cdef Py_ssize_t n = wv.shape[0], i
    cdef double sqd = sqrt(<double>blocklength), inv_d = 1.0 / <double>blocklength
    cdef double c2 = 2.0 ** rate, tmax = 0.0, ti
    xi_arr = np.empty(n)
    gs_arr = np.empty(n)
    caps_arr = np.empty(n)
    p_arr = np.empty(n)
    cdef double[::1] xi = xi_arr, gs = gs_arr, caps = caps_arr, p = p_arr
    for i in range(n):
        ti = wv[i] * sqd * gv[i] / (SQRT2PI * c2)
        if ti > tmax:
            tmax = ti
    cdef int n_active = 0
    for i in range(n):
        ti = wv[i] * sqd * gv[i] / (SQRT2PI * c2)
        if ti > 0.0:
            xi[i] = log(tmax) - log(ti)
            gs[i] = gv[i]
            caps[i] = (c2 - 1.0) / gv[i]
            n_active += 1
        else:
            xi[i] = INFINITY
            gs[i] = 1.0
            caps[i] = 0.0

    cdef double hi = 1.0, lo = 0.0, mid
    cdef int k = 0, it = 0
    while _power_sum(hi, xi, gs, p, sqd, inv_d, c2) < budget:
        hi *= 2.0
        k += 1
        if k > MAX_DOUBLINGS:
            raise SolverError("could not bracket the budget multiplier", budget)
    while hi - lo > xtol * (1.0 + hi):
        if it >= max_iter:
            raise SolverError("bisection hit the iteration cap", hi - lo)
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _power_sum(mid, xi, gs, p, sqd, inv_d, c2) >= budget:
            hi = mid
        else:
            lo = mid
        it += 1
    cdef double r = budget - _power_sum(lo, xi, gs, p, sqd, inv_d, c2)
    if r > 0.0:
        ties = np.flatnonzero((xi_arr >= lo) & (xi_arr < hi))
        if ties.size:
            r = _fill_ties(p_arr, r, xi_arr, ties, caps_arr)
    cdef double on_sum = 0.0
    if r > 0.0:
        for i in range(n):
            on_sum += p[i]
        if on_sum > 0.0:
            for i in range(n):
                p[i] *= (on_sum + r) / on_sum
        else:
            for i in range(n):
                if caps[i] > 0.0:
                    p[i] += r / n_active
    return p_arr, it, hi - lo
