"""Pure-Python (numpy) implementations of the hot kernels.

Mirrors ``_kernels.pyx`` function for function; selected by
:mod:`semlink.kernels` when the compiled module is unavailable.
"""

import math

import numpy as np
from scipy.special import erfc

from .errors import SolverError

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)
_LN2 = math.log(2.0)

MAX_DOUBLINGS = 2000


def q_func(x):
    out = 0.5 * erfc(np.asarray(x, dtype=np.float64) / _SQRT2)
    return out if out.ndim else float(out)


def rho_hat_vec(p, g, blocklength, rate):
    p = np.asarray(p, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    z = math.sqrt(blocklength) * (np.log1p(g * p) - rate * _LN2)
    return 0.5 * erfc(z / _SQRT2)


def surrogate_vec(p, g, blocklength, rate):
    p = np.asarray(p, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    c2 = 2.0 ** rate
    k = math.sqrt(blocklength) / _SQRT2PI
    mu = -k * g / c2
    tau = 0.5 + k * (c2 - 1.0) / c2
    convex = g * p >= c2 - 1.0
    return np.where(convex, rho_hat_vec(p, g, blocklength, rate), mu * p + tau)


def weighted_surrogate(p, w, g, blocklength, rate):
    return float(np.dot(w, surrogate_vec(p, g, blocklength, rate)))


def weighted_rho_hat(p, w, g, blocklength, rate):
    return float(np.dot(w, rho_hat_vec(p, g, blocklength, rate)))


def _fill_ties(p, r, order_x, idx, caps):
    """Hand residual ``r`` to packets ``idx`` in ascending ``order_x``, ties split evenly."""
    xs = order_x[idx]
    for x in np.unique(xs):
        if r <= 0.0:
            break
        group = list(idx[xs == x])
        while group and r > 0.0:
            share = r / len(group)
            room = caps[group] - p[group]
            full = room <= share
            if full.any():
                for k in np.asarray(group)[full]:
                    r -= caps[k] - p[k]
                    p[k] = caps[k]
                group = [k for k, f in zip(group, full) if not f]
            else:
                p[group] += share
                r = 0.0
    return r


def dual_allocate(w, g, budget, blocklength, rate, xtol=1e-14, max_iter=400):
    """Minimize sum_i w_i G_i(P_i) s.t. sum P_i = budget, P_i >= 0.

    Bisection on the log budget multiplier ``x = ln(t_max / lambda)``; for a
    given multiplier every packet's optimal power is closed form.  Returns
    ``(powers, iterations, bracket_width)``.  Requires some ``w_i g_i > 0``.
    """
    w = np.asarray(w, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    sqd = math.sqrt(blocklength)
    c2 = 2.0 ** rate
    t = w * sqd * g / (_SQRT2PI * c2)
    active = t > 0.0
    tmax = t.max()
    xi = np.full(t.shape, np.inf)
    xi[active] = math.log(tmax) - np.log(t[active])
    gs = np.where(active, g, 1.0)
    caps = np.where(active, (c2 - 1.0) / gs, 0.0)

    def power(x):
        d = x - xi
        on = d > 0.0
        s = -1.0 / sqd + np.sqrt(1.0 / blocklength + 2.0 * np.where(on, d, 0.0))
        with np.errstate(over="ignore"):
            return np.where(on, (c2 * np.exp(s / sqd) - 1.0) / gs, 0.0)

    hi = 1.0
    n = 0
    while power(hi).sum() < budget:
        hi *= 2.0
        n += 1
        if n > MAX_DOUBLINGS:
            raise SolverError("could not bracket the budget multiplier", budget)
    lo = 0.0
    it = 0
    while hi - lo > xtol * (1.0 + hi):
        if it >= max_iter:
            raise SolverError("bisection hit the iteration cap", hi - lo)
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if power(mid).sum() >= budget:
            hi = mid
        else:
            lo = mid
        it += 1
    p = power(lo)
    r = budget - p.sum()
    ties = np.flatnonzero((xi >= lo) & (xi < hi))
    if r > 0.0 and ties.size:
        r = _fill_ties(p, r, xi, ties, caps)
    if r > 0.0:
        on = p > 0.0
        if on.any():
            p[on] *= (p[on].sum() + r) / p[on].sum()
        else:
            p[active] += r / active.sum()
    return p, it, hi - lo
