"""Semantic-aware power allocation and its baselines.

The weighted packet-error objective is made tractable by bounding the
channel dispersion by one (``rho_hat``) and replacing the concave low-power
part of ``rho_hat`` by its tangent line at the capacity threshold
``P~ = (2**R_c - 1) / g``.  The resulting surrogate is convex and C^1, so the
allocation reduces to a separable convex program with a single budget
constraint, solved by bisection on the budget multiplier.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, InfeasibleSignalError, UnsupportedError


@dataclass(frozen=True)
class AllocationProblem:
    weights: np.ndarray
    gains: np.ndarray  # |h_i|^2 / sigma^2
    p_ave: float
    blocklength: int = 1024
    rate: float = 0.4375

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        g = np.atleast_1d(np.asarray(self.gains, dtype=np.float64))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "gains", g)
        if w.shape != g.shape or w.ndim != 1 or w.size == 0:
            raise ConfigError(f"weights {w.shape} and gains {g.shape} must be equal-length vectors")
        if np.any(w < 0) or not np.any(w > 0):
            raise ConfigError("weights must be nonnegative with at least one positive")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ConfigError("gains must be finite and nonnegative")
        if not self.p_ave > 0:
            raise ConfigError("p_ave must be positive")
        if int(self.blocklength) < 1 or not 0 < self.rate <= 1:
            raise ConfigError("need blocklength >= 1 and rate in (0, 1]")

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def budget(self) -> float:
        return self.size * self.p_ave


@dataclass
class AllocationResult:
    powers: np.ndarray
    objective: float  # sum_i w_i G(P_i)
    objective_rho_hat: float  # sum_i w_i rho_hat(P_i)
    method: str = ""
    iterations: int = 0
    residual: float = 0.0
    extra: dict = field(default_factory=dict)


def rho_hat(p, g, blocklength, rate):
    """Packet error with the dispersion bounded by one."""
    out = kernels.rho_hat_vec(p, g, blocklength, rate)
    return out if np.ndim(out) else float(out)


def tangent_line(g, blocklength, rate):
    """Slope and intercept of the tangent to ``rho_hat`` at ``P~``."""
    k = math.sqrt(blocklength / (2.0 * math.pi))
    c2 = 2.0 ** rate
    return -k * np.asarray(g, dtype=np.float64) / c2, 0.5 + k * (c2 - 1.0) / c2


def threshold_power(g, rate):
    """Power at which capacity equals the channel rate."""
    g = np.asarray(g, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return (2.0 ** rate - 1.0) / g


def surrogate_g(p, g, blocklength, rate):
    """Convex upper surrogate: ``rho_hat`` above ``P~``, tangent line below."""
    out = kernels.surrogate_vec(p, g, blocklength, rate)
    return out if np.ndim(out) else float(out)


def surrogate_slope(p, g, blocklength, rate):
    p = np.asarray(p, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    mu, _ = tangent_line(g, blocklength, rate)
    s = math.sqrt(blocklength) * (np.log1p(g * p) - rate * math.log(2.0))
    phi = np.exp(-0.5 * s * s) / math.sqrt(2.0 * math.pi)
    d = -phi * math.sqrt(blocklength) * g / (1.0 + g * p)
    return np.where(g * p >= 2.0 ** rate - 1.0, d, mu)


def _finish(problem, powers, method, iterations=0, residual=0.0):
    w, g = problem.weights, problem.gains
    d, r = problem.blocklength, problem.rate
    return AllocationResult(
        powers=powers,
        objective=kernels.weighted_surrogate(powers, w, g, d, r),
        objective_rho_hat=kernels.weighted_rho_hat(powers, w, g, d, r),
        method=method,
        iterations=iterations,
        residual=residual,
    )


def solve_semantic_pa(problem: AllocationProblem, tol: float = 1e-14, max_iter: int = 400):
    """Minimize ``sum w_i G(P_i)`` with mean power exactly ``p_ave``."""
    w, g = problem.weights, problem.gains
    if not np.any(g > 0):
        raise InfeasibleSignalError("all channel gains are zero")
    useful = (w > 0) & (g > 0)
    if not useful.any():
        # objective is constant; spread the budget over the usable channels
        p = np.where(g > 0, problem.budget / np.count_nonzero(g > 0), 0.0)
        return _finish(problem, p, "dual-bisection")
    p, it, width = kernels.dual_allocate(w, g, problem.budget, problem.blocklength,
                                         problem.rate, tol, max_iter)
    p = np.maximum(np.asarray(p, dtype=np.float64), 0.0)
    return _finish(problem, p, "dual-bisection", it, width)


def waterfill(gains, p_ave: float, tol: float = 1e-10) -> np.ndarray:
    """Capacity-maximizing powers ``max(0, nu - 1/g_i)`` with mean ``p_ave``."""
    g = np.asarray(gains, dtype=np.float64)
    if not np.any(g > 0):
        raise InfeasibleSignalError("all channel gains are zero")
    total = g.size * p_ave
    inv = np.where(g > 0, 1.0 / np.where(g > 0, g, 1.0), np.inf)
    lo, hi = 0.0, total + inv[np.isfinite(inv)].max()
    while hi - lo > tol * max(1.0, hi):
        nu = 0.5 * (lo + hi)
        if np.maximum(nu - inv, 0.0).sum() > total:
            hi = nu
        else:
            lo = nu
    p = np.maximum(0.5 * (lo + hi) - inv, 0.0)
    return p * (total / p.sum())


def equal_pa(n: int, p_ave: float) -> np.ndarray:
    return np.full(int(n), float(p_ave))


def evaluate(problem: AllocationProblem, powers, method="") -> AllocationResult:
    return _finish(problem, np.asarray(powers, dtype=np.float64), method)


def brute_force_oracle(problem: AllocationProblem, grid_step: float = 1e-3) -> AllocationResult:
    """Exhaustive search over a grid on the power simplex (B <= 3)."""
    b = problem.size
    if b > 3:
        raise UnsupportedError("brute-force oracle supports at most 3 packets")
    total = problem.budget
    n = int(round(total / grid_step))
    ticks = np.linspace(0.0, total, n + 1)
    w, g = problem.weights, problem.gains
    d, r = problem.blocklength, problem.rate
    # each packet's weighted surrogate on the 1-D tick grid; the simplex
    # search then only adds table entries
    table = w[:, None] * kernels.surrogate_vec(
        np.broadcast_to(ticks, (b, n + 1)), np.broadcast_to(g[:, None], (b, n + 1)), d, r)
    if b == 1:
        best_p, points = np.array([total]), 1
    elif b == 2:
        values = table[0] + table[1, ::-1]
        i = int(np.argmin(values))
        best_p, points = np.array([ticks[i], ticks[n - i]]), n + 1
    else:
        best_v, best_p, points = np.inf, None, 0
        for i in range(n + 1):
            m = n - i
            values = table[0, i] + table[1, :m + 1] + table[2, m::-1]
            j = int(np.argmin(values))
            points += m + 1
            if values[j] < best_v:
                best_v, best_p = values[j], np.array([ticks[i], ticks[j], ticks[m - j]])
    res = _finish(problem, best_p, "grid-oracle")
    res.extra["grid_points"] = points
    return res


# --- batch CSV -------------------------------------------------------------

def read_instances(path) -> list:
    """Rows ``B, P_ave, D, R_c, g_1..g_B, w_1..w_B``; ``#`` lines and a header are skipped."""
    problems = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            row = [c.strip() for c in row if c.strip()]
            if not row or row[0].startswith("#"):
                continue
            try:
                b = int(row[0])
            except ValueError:
                if lineno == 1:
                    continue
                raise ConfigError(f"{path}:{lineno}: bad B value {row[0]!r}")
            if len(row) != 4 + 2 * b:
                raise ConfigError(f"{path}:{lineno}: expected {4 + 2 * b} fields, got {len(row)}")
            vals = [float(v) for v in row[1:]]
            problems.append(AllocationProblem(
                weights=np.array(vals[3 + b:]), gains=np.array(vals[3:3 + b]),
                p_ave=vals[0], blocklength=int(vals[1]), rate=vals[2]))
    return problems


def write_results(path, rows) -> None:
    """``rows`` are ``(instance, policy, AllocationResult)`` triples."""
    width = max((len(r.powers) for _, _, r in rows), default=0)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["instance", "policy", "objective_surrogate", "objective_rho_hat"]
                     + [f"P_{k + 1}" for k in range(width)])
        for inst, policy, res in rows:
            out.writerow([inst, policy, f"{res.objective:.9g}", f"{res.objective_rho_hat:.9g}"]
                         + [f"{v:.9g}" for v in res.powers] + [""] * (width - len(res.powers)))
