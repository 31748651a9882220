"""Diffusion-based imputation of erased feature blocks.

The reverse process is deterministic-capable DDIM with replacement
conditioning: after every reverse step the unmasked region is overwritten
by the known features re-noised to the current step.  The noise predictor
is pluggable; :class:`GaussianDenoiser` is the exact MMSE predictor for a
Gaussian feature prior, which makes the sampler checkable in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .codec import ar1_correlation
from .errors import ConfigError, ContractError, NumericError, ScheduleError
from .packetizer import ErasureReport


@dataclass(frozen=True)
class ErasureMask:
    raw: np.ndarray  # bool W x H, all channels erased
    dilated: np.ndarray  # bool W x H
    kernel: int = 1


def dilate(raw, kernel: int) -> np.ndarray:
    """All-ones ``kernel x kernel`` dilation, top-left anchored, zero padded."""
    raw = np.asarray(raw, dtype=bool)
    out = raw.copy()
    w, h = raw.shape
    for a in range(kernel):
        for b in range(kernel):
            if a or b:
                out[a:, b:] |= raw[:w - a, :h - b]
    return out


def build_mask(report, kernel: int = 2) -> ErasureMask:
    """Mask from an :class:`ErasureReport` (or a boolean erased tensor)."""
    if int(kernel) < 1:
        raise ConfigError("dilation kernel must be >= 1")
    erased = report.erased if isinstance(report, ErasureReport) else np.asarray(report, dtype=bool)
    if erased.ndim == 3:
        raw = erased.all(axis=2)
    else:
        raw = erased.astype(bool)
    return ErasureMask(raw, dilate(raw, int(kernel)), int(kernel))


def init_erased(y_hat, erased, fill) -> np.ndarray:
    """Replace erased elements with the encoder's response to a blank image."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    return np.where(np.asarray(erased, dtype=bool), np.broadcast_to(fill, y_hat.shape), y_hat)


# --- noise schedule --------------------------------------------------------

@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray
    eta: float = 0.0

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=np.float64)
        if b.ndim != 1 or b.size < 1 or np.any(b <= 0) or np.any(b >= 1):
            raise ScheduleError("betas must be a non-empty vector in (0, 1)")
        if not 0.0 <= self.eta <= 1.0:
            raise ScheduleError("eta must lie in [0, 1]")
        object.__setattr__(self, "betas", b)

    @property
    def steps(self) -> int:
        return self.betas.size

    @property
    def alphas(self) -> np.ndarray:
        """Cumulative products with ``alphas[0] = 1``; length ``T + 1``."""
        return np.concatenate([[1.0], np.cumprod(1.0 - self.betas)])

    def alpha(self, t: int) -> float:
        return float(self.alphas[t])

    def sigma(self, t: int) -> float:
        a_t, a_prev = self.alpha(t), self.alpha(t - 1)
        return self.eta * float(np.sqrt((1 - a_prev) / (1 - a_t) * (1 - a_t / a_prev)))


def linear_schedule(steps: int, beta_start=1e-4, beta_end=0.02, base_steps=1000, eta=0.0):
    """The standard ``base_steps`` linear schedule, subsampled to ``steps`` steps.

    Subsampling keeps the base schedule's cumulative alphas at evenly spaced
    timesteps, so the effective betas stay inside (0, 1) for any ``steps``.
    """
    if not 1 <= int(steps) <= base_steps:
        raise ScheduleError(f"steps must be in [1, {base_steps}]")
    base = np.cumprod(1.0 - np.linspace(beta_start, beta_end, base_steps))
    taus = np.round(np.arange(1, steps + 1) * base_steps / steps).astype(int) - 1
    abar = np.concatenate([[1.0], base[taus]])
    return NoiseSchedule(1.0 - abar[1:] / abar[:-1], eta)


def forward_diffuse(y0, t: int, schedule: NoiseSchedule, rng=None, noise=None):
    """Sample ``y_t = sqrt(a_t) y0 + sqrt(1 - a_t) eps``; returns ``(y_t, eps)``."""
    if not 0 <= t <= schedule.steps:
        raise ScheduleError(f"step {t} outside [0, {schedule.steps}]")
    y0 = np.asarray(y0, dtype=np.float64)
    if noise is None:
        noise = np.random.default_rng(rng).standard_normal(y0.shape)
    a = schedule.alpha(t)
    return np.sqrt(a) * y0 + np.sqrt(1.0 - a) * noise, noise


def ddim_step(y_t, eps_hat, t: int, schedule: NoiseSchedule, rng=None, sigma=None):
    """One DDIM reverse update from step ``t`` to ``t - 1``."""
    if not 1 <= t <= schedule.steps:
        raise ScheduleError(f"step {t} outside [1, {schedule.steps}]")
    a_t, a_prev = schedule.alpha(t), schedule.alpha(t - 1)
    s = schedule.sigma(t) if sigma is None else float(sigma)
    room = 1.0 - a_prev - s * s
    if room < -1e-15:
        raise ScheduleError(f"sigma_{t}^2 = {s * s:.3g} exceeds 1 - alpha_{t - 1} = {1 - a_prev:.3g}")
    y_t = np.asarray(y_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    out = np.sqrt(a_prev / a_t) * (y_t - np.sqrt(1.0 - a_t) * eps_hat) + np.sqrt(max(room, 0.0)) * eps_hat
    if s > 0.0:
        out = out + s * np.random.default_rng(rng).standard_normal(y_t.shape)
    return out


# --- denoisers -------------------------------------------------------------

class Denoiser(Protocol):
    def __call__(self, y_t: np.ndarray, t: int, y_hat: np.ndarray, mask: ErasureMask) -> np.ndarray:
        ...


@dataclass(frozen=True)
class GaussianSourceModel:
    """Gaussian feature prior: diagonal (``variances``) or separable AR(1)
    with unit marginal variance (``corr``)."""

    mean: object = 0.0
    variances: object = None
    corr: float | None = None

    def __post_init__(self):
        if (self.variances is None) == (self.corr is None):
            raise ConfigError("give exactly one of variances or corr")
        if self.corr is not None and not -1.0 < self.corr < 1.0:
            raise ConfigError("AR(1) correlation must lie in (-1, 1)")
        if self.variances is not None and np.any(np.asarray(self.variances) <= 0):
            raise ConfigError("variances must be positive")

    def covariance(self, w: int, h: int) -> np.ndarray:
        """Spatial covariance over the flattened ``w x h`` grid (AR(1) only)."""
        return np.kron(ar1_correlation(w, self.corr), ar1_correlation(h, self.corr))


def gaussian_denoiser(y_t, t, y_hat, mask: ErasureMask, model: GaussianSourceModel,
                      schedule: NoiseSchedule, _cache=None):
    """Exact noise prediction ``(y_t - sqrt(a_t) E[y0 | .]) / sqrt(1 - a_t)``.

    Diagonal prior: element-wise conjugate posterior mean given ``y_t``.
    AR(1) prior: masked coordinates are conditioned on the known features
    ``y_hat`` outside the mask and on their own noisy values ``y_t``.
    """
    y_t = np.asarray(y_t, dtype=np.float64)
    a = schedule.alpha(t)
    if not a < 1.0:
        raise ScheduleError("noise prediction needs alpha_t < 1")
    mean = np.broadcast_to(np.asarray(model.mean, dtype=np.float64), y_t.shape)
    if model.corr is None:
        v = np.broadcast_to(np.asarray(model.variances, dtype=np.float64), y_t.shape)
        post = (np.sqrt(a) * v * y_t + (1.0 - a) * mean) / (a * v + 1.0 - a)
    else:
        post = _ar1_posterior(y_t, a, np.asarray(y_hat, dtype=np.float64), mask, model, mean, _cache)
    return (y_t - np.sqrt(a) * post) / np.sqrt(1.0 - a)


def _ar1_conditional(model, shape, m_flat):
    w, h = shape
    cov = model.covariance(w, h)
    u = np.flatnonzero(m_flat)
    o = np.flatnonzero(~m_flat)
    try:
        if o.size:
            gain = np.linalg.solve(cov[np.ix_(o, o)], cov[np.ix_(o, u)]).T
            cond = cov[np.ix_(u, u)] - gain @ cov[np.ix_(o, u)]
        else:
            gain = np.zeros((u.size, 0))
            cond = cov[np.ix_(u, u)]
        lam, vec = np.linalg.eigh(0.5 * (cond + cond.T))
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"AR(1) covariance is singular: {exc}") from exc
    return u, o, gain, np.clip(lam, 0.0, None), vec


def _ar1_posterior(y_t, a, y_hat, mask, model, mean, cache):
    w, h, c = y_t.shape
    m_flat = np.asarray(mask.dilated, dtype=bool).ravel()
    key = m_flat.tobytes()
    if cache is not None and key in cache:
        u, o, gain, lam, vec = cache[key]
    else:
        u, o, gain, lam, vec = _ar1_conditional(model, (w, h), m_flat)
        if cache is not None:
            cache[key] = (u, o, gain, lam, vec)
    yt = y_t.reshape(w * h, c)
    known = y_hat.reshape(w * h, c)
    mu = mean.reshape(w * h, c)
    post = known.copy()
    if u.size:
        prior_u = mu[u] + gain @ (known[o] - mu[o])
        shrink = lam * np.sqrt(a) / (a * lam + 1.0 - a)
        post[u] = prior_u + vec @ (shrink[:, None] * (vec.T @ (yt[u] - np.sqrt(a) * prior_u)))
    return post.reshape(w, h, c)


class GaussianDenoiser:
    """Callable wrapper around :func:`gaussian_denoiser` that caches the
    per-mask conditional covariance factorization."""

    def __init__(self, model: GaussianSourceModel, schedule: NoiseSchedule):
        self.model = model
        self.schedule = schedule
        self._cache = {}

    def __call__(self, y_t, t, y_hat, mask):
        return gaussian_denoiser(y_t, t, y_hat, mask, self.model, self.schedule, self._cache)


def impute(y_hat, mask: ErasureMask, denoiser: Denoiser, schedule: NoiseSchedule, rng=None,
           init_noise=None):
    """Regenerate the masked region of ``y_hat`` by DDIM with replacement conditioning.

    The result equals ``y_hat`` exactly wherever ``mask.raw`` is zero.
    ``init_noise`` overrides the standard-normal start on the masked region.
    """
    y_hat = np.asarray(y_hat, dtype=np.float64)
    raw = np.asarray(mask.raw, dtype=bool)[..., None]
    dil = np.asarray(mask.dilated, dtype=bool)[..., None]
    if not raw.any():
        return y_hat.copy()
    rng = np.random.default_rng(rng)
    big_t = schedule.steps
    known_t, _ = forward_diffuse(y_hat, big_t, schedule, rng)
    start = rng.standard_normal(y_hat.shape) if init_noise is None else init_noise
    y = np.where(dil, start, known_t)
    for t in range(big_t, 0, -1):
        eps = np.asarray(denoiser(y, t, y_hat, mask), dtype=np.float64)
        if eps.shape != y.shape:
            raise ContractError(f"denoiser returned shape {eps.shape}, expected {y.shape}")
        y = ddim_step(y, eps, t, schedule, rng)
        if t > 1:
            known_t, _ = forward_diffuse(y_hat, t - 1, schedule, rng)
            y = np.where(dil, y, known_t)
    return np.where(raw, y, y_hat)


def mask_to_pbm(mask_2d) -> str:
    """Plain PBM (P1) text for a binary mask, rows along the first axis."""
    m = np.asarray(mask_2d, dtype=np.uint8)
    lines = ["P1", f"{m.shape[1]} {m.shape[0]}"]
    lines += [" ".join(str(v) for v in row) for row in m]
    return "\n".join(lines) + "\n"
