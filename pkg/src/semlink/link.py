"""Finite-blocklength packet error model and block-fading loss sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .errors import ConfigError

LN2 = math.log(2.0)


@dataclass(frozen=True)
class LinkParams:
    blocklength: int = 1024
    rate: float = 0.4375
    noise_power: float = 1.0
    p_ave: float = 1.0
    subcarriers: int = 16

    def __post_init__(self):
        if int(self.blocklength) < 1:
            raise ConfigError("blocklength must be a positive integer")
        if not 0.0 < self.rate <= 1.0:
            raise ConfigError("channel rate must lie in (0, 1]")
        if not self.noise_power > 0.0:
            raise ConfigError("noise power must be positive")
        if not self.p_ave > 0.0:
            raise ConfigError("average power budget must be positive")
        if int(self.subcarriers) < 1:
            raise ConfigError("need at least one subcarrier")


@dataclass(frozen=True)
class ChannelRealization:
    """Per-packet power gains |h_i|^2 and the fading model that produced them."""

    gains: np.ndarray
    model: str = "rayleigh"

    def __len__(self):
        return len(self.gains)


def draw_channel(n: int, model: str, rng) -> ChannelRealization:
    if model == "awgn":
        return ChannelRealization(np.ones(n), model)
    if model == "rayleigh":
        # h ~ CN(0, 1)  =>  |h|^2 ~ Exp(1)
        return ChannelRealization(rng.exponential(1.0, size=n), model)
    raise ConfigError(f"unknown channel model {model!r}")


def snr(gain, power, noise_power):
    return np.asarray(gain, dtype=np.float64) * power / noise_power


def capacity(gamma):
    return np.log2(1.0 + np.asarray(gamma, dtype=np.float64))


def dispersion(gamma):
    g = np.asarray(gamma, dtype=np.float64)
    return g * (2.0 + g) / (1.0 + g) ** 2


def q_function(x):
    """Gaussian tail probability, via erfc for accuracy far into the tail."""
    return 0.5 * erfc(np.asarray(x, dtype=np.float64) / math.sqrt(2.0))


def packet_error_prob(gamma, blocklength, rate):
    """Normal-approximation decoding error of a (K, D) code at SNR ``gamma``."""
    g = np.asarray(gamma, dtype=np.float64)
    v = dispersion(g)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.sqrt(blocklength / v) * (np.log1p(g) - rate * LN2)
    rho = q_function(z)
    rho = np.where(g <= 0.0, 1.0, rho)
    return rho if rho.ndim else float(rho)


def sample_losses(realization: ChannelRealization, powers, params: LinkParams, rng) -> frozenset:
    """Draw the set of lost packet indices for one slot.

    ``rng`` is a ``numpy.random.Generator`` or anything accepted by
    ``numpy.random.default_rng``.  Unpowered packets are always lost.
    """
    powers = np.asarray(powers, dtype=np.float64)
    if powers.shape != (len(realization),):
        raise ConfigError(f"{len(powers)} powers for {len(realization)} packets")
    rng = np.random.default_rng(rng)
    gamma = snr(realization.gains, powers, params.noise_power)
    rho = np.atleast_1d(packet_error_prob(gamma, params.blocklength, params.rate))
    lost = rng.random(len(powers)) < rho
    lost |= powers <= 0.0
    return frozenset(int(i) for i in np.flatnonzero(lost))
