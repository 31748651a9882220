import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from semlink import link
from semlink.errors import ConfigError

D, RC = 1024, 0.4375


def test_capacity_and_dispersion_values():
    assert link.capacity(1.0) == pytest.approx(1.0, abs=1e-15)
    assert link.dispersion(1.0) == pytest.approx(0.75, abs=1e-15)
    assert link.dispersion(0.0) == 0.0
    assert link.dispersion(1e12) == pytest.approx(1.0, abs=1e-9)


def test_error_prob_at_threshold_is_half():
    assert link.packet_error_prob(2 ** RC - 1, D, RC) == pytest.approx(0.5, abs=1e-12)


def test_error_prob_zero_snr():
    assert link.packet_error_prob(0.0, D, RC) == 1.0


def test_error_prob_against_mpmath():
    # frozen from an independent 50-digit evaluation
    assert link.packet_error_prob(0.5, D, RC) == pytest.approx(5.7128083351996e-6, rel=1e-9)


def test_error_prob_rate_bounds():
    assert link.packet_error_prob(1e-3, 4096, 0.8) > 1 - 1e-12
    assert link.packet_error_prob(100.0, 4096, 0.1) < 1e-200


@pytest.mark.parametrize("z", np.linspace(-8, 8, 33))
def test_q_function_accuracy(z):
    mpmath.mp.dps = 40
    exact = float(mpmath.erfc(mpmath.mpf(z) / mpmath.sqrt(2)) / 2)
    assert link.q_function(z) == pytest.approx(exact, rel=1e-12)


def test_error_prob_monotone_grid():
    gamma = np.linspace(0.0, 5.0, 10_000)
    rho = link.packet_error_prob(gamma, D, RC)
    d = np.diff(rho)
    assert np.all(d <= 0)
    # strict wherever the values are resolvable in double precision
    inside = (rho > 1e-300) & (rho < 1 - 1e-9)
    assert np.all(d[inside[:-1] & inside[1:]] < 0)


@given(st.floats(1e-6, 50), st.floats(1e-6, 50), st.integers(16, 4096), st.floats(0.05, 1.0))
def test_error_prob_monotone_property(a, b, d, rc):
    lo, hi = min(a, b), max(a, b)
    assert link.packet_error_prob(hi, d, rc) <= link.packet_error_prob(lo, d, rc)


def test_rayleigh_gains_mean_one():
    ch = link.draw_channel(200_000, "rayleigh", np.random.default_rng(0))
    assert ch.gains.mean() == pytest.approx(1.0, abs=4 * 1 / math.sqrt(200_000))
    assert np.all(ch.gains >= 0)


def test_awgn_gains_are_ones():
    np.testing.assert_array_equal(link.draw_channel(5, "awgn", None).gains, np.ones(5))


def test_unknown_channel_model():
    with pytest.raises(ConfigError):
        link.draw_channel(3, "rician", np.random.default_rng(0))


def test_link_params_validation():
    with pytest.raises(ConfigError):
        link.LinkParams(rate=1.5)
    with pytest.raises(ConfigError):
        link.LinkParams(noise_power=0.0)


def test_zero_power_always_lost():
    ch = link.ChannelRealization(np.ones(4), "awgn")
    lost = link.sample_losses(ch, [0.0, 10.0, 0.0, 10.0], link.LinkParams(), 1)
    assert lost == {0, 2}


def test_sample_losses_seeded():
    ch = link.draw_channel(16, "rayleigh", np.random.default_rng(3))
    p = np.full(16, 0.3)
    params = link.LinkParams()
    assert link.sample_losses(ch, p, params, 9) == link.sample_losses(ch, p, params, 9)


def test_loss_frequency_matches_probability():
    params = link.LinkParams()
    n = 100_000
    for gamma in (0.30, 0.33, 0.35, 0.37, 0.40):
        rho = link.packet_error_prob(gamma, D, RC)
        ch = link.ChannelRealization(np.full(n, gamma), "awgn")
        freq = len(link.sample_losses(ch, np.ones(n), params, 17)) / n
        se = math.sqrt(rho * (1 - rho) / n)
        assert abs(freq - rho) <= 3 * se + 1e-12
