#!/usr/bin/env python3
"""
Test convolution weights, the discrete fractional integral and the Caputo oracle
"""

import math

import numpy as np
import pytest
from scipy.special import erfi, gamma

from frac_quadrature import (QuadratureDomainError, caputo_decay_factor, compute_weights,
                             convolve_history, discrete_rl_integral, rl_integral_exact_power)

ALPHAS = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]


@pytest.mark.parametrize("alpha", ALPHAS)
def test_weight_laws(alpha):
    """w_0 = 1, strictly positive, strictly decreasing, partial sums n^alpha"""
    weights = compute_weights(alpha, 10_000, 0.1)
    w = weights.weights

    assert w[0] == 1.0
    assert np.all(w > 0.0)
    assert np.all(np.diff(w) < 0.0)
    for n in (1, 10, 100, 10_000):
        assert weights.partial_sum(n) == pytest.approx(n ** alpha, rel=1e-12)


def test_weights_far_tail_matches_asymptotics():
    alpha = 0.3
    w = compute_weights(alpha, 6000, 1.0).weights
    for k in (1001, 2500, 5999):
        series = k ** alpha * (alpha / k + alpha * (alpha - 1) / (2 * k ** 2)
                               + alpha * (alpha - 1) * (alpha - 2) / (6 * k ** 3))
        assert w[k] == pytest.approx(series, rel=1e-9)


def test_weights_are_read_only_and_scaled():
    weights = compute_weights(0.5, 4, 0.25)
    assert weights.beta0 == pytest.approx(0.25 ** 0.5 / gamma(1.5))
    assert len(weights) == 4
    with pytest.raises(ValueError):
        weights.weights[1] = 0.0


def test_classical_order_gives_unit_weights():
    weights = compute_weights(1.0, 16, 0.1)
    np.testing.assert_allclose(weights.weights, np.ones(16), rtol=0, atol=1e-15)
    assert weights.beta0 == pytest.approx(0.1)


@pytest.mark.parametrize("alpha, count, tau", [(0.0, 4, 0.1), (1.2, 4, 0.1), (-0.3, 4, 0.1),
                                               (0.5, 0, 0.1), (0.5, 4, 0.0)])
def test_weights_reject_invalid_input(alpha, count, tau):
    with pytest.raises(QuadratureDomainError):
        compute_weights(alpha, count, tau)


@pytest.mark.parametrize("alpha", [0.1, 0.4, 0.8, 1.0])
def test_integral_exact_for_constants(alpha):
    for tau in (1 / 8, 1 / 64):
        for n in (1, 7, 64):
            weights = compute_weights(alpha, n, tau)
            value = discrete_rl_integral(np.ones(n), weights)
            assert value == pytest.approx((n * tau) ** alpha / gamma(alpha + 1), rel=1e-13)


@pytest.mark.parametrize("alpha", [0.4, 0.8])
def test_integral_of_linear_scales_at_fixed_step_index(alpha):
    """For g(t) = t at a fixed step index, the error is exactly proportional to tau^(alpha+1)"""
    n = 6
    errors = []
    for tau in (1 / 8, 1 / 16, 1 / 32, 1 / 64):
        weights = compute_weights(alpha, n, tau)
        samples = tau * np.arange(1, n + 1)
        exact = rl_integral_exact_power(alpha, n * tau, 1.0)
        errors.append(abs(discrete_rl_integral(samples, weights) - exact))

    for coarse, fine in zip(errors, errors[1:]):
        assert coarse / fine == pytest.approx(2.0 ** (alpha + 1.0), rel=1e-9)


@pytest.mark.parametrize("alpha", [0.4, 0.8])
def test_integral_of_linear_converges_at_fixed_time(alpha):
    t_final = 1.0
    errors = []
    for steps in (8, 16, 32, 64):
        tau = t_final / steps
        weights = compute_weights(alpha, steps, tau)
        samples = tau * np.arange(1, steps + 1)
        errors.append(abs(discrete_rl_integral(samples, weights)
                          - rl_integral_exact_power(alpha, t_final, 1.0)))

    rates = [math.log2(c / f) for c, f in zip(errors, errors[1:])]
    assert min(rates) >= 0.9
    assert errors[-1] < errors[0]


def test_integral_length_checks():
    weights = compute_weights(0.5, 3, 0.1)
    assert discrete_rl_integral([], weights) == 0.0
    with pytest.raises(QuadratureDomainError):
        discrete_rl_integral(np.ones(4), weights)


def test_integral_pairs_newest_sample_with_first_weight():
    """samples[i] is g(t_{i+1}); the newest sample takes w_0"""
    weights = compute_weights(0.5, 3, 1.0)
    value = discrete_rl_integral([1.0, 0.0, 0.0], weights)
    assert value == pytest.approx(weights.beta0 * weights.weights[2])


def test_convolve_history_matches_loop():
    rng = np.random.default_rng(7)
    weights = compute_weights(0.6, 10, 0.1)
    history = rng.standard_normal((5, 3))

    for first in (0, 1):
        expected = sum(weights.weights[5 + first - j] * history[j - 1] for j in range(1, 6))
        np.testing.assert_allclose(convolve_history(weights, history, first), expected, rtol=1e-14)

    np.testing.assert_array_equal(convolve_history(weights, np.empty((0, 3))), np.zeros(3))
    with pytest.raises(QuadratureDomainError):
        convolve_history(weights, rng.standard_normal((10, 3)), first=1)


def test_exact_power_integral():
    # I^1 t = t^2 / 2
    assert rl_integral_exact_power(1.0, 2.0, 1.0) == pytest.approx(2.0)
    assert rl_integral_exact_power(0.5, 1.0, 0.0) == pytest.approx(1.0 / gamma(1.5))


@pytest.mark.parametrize("t", [0.25, 0.5, 1.0])
def test_caputo_half_order_closed_form(t):
    expected = -math.exp(-t) * erfi(math.sqrt(t))
    assert caputo_decay_factor(0.5, t) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("t", [0.5, 1.0])
def test_caputo_near_classical_limit(t):
    assert caputo_decay_factor(0.999, t) == pytest.approx(-math.exp(-t), abs=2e-3)


@pytest.mark.parametrize("alpha", ALPHAS)
def test_caputo_on_every_grid_time(alpha):
    # every time a manufactured run samples, for the usual step counts
    times = sorted({k / steps for steps in (4, 8, 10, 16, 32, 64) for k in range(1, steps + 1)})
    for t in times:
        value = caputo_decay_factor(alpha, t)
        # -t^(1-a)/Gamma(2-a) < D(t) < 0 since 0 < e^{-s} <= 1
        assert -t ** (1 - alpha) / gamma(2 - alpha) < value < 0.0


def test_caputo_edge_cases():
    assert caputo_decay_factor(0.4, 0.0) == 0.0
    assert caputo_decay_factor(1.0, 0.7) == pytest.approx(-math.exp(-0.7))
    with pytest.raises(QuadratureDomainError):
        caputo_decay_factor(0.4, -1.0)
    with pytest.raises(QuadratureDomainError):
        caputo_decay_factor(1.5, 1.0)


if __name__ == "__main__":
    print("Testing fractional quadrature")
    print("=" * 40)
    for a in ALPHAS:
        test_weight_laws(a)
    print("✅ Weight laws hold for alpha in 0.1 .. 0.9")
    for a in (0.4, 0.8):
        test_integral_of_linear_scales_at_fixed_step_index(a)
        test_integral_of_linear_converges_at_fixed_time(a)
    print("✅ Discrete integral error laws hold")
    for t in (0.25, 0.5, 1.0):
        test_caputo_half_order_closed_form(t)
        print(f"  D^0.5 e^-t at t={t}: {caputo_decay_factor(0.5, t):.12f}")
    print("✅ Caputo oracle matches the closed form")
