#!/usr/bin/env python3
"""
Fractional Quadrature Module
Convolution weights of the discrete Riemann-Liouville integral, the discrete
fractional integral itself, and a Gauss-Jacobi oracle for the Caputo
derivative of the exponential decay used by the manufactured forcing.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import gamma, roots_jacobi

# Above this index the direct difference (k+1)^a - k^a loses digits
CANCELLATION_SWITCH = 1000

ORACLE_NODES = 64
ORACLE_CHECK_NODES = 128


class QuadratureDomainError(ValueError):
    """Raised for orders, steps or sample sequences outside the valid domain"""


class QuadratureAccuracyError(ArithmeticError):
    """Raised when two quadrature resolutions disagree beyond tolerance"""


@dataclass(frozen=True)
class QuadratureWeights:
    """Weights w_k = (k+1)^alpha - k^alpha and scale beta0 = tau^alpha / Gamma(alpha+1)"""
    alpha: float
    tau: float
    weights: np.ndarray
    beta0: float

    def __len__(self) -> int:
        return len(self.weights)

    def partial_sum(self, n: int) -> float:
        return math.fsum(self.weights[:n])


def _check_alpha(alpha: float) -> None:
    if not (0.0 < alpha <= 1.0):
        raise QuadratureDomainError(f"fractional order must lie in (0, 1], got {alpha}")


def compute_weights(alpha: float, count: int, tau: float) -> QuadratureWeights:
    """
    Compute the convolution weights for a uniform grid.

    Args:
        alpha: fractional order in (0, 1]
        count: number of weights w_0 .. w_{count-1}
        tau: time step

    Returns:
        Read-only QuadratureWeights shared by every step of a run
    """
    _check_alpha(alpha)
    if tau <= 0:
        raise QuadratureDomainError(f"time step must be positive, got {tau}")
    if count < 1:
        raise QuadratureDomainError(f"weight count must be at least 1, got {count}")

    k = np.arange(count, dtype=float)
    weights = np.empty(count)

    direct = k <= CANCELLATION_SWITCH
    weights[direct] = (k[direct] + 1.0) ** alpha - k[direct] ** alpha

    # k^a * ((1 + 1/k)^a - 1) keeps full relative accuracy for large k
    far = k[~direct]
    weights[~direct] = far ** alpha * np.expm1(alpha * np.log1p(1.0 / far))

    weights[0] = 1.0
    weights.setflags(write=False)

    beta0 = tau ** alpha / gamma(alpha + 1.0)
    logging.debug(f"Computed {count} weights for alpha={alpha}, tau={tau}, beta0={beta0:.6e}")
    return QuadratureWeights(alpha=alpha, tau=tau, weights=weights, beta0=float(beta0))


def discrete_rl_integral(samples: Sequence[float], weights: QuadratureWeights) -> float:
    """
    Discrete Riemann-Liouville integral at t_n = n * tau.

    samples holds g(t_1) .. g(t_n); g(t_0) never enters the sum.
    Returns beta0 * sum_{k=0}^{n-1} w_k g(t_{n-k}).
    """
    values = np.asarray(samples, dtype=float)
    n = len(values)
    if n > len(weights):
        raise QuadratureDomainError(
            f"{n} samples but only {len(weights)} weights available"
        )
    if n == 0:
        return 0.0

    # g(t_{n-k}) for k = 0..n-1 is the sample sequence reversed
    return weights.beta0 * float(np.dot(weights.weights[:n], values[::-1]))


def convolve_history(weights: QuadratureWeights, history: np.ndarray, first: int = 0) -> np.ndarray:
    """
    Weighted sum over a stacked history of vectors.

    history rows are x^1 .. x^m in time order. Returns
    sum_{j=1}^{m} w_{m+first-j} x^j, i.e. the convolution tail starting at
    weight index ``first`` for the newest row.
    """
    m = history.shape[0]
    if m == 0:
        return np.zeros(history.shape[1:])
    if m + first > len(weights):
        raise QuadratureDomainError(
            f"history of {m} rows needs weights up to index {m + first - 1}"
        )
    tail = weights.weights[first:first + m][::-1]
    return tail @ history


def rl_integral_exact_power(alpha: float, t: float, power: float) -> float:
    """Closed-form I^alpha t^p = Gamma(p+1) / Gamma(p+1+alpha) * t^(p+alpha)"""
    _check_alpha(alpha)
    return float(gamma(power + 1.0) / gamma(power + 1.0 + alpha) * t ** (power + alpha))


def _jacobi_rule(alpha: float, t: float, nodes: int) -> float:
    # s = t(1+x)/2 maps (-1, 1) onto (0, t); (t - s)^(-a) = (t/2)^(-a) (1-x)^(-a)
    x, w = roots_jacobi(nodes, -alpha, 0.0)
    s = 0.5 * t * (1.0 + x)
    integral = (0.5 * t) ** (1.0 - alpha) * np.dot(w, -np.exp(-s))
    return float(integral / gamma(1.0 - alpha))


@lru_cache(maxsize=4096)
def caputo_decay_factor(alpha: float, t: float, tol: float = 1e-10) -> float:
    """
    Caputo derivative of order alpha of exp(-t), evaluated at t.

    D(t) = 1/Gamma(1-alpha) * int_0^t (t-s)^(-alpha) * (-exp(-s)) ds, computed
    with a Gauss-Jacobi rule whose weight absorbs the endpoint singularity and
    cross-checked against a rule of twice the size. The two must agree to
    tol relative to max(1, |D(t)|).
    """
    _check_alpha(alpha)
    if t < 0:
        raise QuadratureDomainError(f"time must be non-negative, got {t}")
    if tol <= 0:
        raise QuadratureDomainError(f"tolerance must be positive, got {tol}")
    if t == 0.0:
        return 0.0
    if alpha == 1.0:
        return -math.exp(-t)

    coarse = _jacobi_rule(alpha, t, ORACLE_NODES)
    fine = _jacobi_rule(alpha, t, ORACLE_CHECK_NODES)
    if abs(coarse - fine) > tol * max(1.0, abs(fine)):
        raise QuadratureAccuracyError(
            f"Caputo oracle disagreement {abs(coarse - fine):.3e} exceeds {tol:.1e} "
            f"(alpha={alpha}, t={t})"
        )
    return fine
