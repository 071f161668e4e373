#!/usr/bin/env python3
"""
Manufactured Solution
Velocity U(x, y) e^{-t}, pressure P(x, y) e^{-t} on the unit square with
hard-coded derivatives, and the forcing that makes them an exact solution.

    U1 =  2 a(x) b(y),  U2 = -2 a(y) b(x),  P = x^2 - y^2
    a(s) = s^2 (s - 1)^2,  b(s) = s (s - 1)(2 s - 1) = a'(s) / 2
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from frac_quadrature import caputo_decay_factor


def _a(s):
    return s ** 2 * (s - 1.0) ** 2


def _da(s):
    return 2.0 * s * (s - 1.0) * (2.0 * s - 1.0)


def _d2a(s):
    return 12.0 * s ** 2 - 12.0 * s + 2.0


def _b(s):
    return s * (s - 1.0) * (2.0 * s - 1.0)


def _db(s):
    return 6.0 * s ** 2 - 6.0 * s + 1.0


def _d2b(s):
    return 12.0 * s - 6.0


@dataclass(frozen=True)
class ManufacturedSolution:
    """Spatial parts of the exact fields and their closed-form derivatives"""

    @staticmethod
    def velocity(x, y):
        return 2.0 * _a(x) * _b(y), -2.0 * _a(y) * _b(x)

    @staticmethod
    def pressure(x, y):
        return x ** 2 - y ** 2

    @staticmethod
    def gradient(x, y):
        """((dU1/dx, dU1/dy), (dU2/dx, dU2/dy))"""
        return ((2.0 * _da(x) * _b(y), 2.0 * _a(x) * _db(y)),
                (-2.0 * _a(y) * _db(x), -2.0 * _da(y) * _b(x)))

    @staticmethod
    def divergence(x, y):
        (u1x, _), (_, u2y) = ManufacturedSolution.gradient(x, y)
        return u1x + u2y

    @staticmethod
    def laplacian(x, y):
        return (2.0 * _d2a(x) * _b(y) + 2.0 * _a(x) * _d2b(y),
                -2.0 * _d2a(y) * _b(x) - 2.0 * _a(y) * _d2b(x))

    @staticmethod
    def convection(x, y):
        """(U . grad) U"""
        u1, u2 = ManufacturedSolution.velocity(x, y)
        (u1x, u1y), (u2x, u2y) = ManufacturedSolution.gradient(x, y)
        return u1 * u1x + u2 * u1y, u1 * u2x + u2 * u2y

    @staticmethod
    def pressure_gradient(x, y):
        return 2.0 * x, -2.0 * y


def manufactured_fields(x, y, t: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact (u1, u2, p) at points (x, y) and time t"""
    decay = math.exp(-t)
    u1, u2 = ManufacturedSolution.velocity(x, y)
    return u1 * decay, u2 * decay, ManufacturedSolution.pressure(x, y) * decay


def _spatial_forcing(nu: float, x, y, t: float, time_factor: float):
    decay = math.exp(-t)
    u1, u2 = ManufacturedSolution.velocity(x, y)
    c1, c2 = ManufacturedSolution.convection(x, y)
    l1, l2 = ManufacturedSolution.laplacian(x, y)
    g1, g2 = ManufacturedSolution.pressure_gradient(x, y)
    f1 = u1 * time_factor + decay ** 2 * c1 - nu * decay * l1 + decay * g1
    f2 = u2 * time_factor + decay ** 2 * c2 - nu * decay * l2 + decay * g2
    return f1, f2


def manufactured_forcing(alpha: float, nu: float, x, y, t: float):
    """
    Body force f = U D(t) + e^{-2t} (U . grad) U - nu e^{-t} lap U + e^{-t} grad P,
    with D(t) the Caputo derivative of e^{-t} of order alpha.
    """
    return _spatial_forcing(nu, x, y, t, caputo_decay_factor(alpha, float(t)))


def classical_forcing(nu: float, x, y, t: float):
    """Forcing of the classical equations, where du/dt = -U e^{-t}"""
    return _spatial_forcing(nu, x, y, t, -math.exp(-t))
