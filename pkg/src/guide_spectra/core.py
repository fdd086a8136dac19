"""Parameters, regime classification and the boundary coupling constants."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class ParameterError(ValueError):
    """Raised when (a, b, ell) violate the domain constraints."""


class Regime(Enum):
    DECOUPLED = "Decoupled"
    NEUMANN_PLUS_DAMPED = "NeumannPlusDamped"
    REAL_DISTINCT = "RealDistinct"
    DEGENERATE = "Degenerate"
    COMPLEX_PAIR = "ComplexPair"


@dataclass(frozen=True)
class Params:
    a: float
    b: float
    ell: float

    @property
    def nu(self) -> float:
        return math.pi / self.ell


@dataclass(frozen=True)
class MuPair:
    delta: complex
    mu_minus: complex
    mu_plus: complex


def make_params(a: float, b: float, ell: float) -> Params:
    """Validate and build a parameter set."""
    for name, value in (("a", a), ("b", b), ("ell", ell)):
        if not math.isfinite(value):
            raise ParameterError(f"{name} must be finite, got {value!r}")
    if ell <= 0:
        raise ParameterError(f"ell must be > 0, got {ell!r}")
    return Params(float(a), float(b), float(ell))


def classify(p: Params) -> Regime:
    # exact comparison on purpose: a tolerance band would silently switch algorithms
    a2, b2 = p.a * p.a, 4.0 * p.b * p.b
    if p.a == 0 and p.b == 0:
        return Regime.DECOUPLED
    if p.b == 0:
        return Regime.NEUMANN_PLUS_DAMPED
    if a2 > b2:
        return Regime.REAL_DISTINCT
    if a2 == b2:
        return Regime.DEGENERATE
    return Regime.COMPLEX_PAIR


def mu_pair(p: Params) -> MuPair:
    """Eigenvalues of the coupling matrix, mu_pm = (a +- delta)/2."""
    disc = p.a * p.a - 4.0 * p.b * p.b
    if disc < 0:
        delta = complex(0.0, math.sqrt(-disc))
        return MuPair(delta, (p.a - delta) / 2, (p.a + delta) / 2)
    delta = complex(math.sqrt(disc), 0.0)
    # the small root from mu_minus mu_plus = b^2, free of cancellation
    if p.a > 0:
        big = (p.a + delta) / 2
        return MuPair(delta, p.b * p.b / big, big)
    if p.a < 0:
        big = (p.a - delta) / 2
        return MuPair(delta, big, p.b * p.b / big)
    return MuPair(delta, -delta / 2, delta / 2)


def coupling_matrix(p: Params) -> np.ndarray:
    return np.array([[p.a, p.b], [-p.b, 0.0]], dtype=float)


def boundary_matrix(p: Params, z: complex) -> np.ndarray:
    """(1 + E) M + (1 - E) z with E = exp(2 i z ell); singular exactly at eigenvalue roots."""
    e = cmath.exp(2j * z * p.ell)
    return (1 + e) * coupling_matrix(p) + (1 - e) * z * np.eye(2)


def draw_params(regime: Regime, rng: np.random.Generator, ell: float) -> Params:
    """Random parameters inside a regime, with a >= 0 and moderate magnitudes."""
    sign = 1.0 if rng.random() < 0.5 else -1.0
    if regime is Regime.DECOUPLED:
        return make_params(0.0, 0.0, ell)
    a = float(rng.uniform(0.3, 2.0))
    if regime is Regime.NEUMANN_PLUS_DAMPED:
        return make_params(a, 0.0, ell)
    if regime is Regime.REAL_DISTINCT:
        return make_params(a, sign * a * float(rng.uniform(0.1, 0.45)), ell)
    if regime is Regime.DEGENERATE:
        return make_params(a, sign * a / 2, ell)
    return make_params(a, sign * a * float(rng.uniform(0.6, 1.5)), ell)
