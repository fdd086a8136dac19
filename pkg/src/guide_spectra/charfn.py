"""Characteristic functions, mode functions and their closed-form inner products.

Conventions: e_z(x) = exp(izx) + exp(2iz ell) exp(-izx) is the Neumann-at-ell
mode, and the inner product on L2(0, ell) is conjugate-linear in the second slot.
All evaluators accept scalars or numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .core import Params, Regime, classify, coupling_matrix, mu_pair

# above this |Im z| * ell the rescaled forms are used to stay clear of overflow
RESCALE_THRESHOLD = 30.0
# closed forms are refused when z is this close to +-conj(zeta)
SINGULAR_GUARD = 1e-6


class Branch(Enum):
    MINUS = "Minus"
    PLUS = "Plus"


class ModeKind(Enum):
    PURE = "PureMode"
    GENERALIZED = "GeneralizedMode"


class SingularInnerProduct(ValueError):
    """Closed form evaluated at (or too near) a removable singularity."""


@dataclass(frozen=True)
class ModeVector:
    kind: ModeKind
    z: complex
    coeff: np.ndarray  # multiplies e_z for pure modes, e~_z for generalized ones
    coeff_e: Optional[np.ndarray] = None  # multiplies e_z in a generalized mode
    branch: Optional[Branch] = None


def branch_mu(p: Params, branch: Branch) -> complex:
    mp = mu_pair(p)
    return mp.mu_minus if branch is Branch.MINUS else mp.mu_plus


def _ret(v):
    return complex(v) if np.ndim(v) == 0 else v


def phi(p: Params, branch: Branch, z):
    """(z - mu) exp(2iz ell) - (z + mu); rescaled by exp(-iz ell) once |Im z| ell > 30."""
    z = np.asarray(z, dtype=complex)
    mu = branch_mu(p, branch)
    big = np.abs(z.imag) * p.ell > RESCALE_THRESHOLD
    zs = np.where(big, 0.0, z)
    out = (zs - mu) * np.exp(2j * zs * p.ell) - (zs + mu)
    if np.any(big):
        out = np.where(big, phi_scaled(p, branch, np.where(big, z, 0.0)), out)
    return _ret(out)


def phi_prime(p: Params, branch: Branch, z):
    z = np.asarray(z, dtype=complex)
    mu = branch_mu(p, branch)
    big = np.abs(z.imag) * p.ell > RESCALE_THRESHOLD
    zs = np.where(big, 0.0, z)
    e = np.exp(2j * zs * p.ell)
    out = e - 1 + 2j * p.ell * (zs - mu) * e
    if np.any(big):
        out = np.where(big, phi_scaled_prime(p, branch, np.where(big, z, 0.0)), out)
    return _ret(out)


def phi_scaled(p: Params, branch: Branch, z):
    """phi(z) exp(-iz ell); same zeros, bounded magnitude on tall contours."""
    z = np.asarray(z, dtype=complex)
    mu = branch_mu(p, branch)
    ep = np.exp(1j * z * p.ell)
    em = np.exp(-1j * z * p.ell)
    return _ret((z - mu) * ep - (z + mu) * em)


def phi_scaled_prime(p: Params, branch: Branch, z):
    z = np.asarray(z, dtype=complex)
    mu = branch_mu(p, branch)
    ell = p.ell
    ep = np.exp(1j * z * ell)
    em = np.exp(-1j * z * ell)
    return _ret(ep * (1 + 1j * ell * (z - mu)) - em * (1 - 1j * ell * (z + mu)))


def eta(p: Params, branch: Branch, z):
    """(mu + i ell (z^2 - mu^2)) / (2 z^2); vanishes exactly where a zero of phi is double."""
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0):
        raise ValueError("eta is undefined at z = 0")
    mu = branch_mu(p, branch)
    return _ret((mu + 1j * p.ell * (z * z - mu * mu)) / (2 * z * z))


def _check_x(x, ell):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > ell):
        raise ValueError("x must lie in [0, ell]")
    return x


def e_mode(z, x, ell: float):
    x = _check_x(x, ell)
    z = complex(z)
    return _ret(np.exp(1j * z * x) + np.exp(2j * z * ell) * np.exp(-1j * z * x))


def e_mode_dx(z, x, ell: float):
    x = _check_x(x, ell)
    z = complex(z)
    return _ret(1j * z * (np.exp(1j * z * x) - np.exp(2j * z * ell) * np.exp(-1j * z * x)))


def e_tilde_mode(z, x, ell: float):
    """(ell - x)(exp(izx) - exp(2iz ell) exp(-izx)) / (2iz); solves -f'' - z^2 f = e_z."""
    x = _check_x(x, ell)
    z = complex(z)
    if z == 0:
        raise ValueError("e_tilde_mode is undefined at z = 0")
    s = np.exp(1j * z * x) - np.exp(2j * z * ell) * np.exp(-1j * z * x)
    return _ret((ell - x) * s / (2j * z))


def e_tilde_mode_dx(z, x, ell: float):
    x = _check_x(x, ell)
    z = complex(z)
    if z == 0:
        raise ValueError("e_tilde_mode is undefined at z = 0")
    s = np.exp(1j * z * x) - np.exp(2j * z * ell) * np.exp(-1j * z * x)
    c = np.exp(1j * z * x) + np.exp(2j * z * ell) * np.exp(-1j * z * x)
    return _ret(-s / (2j * z) + (ell - x) * c / 2)


def _guard(z, zeta):
    zb = np.conj(zeta)
    if abs(z - zb) < SINGULAR_GUARD or abs(z + zb) < SINGULAR_GUARD:
        raise SingularInnerProduct(f"z={z} is within {SINGULAR_GUARD} of +-conj(zeta)")
    return zb


def inner_e_e(z: complex, zeta: complex, ell: float) -> complex:
    """<e_z, e_zeta> on (0, ell) in closed form."""
    z, zeta = complex(z), complex(zeta)
    zb = _guard(z, zeta)
    d, s = z - zb, z + zb
    return complex((np.exp(2j * d * ell) - 1) / (1j * d)
                   + (np.exp(2j * z * ell) - np.exp(-2j * zb * ell)) / (1j * s))


def inner_e_etilde(z: complex, zeta: complex, ell: float) -> complex:
    """<e_z, e~_zeta> on (0, ell) in closed form (four terms)."""
    z, zeta = complex(z), complex(zeta)
    if zeta == 0:
        raise ValueError("zeta must be nonzero")
    zb = _guard(z, zeta)
    d, s = z - zb, z + zb
    ed = np.exp(2j * d * ell)
    ez = np.exp(2j * z * ell)
    ezb = np.exp(-2j * zb * ell)
    return complex(-ell * (ed + 1) / (2 * zb * d)
                   + (ed - 1) / (2j * zb * d * d)
                   + ell * (ez + ezb) / (2 * zb * s)
                   - (ez - ezb) / (2j * zb * s * s))


def _int_exp(c: complex, ell: float) -> complex:
    # integral of exp(c x) over (0, ell), stable as c -> 0
    if abs(c) * ell < 1e-8:
        return ell * (1 + c * ell / 2)
    return complex(np.expm1(c * ell) / c)


def norm_e_sq(z: complex, ell: float) -> complex:
    """||e_z||^2, valid everywhere including real z."""
    z = complex(z)
    x0, y = z.real, z.imag
    e = np.exp(2j * z * ell)
    direct = _int_exp(-2 * y, ell)
    reflected = abs(e) ** 2 * _int_exp(2 * y, ell)
    cross = 2 * (np.conj(e) * _int_exp(2j * x0, ell)).real
    return float((direct + reflected + cross).real)


def make_pure_mode(p: Params, branch: Branch, z: complex) -> ModeVector:
    """Eigenfunction A e_z with A = (mu, -b) spanning ker(M - mu)."""
    if classify(p) is Regime.DECOUPLED:
        raise ValueError("decoupled regime uses the fixed orthonormal family")
    mu = branch_mu(p, branch)
    coeff = np.array([mu, -p.b], dtype=complex)
    if np.linalg.norm(coeff) == 0:
        raise ValueError("coupling eigenvector vanishes (b = 0, Minus); use the Neumann family")
    return ModeVector(ModeKind.PURE, complex(z), coeff, None, branch)


def neumann_mode(z: complex) -> ModeVector:
    """(0, 1) e_z: the second component decouples when b = 0."""
    return ModeVector(ModeKind.PURE, complex(z), np.array([0, 1], dtype=complex), None, Branch.MINUS)


def make_generalized(p: Params, z: complex) -> ModeVector:
    """Jordan partner A1 e~_z + A2 e_z with A1 = (a/2, -b), A2 = (eta(z), 0)."""
    if classify(p) is not Regime.DEGENERATE:
        raise ValueError("generalized modes of this form exist only when a^2 = 4b^2 != 0")
    a1 = np.array([p.a / 2, -p.b], dtype=complex)
    a2 = np.array([eta(p, Branch.MINUS, z), 0], dtype=complex)
    return ModeVector(ModeKind.GENERALIZED, complex(z), a1, a2, Branch.MINUS)


def make_exceptional_generalized(p: Params, branch: Branch, z: complex) -> ModeVector:
    """Jordan partner at a double zero of a single branch (eta(z) = 0): A2 may be taken zero."""
    mu = branch_mu(p, branch)
    a1 = np.array([mu, -p.b], dtype=complex)
    return ModeVector(ModeKind.GENERALIZED, complex(z), a1, np.zeros(2, dtype=complex), branch)


def generalized_residual(p: Params, mode: ModeVector) -> float:
    """|(M - mu) A2 - eta A1| for a generalized mode."""
    mu = branch_mu(p, mode.branch)
    lhs = (coupling_matrix(p) - mu * np.eye(2)) @ mode.coeff_e
    rhs = eta(p, mode.branch, mode.z) * mode.coeff
    return float(np.linalg.norm(lhs - rhs))


def mode_values(mode: ModeVector, x, ell: float) -> np.ndarray:
    """Two-component samples, shape (2, len(x))."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if mode.kind is ModeKind.PURE:
        return np.outer(mode.coeff, e_mode(mode.z, x, ell))
    return (np.outer(mode.coeff, e_tilde_mode(mode.z, x, ell))
            + np.outer(mode.coeff_e, e_mode(mode.z, x, ell)))


def mode_dx(mode: ModeVector, x, ell: float) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if mode.kind is ModeKind.PURE:
        return np.outer(mode.coeff, e_mode_dx(mode.z, x, ell))
    return (np.outer(mode.coeff, e_tilde_mode_dx(mode.z, x, ell))
            + np.outer(mode.coeff_e, e_mode_dx(mode.z, x, ell)))


def mode_d2x(mode: ModeVector, x, ell: float) -> np.ndarray:
    """Exact second derivative, from -e'' = z^2 e and -e~'' = z^2 e~ + e."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z2 = mode.z * mode.z
    e = e_mode(mode.z, x, ell)
    if mode.kind is ModeKind.PURE:
        return np.outer(mode.coeff, -z2 * e)
    et = e_tilde_mode(mode.z, x, ell)
    return np.outer(mode.coeff, -z2 * et - e) + np.outer(mode.coeff_e, -z2 * e)


def boundary_residual(p: Params, mode: ModeVector) -> float:
    """|U'(0) + i M U(0)| and |U'(ell)| combined."""
    u0 = mode_values(mode, [0.0], p.ell)[:, 0]
    du0 = mode_dx(mode, [0.0], p.ell)[:, 0]
    dul = mode_dx(mode, [p.ell], p.ell)[:, 0]
    left = du0 + 1j * coupling_matrix(p) @ u0
    return float(np.linalg.norm(left) + np.linalg.norm(dul))
