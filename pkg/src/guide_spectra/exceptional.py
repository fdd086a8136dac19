"""Double-eigenvalue parameters, zeros on the lines Re z = n nu, and the theta parameter.

Everything here assumes a >= 0; the a < 0 mirror follows by complex conjugation.
"""

from __future__ import annotations

import cmath
import io
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

from scipy.optimize import bisect, brentq

from .charfn import Branch, phi, phi_prime
from .core import Params, Regime, classify, make_params, mu_pair

THETA_LINE_TOL = 1e-9
LINE_EQ_RTOL = 1e-12


class BisectionFailure(RuntimeError):
    """A bracketing interval lost its sign change (implementation bug, not bad input)."""


@dataclass(frozen=True)
class ThetaPoint:
    k: int
    ell: float
    xi: float
    kappa: float
    z: complex
    mu: complex
    a_k: float
    b_k: float
    res_sin: float
    res_cosh: float
    res_sinh: float
    phi_abs: float
    phi_prime_abs: float

    @property
    def params(self) -> Params:
        return make_params(self.a_k, self.b_k, self.ell)


def _xi_equation(xi: float) -> float:
    s = math.sin(xi)
    return math.cos(xi) * math.sqrt(xi * xi / (s * s) - 1) + math.acosh(-xi / s)


def theta_point(k: int, ell: float) -> ThetaPoint:
    """k-th parameter pair (a_k, b_k) at which phi_minus has a double zero."""
    if k < 0 or ell <= 0:
        raise ValueError("need k >= 0 and ell > 0")
    lo = (2 * k + 1) * math.pi * (1 + 1e-12)
    hi = (2 * k + 1.5) * math.pi
    if not (_xi_equation(lo) < 0 < _xi_equation(hi)):
        raise BisectionFailure(f"no sign change on I_{k}")
    xi = bisect(_xi_equation, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
    kappa = -math.acosh(-xi / math.sin(xi))
    z = complex(xi, kappa) / (2 * ell)
    e = cmath.exp(2j * z * ell)
    mu = (e - 1) / (e + 1) * z
    if not (mu.real > 0 and mu.imag < 0):
        raise BisectionFailure(f"unexpected coupling root {mu}")
    a_k = 2 * mu.real
    # mu_minus = a/2 - i sqrt(4b^2 - a^2)/2, hence 4b^2 = a^2 + 4 Im(mu)^2
    b_k = 0.5 * math.sqrt(a_k * a_k + 4 * mu.imag * mu.imag)
    p = make_params(a_k, b_k, ell)
    w = 2 * z * ell
    return ThetaPoint(
        k=k, ell=ell, xi=xi, kappa=kappa, z=z, mu=mu, a_k=a_k, b_k=b_k,
        res_sin=abs(cmath.sin(w) + w),
        res_cosh=abs(math.cosh(kappa) * math.sin(xi) + xi),
        res_sinh=abs(math.sinh(kappa) * math.cos(xi) + kappa),
        phi_abs=abs(phi(p, Branch.MINUS, z)),
        phi_prime_abs=abs(phi_prime(p, Branch.MINUS, z)),
    )


def _gap_sq(p: Params) -> float:
    # 4b^2 - a^2 without cancellation
    b2 = 2 * abs(p.b)
    return (b2 - abs(p.a)) * (b2 + abs(p.a))


def line_zero(p: Params, n: int) -> Optional[complex]:
    """The zero of phi_minus with real part n nu, if there is one."""
    if n < 1:
        raise ValueError("n must be >= 1")
    nu = p.nu
    if p.b == 0:
        return complex(n * nu, 0.0) if p.a >= 0 else None
    a = p.a
    if not (0 < a < 2 * n * nu) or _gap_sq(p) <= 0:
        return None
    s = math.sqrt(_gap_sq(p)) / a
    lhs = math.exp(2 * n * math.pi * s)
    rhs = (2 * n * nu + a) / (2 * n * nu - a)
    if abs(lhs - rhs) > LINE_EQ_RTOL * rhs:
        return None
    return complex(n * nu, -n * nu * s)


def solve_b_for_line_zero(a: float, n: int, ell: float) -> float:
    """The b > a/2 that puts a zero of phi_minus exactly on Re z = n nu."""
    nu = math.pi / ell
    if n < 1 or not (0 < a < 2 * n * nu):
        raise ValueError(f"need 0 < a < 2 n nu = {2 * n * nu}")
    log_ratio = math.log((2 * n * nu + a) / (2 * n * nu - a))
    return 0.5 * a * math.sqrt(1 + (log_ratio / (2 * n * math.pi)) ** 2)


def b_for_theta(a: float, theta: float, ell: float) -> float:
    """Inverse of theta_parameter in b (b > 0)."""
    nu = math.pi / ell
    if not (a > 0 and theta > a / (2 * nu)):
        raise ValueError("need a > 0 and theta > a / (2 nu)")
    log_ratio = math.log((2 * theta * nu + a) / (2 * theta * nu - a))
    return 0.5 * a * math.sqrt(1 + (log_ratio / (2 * theta * math.pi)) ** 2)


def theta_parameter(p: Params) -> float:
    """Unique theta in (a / 2nu, inf] with 4b^2 = a^2 + a^2/(4 theta^2 pi^2) log^2(...).

    With L the logarithm, theta = (a / 2nu) coth(L/2) and the identity becomes
    L tanh(L/2) = ell sqrt(4b^2 - a^2), monotone in L. Solving for L keeps full
    precision when theta is extremely close to a / 2nu.
    """
    a, nu = p.a, p.nu
    if not a > 0:
        raise ValueError("theta is defined only for a > 0")
    gap = _gap_sq(p)
    if gap < 0:
        raise ValueError("theta requires a^2 < 4 b^2")
    if gap == 0:
        return math.inf
    c = p.ell * math.sqrt(gap)
    g = lambda t: t * math.tanh(t / 2) - c
    # L tanh(L/2) ~ L^2 / 2 for small L
    lo, hi = 0.0, max(2 * c + 2, 1e-300)
    if c < 1e-8:
        hi = 2 * math.sqrt(2 * c)
    if not g(hi) > 0:
        raise BisectionFailure("theta bracket lost its sign change")
    root = brentq(g, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=400)
    if root == 0:
        return math.inf
    return a / (2 * nu) / math.tanh(root / 2)


def strip_count_expected(p: Params, n: int) -> Tuple[int, int]:
    """Expected (zeros of phi_minus in the open strip n, zeros on the line Re z = n nu).

    Line n = 0 is the imaginary axis; its count is in eigenvalues (z = 0 counts once).
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if p.a < 0:
        raise ValueError("a < 0: use the conjugate problem with -a")
    regime = classify(p)
    if regime in (Regime.DECOUPLED, Regime.NEUMANN_PLUS_DAMPED):
        return 0, 1
    if regime is not Regime.COMPLEX_PAIR:
        if n == 0 and mu_pair(p).mu_minus == 0:
            # b^2 underflows: the low-frequency root sits at 0 in floating point
            return 0, 1
        return 1, 0
    if p.a == 0:
        # selfadjoint: one real zero per strip plus one zero on the negative imaginary axis
        return 1, 1 if n == 0 else 0
    theta = theta_parameter(p)
    if n >= 1 and abs(theta - n) < THETA_LINE_TOL:
        return 1, 1
    if abs(theta - (n + 1)) < THETA_LINE_TOL:
        return 1, 0
    return (2 if n < theta < n + 1 else 1), 0


def theta_table_csv(points: Iterable[ThetaPoint]) -> str:
    out = io.StringIO()
    out.write("k,xi,kappa,a_k,b_k,re_z,im_z,res_sin,res_cosh,res_sinh,phi_abs,phi_prime_abs\n")
    for t in points:
        row = [t.k, t.xi, t.kappa, t.a_k, t.b_k, t.z.real, t.z.imag, t.res_sin,
               t.res_cosh, t.res_sinh, t.phi_abs, t.phi_prime_abs]
        out.write(",".join(str(v) if isinstance(v, int) else repr(float(v)) for v in row) + "\n")
    return out.getvalue()
