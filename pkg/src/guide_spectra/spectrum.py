"""Transverse spectrum assembled from the zeros of the two characteristic functions.

Search layout: zeros are located in rectangles centred on the lines Re z = n nu
(see search_tiles) and then assigned to strips by their real part. Zeros come
in pairs +-z; the root with Re z > 0 (or Re z = 0, Im z < 0) is kept.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import rootfind as rf
from .charfn import Branch, branch_mu, eta, phi, phi_scaled, phi_scaled_prime
from .core import Params, Regime, classify, make_params, mu_pair
from .exceptional import THETA_LINE_TOL, line_zero, strip_count_expected, theta_parameter

ETA_DOUBLE = 1e-6
ETA_ILL = 1e-3
MAX_DOUBLINGS = 4


class SpectrumError(RuntimeError):
    pass


class IncompleteCertificate(SpectrumError):
    """Per-strip zero counts disagree with the expected pattern."""


class OutOfCertifiedRange(SpectrumError):
    pass


@dataclass(frozen=True)
class TransverseEigenvalue:
    z: complex
    lam: complex
    branch: str  # "Minus", "Plus" or "Decoupled"
    strip: int
    on_line: bool
    alg_mult: int
    geo_mult: int
    residual: float
    eta_abs: Optional[float] = None
    ill_conditioned: bool = False

    @property
    def strip_label(self) -> str:
        if self.on_line:
            return f"LineRe({self.strip})"
        return "LowFrequency" if self.strip == 0 else str(self.strip)


@dataclass(frozen=True)
class StripCount:
    n: int
    minus: int
    plus: int
    line_minus: int
    line_plus: int

    @property
    def total(self) -> int:
        return self.minus + self.plus + self.line_minus + self.line_plus


@dataclass(frozen=True)
class SpectrumTruncation:
    params: Params
    eigenvalues: Tuple[TransverseEigenvalue, ...]
    n_max: int
    effective_n0: int
    certificate: Tuple[StripCount, ...]
    window: Tuple[float, float]
    theta: Optional[float] = None

    @property
    def m(self) -> int:
        """Largest algebraic multiplicity present."""
        return max(e.alg_mult for e in self.eigenvalues)

    @property
    def certified_re_lambda(self) -> float:
        return (self.n_max * self.params.nu) ** 2

    def by_branch(self, branch: str) -> List[TransverseEigenvalue]:
        return [e for e in self.eigenvalues if e.branch == branch]


def _classify_location(p: Params, branch: Branch, z: complex) -> Tuple[int, bool]:
    """(strip, on_line). A zero within 1e-9 of a line goes on it only when an
    exact line zero exists there; otherwise the computed side decides, with
    offsets below rounding counted to the right of the line."""
    nu = p.nu
    k = round(z.real / nu)
    if k == 0:
        # relative test: tiny roots near z = 0 still have a resolvable angle
        if abs(z.real) > 1e-9 * abs(z):
            return 0, False
        return 0, True
    off = z.real - k * nu
    if abs(off) > 1e-9 * max(1.0, abs(z)):
        return int(math.floor(z.real / nu)), False
    if branch is Branch.MINUS and (
            (p.b == 0 and p.a >= 0) or (p.a > 0 and line_zero(p, int(k)) is not None)):
        return int(k), True
    if off < 0 and -off > ROUNDING_SIDE * max(1.0, abs(z)):
        return int(k) - 1, False
    return int(k), False


def _decoupled(p: Params, n_max: int) -> SpectrumTruncation:
    eigs = []
    for n in range(n_max + 1):
        z = complex(n * p.nu, 0.0)
        eigs.append(TransverseEigenvalue(z, z * z, "Decoupled", n, True, 2, 2, 0.0))
    cert = tuple(StripCount(n, 0, 0, 1, 1) for n in range(n_max + 1))
    return SpectrumTruncation(p, tuple(eigs), n_max, 0, cert, rf.default_window(p))


# tile offsets (in units of nu) tried in turn when a contour passes too close to a zero
TILE_SHIFTS = (0.0, 0.0731, -0.0917, 0.1173)
# offsets from a line below this (relative) are rounding noise
ROUNDING_SIDE = 64 * 2.2e-16
# roots this close to 0 are found only as a +-z cluster
TINY_ROOT = 1e-8


def search_tiles(p: Params, n_max: int, window, shift: float = 0.0) -> List[Tuple[int, rf.Rect]]:
    """Rectangles centred on the lines Re z = n nu, edges at half-integers (plus shift).

    High-frequency zeros sit within O(1/n) of a line, so the edges stay far from
    them. Tile 0 is symmetric about the origin, where zeros come in pairs +-z.
    """
    lo, hi = window
    nu = p.nu
    half = 0.5 + shift
    tiles = [(0, rf.Rect(-half * nu, half * nu, lo, -lo))]
    for n in range(1, n_max + 2):
        tiles.append((n, rf.Rect((n - 1 + half) * nu, (n + half) * nu, lo, hi)))
    return tiles


def _search_branch(p: Params, branch: Branch, n_max: int, window) -> List[rf.LocatedZero]:
    """Canonical zeros of one branch with 0 <= Re z < (n_max + 1.5) nu."""
    f = lambda z: phi_scaled(p, branch, z)
    fp = lambda z: phi_scaled_prime(p, branch, z)
    err: Exception = RuntimeError("unreachable")
    for shift in TILE_SHIFTS:
        try:
            raw = [lz for _, rect in search_tiles(p, n_max, window, shift)
                   for lz in rf.isolate_zeros(f, fp, rect)]
            break
        except (rf.BoundaryZero, rf.NonIntegerWinding) as exc:
            err = exc
    else:
        raise err
    found: List[rf.LocatedZero] = []
    near_origin = [lz for lz in raw if abs(lz.z) <= TINY_ROOT]
    if near_origin:
        mult = sum(lz.multiplicity for lz in near_origin)
        found.append(rf.LocatedZero(_root_near_origin(p, branch), max(1, mult // 2),
                                    0.0, mult, near_origin[0].cell))
    for lz in raw:
        z = lz.z
        tol = 1e-9 * max(1.0, abs(z))
        if abs(z) <= TINY_ROOT or z.real < -tol or (abs(z.real) <= tol and z.imag > 0):
            continue
        found.append(rf.LocatedZero(z, lz.multiplicity, lz.newton_residual,
                                    lz.count_certificate, lz.cell))
    return found


def _root_near_origin(p: Params, branch: Branch) -> complex:
    """Canonical root of a +-z pair that rounding cannot separate from 0.

    phi_scaled is even, -2 mu + z^2 (2 i ell + mu ell^2) + O(z^4), so the
    eigenvalue follows from the quadratic term.
    """
    mu = branch_mu(p, branch)
    if mu == 0:
        return 0j
    z = cmath.sqrt(2 * mu / (2j * p.ell + mu * p.ell ** 2))
    if z.real < 0 or (z.real == 0 and z.imag > 0):
        z = -z
    return z


def _assemble(p: Params, branch: Branch, zeros, degenerate: bool, n_max: int):
    out = []
    nu = p.nu
    for lz in zeros:
        z = lz.z
        strip, on_line = _classify_location(p, branch, z)
        if strip > n_max:
            continue
        res = float(abs(phi(p, branch, z)))
        if z == 0:
            # phi_minus ~ 2 i ell z^2 at 0 when b = 0: one eigenvalue lambda = 0
            out.append(TransverseEigenvalue(0j, 0j, branch.value, 0, True,
                                            lz.multiplicity, 1, res))
            continue
        e_abs = float(abs(eta(p, branch, z)))
        if degenerate:
            mult, ill = 2, lz.multiplicity != 1
        else:
            mult = lz.multiplicity
            ill = (ETA_DOUBLE <= e_abs <= ETA_ILL) or ((mult == 2) != (e_abs < ETA_DOUBLE))
        out.append(TransverseEigenvalue(z, z * z, branch.value, strip, on_line, mult, 1,
                                        res, e_abs, ill))
    return out


def _certificate(eigs, n_max) -> Tuple[StripCount, ...]:
    rows = []
    for n in range(n_max + 1):
        c = {"Minus": [0, 0], "Plus": [0, 0]}
        for e in eigs:
            if e.strip == n:
                c[e.branch][1 if e.on_line else 0] += e.alg_mult
        rows.append(StripCount(n, c["Minus"][0], c["Plus"][0], c["Minus"][1], c["Plus"][1]))
    return tuple(rows)


def _expected_ok(p: Params, cert, degenerate: bool) -> bool:
    if degenerate:
        return all(r.minus == 2 and r.line_minus == 0 for r in cert)
    theta = None
    if classify(p) is Regime.COMPLEX_PAIR and p.a > 0:
        theta = theta_parameter(p)
    near = None
    if theta is not None and math.isfinite(theta):
        k = round(theta)
        if k >= 1 and abs(theta - k) < THETA_LINE_TOL:
            near = k
    for r in cert:
        if r.plus != 1 or r.line_plus != 0:
            return False
        if near is not None and r.n in (near - 1, near):
            continue
        if (r.minus, r.line_minus) != strip_count_expected(p, r.n):
            return False
    if near is not None and near <= len(cert) - 1:
        # theta within tolerance of an integer: accept either side or the line
        rows = [r for r in cert if r.n in (near - 1, near)]
        tot = rows[0].minus + rows[1].line_minus + rows[1].minus
        if tot != 3 or rows[0].line_minus != strip_count_expected(p, near - 1)[1]:
            return False
    return True


def _effective_n0(cert) -> int:
    n0 = len(cert)
    for r in reversed(cert):
        if r.total != 2:
            break
        n0 = r.n
    return n0


def compute_spectrum(p: Params, n_max: int = 10, window=None) -> SpectrumTruncation:
    """All eigenvalues whose canonical root lies in 0 <= Re z < (n_max + 1) nu."""
    if n_max < 5:
        raise ValueError("n_max must be >= 5")
    regime = classify(p)
    if regime is Regime.DECOUPLED:
        return _decoupled(p, n_max)
    if p.a < 0:
        return _conjugate(compute_spectrum(make_params(-p.a, p.b, p.ell), n_max, window), p)
    degenerate = regime is Regime.DEGENERATE
    branches = [Branch.MINUS] if degenerate else [Branch.MINUS, Branch.PLUS]
    lo, hi = window if window is not None else rf.default_window(p)
    for _ in range(MAX_DOUBLINGS + 1):
        eigs: List[TransverseEigenvalue] = []
        for br in branches:
            zeros = _search_branch(p, br, n_max, (lo, hi))
            eigs.extend(_assemble(p, br, zeros, degenerate, n_max))
        cert = _certificate(eigs, n_max)
        if _expected_ok(p, cert, degenerate):
            break
        lo *= 2
    else:
        raise IncompleteCertificate(f"strip counts never matched the expected pattern: {cert}")
    eigs.sort(key=lambda e: (e.lam.real, e.lam.imag))
    theta = theta_parameter(p) if regime is Regime.COMPLEX_PAIR and p.a > 0 else None
    return SpectrumTruncation(p, tuple(eigs), n_max, _effective_n0(cert), cert, (lo, hi), theta)


def _conjugate(s: SpectrumTruncation, p: Params) -> SpectrumTruncation:
    # T_{-a,b} is the adjoint of T_{a,b}: conjugate eigenvalues, re-tag branches
    eigs = []
    for e in s.eigenvalues:
        z = e.z.conjugate()
        rm = abs(phi(p, Branch.MINUS, z))
        rp = abs(phi(p, Branch.PLUS, z))
        br = Branch.MINUS if rm <= rp else Branch.PLUS
        eigs.append(TransverseEigenvalue(z, z * z, br.value, e.strip, e.on_line, e.alg_mult,
                                         e.geo_mult, float(min(rm, rp)), e.eta_abs,
                                         e.ill_conditioned))
    eigs.sort(key=lambda e: (e.lam.real, e.lam.imag))
    lo, hi = s.window
    return SpectrumTruncation(p, tuple(eigs), s.n_max, s.effective_n0, _certificate(eigs, s.n_max),
                              (-hi, -lo), None)


@dataclass(frozen=True)
class GapReport:
    gamma1: float
    computed_min: float
    high_frequency_limit: float
    limit_binding: bool


def gap_report(s: SpectrumTruncation) -> GapReport:
    p = s.params
    if not (p.a > 0 and p.b != 0):
        raise ValueError("the gap is zero unless a > 0 and b != 0")
    mp = mu_pair(p)
    limit = 2 * min(mp.mu_minus.real, mp.mu_plus.real) / p.ell
    computed = min(-e.lam.imag for e in s.eigenvalues)
    return GapReport(min(computed, limit), computed, limit, limit < computed)


def spectral_gap(s: SpectrumTruncation) -> float:
    """gamma_1 = inf of -Im lambda, accounting for the high-frequency tail."""
    return gap_report(s).gamma1


def weyl_count(s: SpectrumTruncation, r: float) -> int:
    """Eigenvalues with Re lambda < r, counted with algebraic multiplicity."""
    if r >= s.certified_re_lambda:
        raise OutOfCertifiedRange(f"r = {r} exceeds the certified range {s.certified_re_lambda}")
    return sum(e.alg_mult for e in s.eigenvalues if e.lam.real < r)


def weyl_bounds(s: SpectrumTruncation, r: float) -> Tuple[float, float]:
    nu = s.params.nu
    root = 2 * math.sqrt(r) / nu
    return root - 1, max(2 * s.effective_n0, root + 3)


@dataclass(frozen=True)
class AsymptoticsRow:
    n: int
    branch: str
    z: complex
    residual: float
    scaled: float  # residual * n^2
    lambda_scaled: float  # |lambda - (n^2 nu^2 - 2 i mu / ell)| * n


def asymptotics_residual(s: SpectrumTruncation, n_min: int = 1) -> List[AsymptoticsRow]:
    """Distance of each high-frequency root to n nu - i mu / (n pi)."""
    p = s.params
    nu, ell = p.nu, p.ell
    mp = mu_pair(p)
    rows = []
    regime = classify(p)
    for br in (Branch.MINUS, Branch.PLUS):
        mu = mp.mu_minus if br is Branch.MINUS else mp.mu_plus
        if regime is Regime.DECOUPLED:
            pool = list(s.eigenvalues)
        elif regime is Regime.DEGENERATE:
            pool = s.by_branch("Minus")
        else:
            pool = s.by_branch(br.value)
        for n in range(n_min, s.n_max + 1):
            cand = [e for e in pool if abs(e.z - n * nu) < nu / 2]
            if not cand:
                continue
            e = min(cand, key=lambda e: abs(e.z - n * nu))
            res = abs(e.z - (n * nu - 1j * mu / (n * math.pi)))
            lres = abs(e.lam - (n * n * nu * nu - 2j * mu / ell))
            rows.append(AsymptoticsRow(n, br.value, e.z, res, res * n * n, lres * n))
    return rows


def dist_to_sigma(s: SpectrumTruncation, zeta: complex) -> float:
    """Distance from zeta to the union of half-lines lambda + [0, inf)."""
    zeta = complex(zeta)
    if zeta.real >= s.certified_re_lambda:
        raise OutOfCertifiedRange("Re zeta beyond the certified truncation")
    best = math.inf
    for e in s.eigenvalues:
        if zeta.real >= e.lam.real:
            d = abs(zeta.imag - e.lam.imag)
        else:
            d = abs(zeta - e.lam)
        best = min(best, d)
    return best


def s_bracket_m(srange: float, m: int) -> float:
    if srange <= 0 or m < 1:
        raise ValueError("need s > 0 and m >= 1")
    return min(srange, srange ** m)


def spectrum_to_dict(s: SpectrumTruncation) -> Dict:
    p = s.params
    eigs = [{
        "re_lambda": e.lam.real, "im_lambda": e.lam.imag, "re_z": e.z.real, "im_z": e.z.imag,
        "branch": e.branch, "strip": e.strip_label, "alg_mult": e.alg_mult,
        "geo_mult": e.geo_mult, "residual": e.residual, "ill_conditioned": e.ill_conditioned,
    } for e in s.eigenvalues]
    out = {
        "params": {"a": p.a, "b": p.b, "ell": p.ell, "nu": p.nu, "regime": classify(p).value},
        "n_max": s.n_max,
        "effective_n0": s.effective_n0,
        "window": list(s.window),
        "theta": s.theta,
        "certificate": [{"n": r.n, "minus": r.minus, "plus": r.plus, "line_minus": r.line_minus,
                         "line_plus": r.line_plus} for r in s.certificate],
        "eigenvalues": eigs,
    }
    if p.a > 0 and p.b != 0:
        g = gap_report(s)
        out["gap"] = {"gamma1": g.gamma1, "computed_min": g.computed_min,
                      "high_frequency_limit": g.high_frequency_limit,
                      "limit_binding": g.limit_binding}
    else:
        out["gap"] = None
    return out
