"""Zero counting and isolation for analytic functions on rectangles.

Counting uses the argument principle, evaluated as the accumulated change of
arg f along the boundary. Each boundary segment is bisected until its phase
increment is small, agrees with the sum over its two halves, and shows no dip
in |f| at the midpoint, so zeros close to an edge are handled without a fixed
quadrature budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .core import Params

AnalyticFn = Callable[[np.ndarray], np.ndarray]

PHASE_STEP = math.pi / 4
MAX_REFINE = 48
MIN_CELL = 1e-3
MAX_MULT = 4
PERTURB = 1e-7
# initial node spacing cap; a zero of even order close to the contour turns the
# phase by about 2 pi between samples and would otherwise alias to nothing
MAX_SPACING = 0.01
# refine a segment whose midpoint modulus is this far below the endpoints' geometric mean
DIP_LOG = 1.0
# radii (in units of the circumscribed radius) tried for cluster moments
CIRCLE_GROWTH = (1.0, 1.37, 1.81, 2.53, 3.3)


class RootfindError(RuntimeError):
    pass


class BoundaryZero(RootfindError):
    """The function (numerically) vanishes on the contour."""


class NonIntegerWinding(RootfindError):
    """Accumulated phase is not close to a multiple of 2 pi."""


class DepthExceeded(RootfindError):
    """Subdivision could not separate a cluster of zeros."""

    def __init__(self, msg: str, cell: Optional["Rect"] = None):
        super().__init__(msg)
        self.cell = cell


@dataclass(frozen=True)
class Rect:
    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def center(self) -> complex:
        return complex((self.re_min + self.re_max) / 2, (self.im_min + self.im_max) / 2)

    @property
    def diameter(self) -> float:
        return math.hypot(self.re_max - self.re_min, self.im_max - self.im_min)

    def contains(self, z: complex, pad: float = 0.0) -> bool:
        return (self.re_min - pad <= z.real <= self.re_max + pad
                and self.im_min - pad <= z.imag <= self.im_max + pad)

    def grown(self, d: float) -> "Rect":
        return Rect(self.re_min - d, self.re_max + d, self.im_min - d, self.im_max + d)

    def split(self, fx: float = 0.5, fy: float = 0.5) -> List["Rect"]:
        xm = self.re_min + fx * (self.re_max - self.re_min)
        ym = self.im_min + fy * (self.im_max - self.im_min)
        return [Rect(self.re_min, xm, self.im_min, ym), Rect(xm, self.re_max, self.im_min, ym),
                Rect(self.re_min, xm, ym, self.im_max), Rect(xm, self.re_max, ym, self.im_max)]


@dataclass(frozen=True)
class LocatedZero:
    z: complex
    multiplicity: int
    newton_residual: float
    count_certificate: int
    cell: Rect


def _contour(rect: Rect, per_edge: int) -> np.ndarray:
    c = [complex(rect.re_min, rect.im_min), complex(rect.re_max, rect.im_min),
         complex(rect.re_max, rect.im_max), complex(rect.re_min, rect.im_max)]
    pts = []
    for k in range(4):
        seg = c[(k + 1) % 4] - c[k]
        n = max(per_edge, int(math.ceil(abs(seg) / MAX_SPACING)))
        pts.append(c[k] + np.arange(n) / n * seg)
    return np.concatenate(pts)


def winding_number(f: AnalyticFn, rect: Rect, quad_points: int = 256) -> float:
    """Unrounded (1/2pi) * total change of arg f around the rectangle."""
    nodes = _contour(rect, quad_points)
    vals = np.asarray(f(nodes), dtype=complex)
    if not np.all(np.isfinite(vals)):
        raise BoundaryZero("non-finite function value on the contour")
    mags = np.abs(vals)
    neigh = np.maximum(np.roll(mags, 1), np.roll(mags, -1))
    if np.any(mags <= 1e-12 * neigh) or np.any(mags == 0):
        k = int(np.argmin(mags / np.maximum(neigh, 1e-300)))
        raise BoundaryZero(f"function vanishes near contour point {nodes[k]}")

    # segment arrays: start point, end point, start value, end value
    za, zb = nodes, np.roll(nodes, -1)
    fa, fb = vals, np.roll(vals, -1)
    total = 0.0
    min_len = 1e-13 * max(1.0, rect.diameter)
    for _ in range(MAX_REFINE):
        if za.size == 0:
            break
        zm = (za + zb) / 2
        fm = np.asarray(f(zm), dtype=complex)
        if not np.all(np.isfinite(fm)) or np.any(fm == 0):
            raise BoundaryZero("function vanishes on a refined contour point")
        d = np.angle(fb / fa)
        d1 = np.angle(fm / fa)
        d2 = np.angle(fb / fm)
        dip = np.log(np.abs(fm)) < 0.5 * (np.log(np.abs(fa)) + np.log(np.abs(fb))) - DIP_LOG
        ok = ((np.abs(d1) < PHASE_STEP) & (np.abs(d2) < PHASE_STEP)
              & (np.abs(d1 + d2 - d) < 1e-9) & ~dip)
        total += float(np.sum(d[ok]))
        bad = ~ok
        if np.any(bad) and np.min(np.abs(zb[bad] - za[bad])) < min_len:
            raise BoundaryZero("phase refinement hit the resolution floor (zero on contour)")
        za, zb, fa, fb, fm = za[bad], zb[bad], fa[bad], fb[bad], fm[bad]
        za, zb = np.concatenate([za, zm[bad]]), np.concatenate([zm[bad], zb])
        fa, fb = np.concatenate([fa, fm]), np.concatenate([fm, fb])
    else:
        raise BoundaryZero("phase refinement did not settle")
    return total / (2 * math.pi)


def count_zeros(f: AnalyticFn, rect: Rect, quad_points: int = 256) -> int:
    """Number of zeros (with multiplicity) of f inside rect."""
    w = winding_number(f, rect, quad_points)
    n = round(w)
    if abs(w - n) > 0.25:
        raise NonIntegerWinding(f"winding {w} is not close to an integer")
    return int(n)


def count_zeros_robust(f: AnalyticFn, rect: Rect, quad_points: int = 256,
                       tries: int = 3) -> tuple:
    """count_zeros with up to `tries` outward perturbations of size 1e-7; returns (count, rect)."""
    err: Exception = RuntimeError("unreachable")
    for k in range(tries + 1):
        r = rect.grown(k * PERTURB)
        try:
            return count_zeros(f, r, quad_points), r
        except (BoundaryZero, NonIntegerWinding) as e:
            err = e
    raise err


def _newton(f, fp, z0: complex, mult: int, iters: int = 80) -> complex:
    z = complex(z0)
    for _ in range(iters):
        fz = complex(f(np.array([z]))[0])
        if fz == 0:
            return z
        dz = mult * fz / complex(fp(np.array([z]))[0])
        if not np.isfinite(dz):
            return z
        z -= dz
        if abs(dz) <= 4e-16 * max(1.0, abs(z)):
            break
    return z


def _residual(f, z: complex) -> float:
    return float(abs(f(np.array([z]))[0]))


# off-center splits so symmetric zeros (e.g. exactly at a midpoint) avoid the cuts
_SPLITS = [(0.4871, 0.5137), (0.5329, 0.4612), (0.4433, 0.5581), (0.5712, 0.4237)]


def _children(f, cell: Rect, m: int, quad_points: int):
    for fx, fy in _SPLITS:
        kids = cell.split(fx, fy)
        try:
            counts = [count_zeros(f, k, quad_points) for k in kids]
        except (BoundaryZero, NonIntegerWinding):
            continue
        if sum(counts) == m:
            return list(zip(kids, counts))
    raise NonIntegerWinding(f"could not partition cell {cell} consistently (count {m})")


def _power_sums(f, fp, center: complex, radius: float, m: int, nodes: int = 128) -> np.ndarray:
    """s_k = (1/2 pi i) int (z - center)^k f'/f dz on a circle, k = 0..m (trapezoid rule)."""
    w = radius * np.exp(2j * np.pi * np.arange(nodes) / nodes)
    z = center + w
    ratio = np.asarray(fp(z), dtype=complex) / np.asarray(f(z), dtype=complex)
    return np.array([np.mean(ratio * w ** (k + 1)) for k in range(m + 1)])


def _resolve_cluster(f, fp, cell: Rect, m: int) -> List[LocatedZero]:
    """A count-m cell at minimum size: split into distinct zeros and multiple ones.

    A vanishing central second moment means a single multiple zero at the
    centroid. Otherwise the zeros inside the circumscribed circle are the roots
    of the polynomial whose power sums are the contour moments. Each is polished by Newton, roots
    closer than the separation threshold merge into one multiple zero, and only
    those lying in the cell are kept.
    """
    c = cell.center
    for grow in CIRCLE_GROWTH:
        # the circle must stay clear of zeros for the trapezoid rule to converge
        radius = 0.5 * cell.diameter * grow
        k_circ = _power_sums(f, fp, c, radius, 0)[0]
        n_circ = int(round(k_circ.real))
        if abs(k_circ - n_circ) <= 0.02 and m <= n_circ <= 2 * MAX_MULT:
            break
    else:
        raise NonIntegerWinding(f"no clean moment circle for {m} zeros in {cell}")
    sums = _power_sums(f, fp, c, radius, max(n_circ, 2))
    # zeros near the circle spoil the trapezoid rule; recentre on the centroid
    for _ in range(2):
        c2 = complex(c + sums[1] / n_circ)
        sums2 = _power_sums(f, fp, c2, radius, max(n_circ, 2))
        if abs(sums2[0] - n_circ) > 1e-6:
            break
        c, sums = c2, sums2
    sep = 1e-7 * max(1.0, abs(c))
    mean = sums[1] / n_circ
    if n_circ > 1 and abs(sums[2] / n_circ - mean * mean) <= sep * sep:
        # one zero of multiplicity n_circ; polynomial roots would scatter by eps^(1/n)
        z = complex(c + mean)
        if not cell.contains(z, pad=1e-12 * max(1.0, abs(z))) or n_circ != m:
            raise NonIntegerWinding(f"multiple zero at {z} does not match count {m} in {cell}")
        return [LocatedZero(z, m, _residual(f, z), m, cell)]
    # Newton identities: elementary symmetric polynomials from power sums
    e = [1.0 + 0j]
    for k in range(1, n_circ + 1):
        e.append(sum((-1) ** (i - 1) * e[k - i] * sums[i] for i in range(1, k + 1)) / k)
    roots = c + np.roots([(-1) ** k * e[k] for k in range(n_circ + 1)])
    groups: List[List[complex]] = []
    for r in roots:
        for g in groups:
            if abs(r - g[0]) <= sep:
                g.append(r)
                break
        else:
            groups.append([r])
    out = []
    for g in groups:
        k = len(g)
        z0 = complex(np.mean(g))
        z = _newton(f, fp, z0, 1) if k == 1 else z0
        if abs(z - z0) > sep:
            z = z0
        if cell.contains(z, pad=1e-12 * max(1.0, abs(z))):
            out.append(LocatedZero(z, k, _residual(f, z), m, cell))
    if sum(q.multiplicity for q in out) != m:
        raise NonIntegerWinding(f"cluster split disagrees with count {m} in {cell}")
    return out


def isolate_zeros(f: AnalyticFn, f_prime: AnalyticFn, rect: Rect, max_depth: int = 40,
                  quad_points: int = 64, min_cell: float = MIN_CELL) -> List[LocatedZero]:
    """All zeros of f in rect, polished by Newton; multiplicities sum to the rect count."""
    total, rect = count_zeros_robust(f, rect, quad_points)
    found: List[LocatedZero] = []
    stack = [(rect, total, 0)]
    while stack:
        cell, m, depth = stack.pop()
        if m == 0:
            continue
        if m == 1:
            z = _newton(f, f_prime, cell.center, 1)
            if cell.contains(z, pad=1e-12 * max(1.0, abs(z))):
                found.append(LocatedZero(z, 1, _residual(f, z), 1, cell))
                continue
        if cell.diameter < min_cell:
            if m > MAX_MULT:
                raise DepthExceeded(f"{m} zeros unresolved in a minimum-size cell", cell)
            found.extend(_resolve_cluster(f, f_prime, cell, m))
            continue
        if depth >= max_depth:
            raise DepthExceeded(f"maximum depth reached with {m} zeros", cell)
        for kid, c in _children(f, cell, m, quad_points):
            stack.append((kid, c, depth + 1))
    found.sort(key=lambda lz: (lz.z.real, lz.z.imag))
    return found


def strip_rect(p: Params, n: int, im_lo: float, im_hi: float) -> Rect:
    """The strip n nu < Re z < (n+1) nu, clipped vertically."""
    if n < 0 or not im_lo < im_hi:
        raise ValueError("need n >= 0 and im_lo < im_hi")
    return Rect(n * p.nu, (n + 1) * p.nu, im_lo, im_hi)


def default_window(p: Params) -> tuple:
    """Vertical search window (im_lo, im_hi) for a >= 0, mirrored for a < 0."""
    depth = (abs(p.a) + 1.0) * max(1.0, 2.0 / p.ell) + 1.0
    return (-depth, 0.5) if p.a >= 0 else (-0.5, depth)
