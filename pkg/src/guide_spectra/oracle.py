"""Independent checks that never evaluate the characteristic functions.

* shooting_det: integrates -U'' = z^2 U with fixed-step RK4 from x = ell and
  evaluates the boundary functional U'(0) + i M U(0).
* DiscreteOperator: second-order finite differences with ghost nodes at both
  ends, unknowns interleaved (u_0, v_0, u_1, v_1, ...) so the matrix is banded
  with two sub- and super-diagonals.
* discrete_det_count: argument principle on the finite-difference determinant.
* resolvent_norm_estimate: smallest singular value by inverse iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.linalg.lapack import zgbtrf, zgbtrs

from . import rootfind as rf
from .core import Params, coupling_matrix


class OracleError(RuntimeError):
    pass


class StepCountTooSmall(OracleError):
    pass


class ResolutionBudgetExceeded(OracleError):
    pass


class NearSingular(OracleError):
    pass


@dataclass(frozen=True)
class ShootingConfig:
    steps: int = 4096

    def __post_init__(self):
        s = self.steps
        if s < 256 or s & (s - 1):
            raise ValueError("steps must be a power of two >= 256")


def _rk4_propagator(z: np.ndarray, ell: float, steps: int, derivative: bool = True):
    """RK4 map over `steps` steps from x = ell to x = 0, with its z-derivative.

    The ODE w'' = -z^2 w is linear with constant coefficients, so one RK4 step
    is the fixed matrix (1 - s/2 + s^2/24) I + (1 - s/6) h A with s = h^2 z^2,
    and `steps` steps are applied by repeated squaring. Returns the entries
    (p, q, r, t) of [[p, q], [r, t]] and their z-derivatives.
    """
    z = np.asarray(z, dtype=complex).ravel()
    h = -ell / steps
    s = h * h * z * z
    ds = 2 * h * h * z
    c = 1 - s / 2 + s * s / 24
    dc = (-0.5 + s / 12) * ds
    g = 1 - s / 6
    dg = -ds / 6
    p, q, r, t = c, g * h, -g * h * z * z, c
    dp, dq, dr, dt = dc, dg * h, -h * (dg * z * z + 2 * g * z), dc
    for _ in range(int(math.log2(steps))):
        if derivative:
            dp, dq, dr, dt = (dp * p + p * dp + dq * r + q * dr, dp * q + p * dq + dq * t + q * dt,
                              dr * p + r * dp + dt * r + t * dr, dr * q + r * dq + dt * t + t * dt)
        p, q, r, t = p * p + q * r, p * q + q * t, r * p + t * r, r * q + t * t
    return (p, q, r, t), (dp, dq, dr, dt)


def _boundary_matrix_and_derivative(p: Params, z, steps: int, derivative: bool = True):
    (w, _, dw, _), (wz, _, dwz, _) = _rk4_propagator(z, p.ell, steps, derivative)
    # frame: w(ell) = 1, w'(ell) = 0, so (w, w')(0) is the first column of the map
    m = coupling_matrix(p)
    # the operator is diagonal, so frame i is w(x) e_i and U'(0) + iMU(0) = w'(0) e_i + i w(0) M e_i
    bmat = dw[:, None, None] * np.eye(2) + 1j * w[:, None, None] * m
    dbmat = dwz[:, None, None] * np.eye(2) + 1j * wz[:, None, None] * m
    return bmat, dbmat


def _det2(b):
    return b[:, 0, 0] * b[:, 1, 1] - b[:, 0, 1] * b[:, 1, 0]


def shooting_det(p: Params, z, cfg: ShootingConfig = ShootingConfig(), check: bool = False):
    """det [U_1'(0) + iMU_1(0), U_2'(0) + iMU_2(0)] for the frames U_i(ell) = e_i, U_i'(ell) = 0."""
    zz = np.atleast_1d(np.asarray(z, dtype=complex))
    b, _ = _boundary_matrix_and_derivative(p, zz, cfg.steps, derivative=False)
    d = _det2(b)
    if check:
        b2, _ = _boundary_matrix_and_derivative(p, zz, 2 * cfg.steps, derivative=False)
        d2 = _det2(b2)
        scale = np.abs(b[:, 0, 0] * b[:, 1, 1]) + np.abs(b[:, 0, 1] * b[:, 1, 0]) + 1e-300
        if np.any(np.abs(d - d2) > 1e-9 * scale):
            raise StepCountTooSmall(f"RK4 with {cfg.steps} steps disagrees with {2 * cfg.steps}")
    return complex(d[0]) if np.ndim(z) == 0 else d.reshape(np.shape(z))


def shooting_det_prime(p: Params, z, cfg: ShootingConfig = ShootingConfig()):
    """z-derivative of the discrete RK4 map's determinant (exact for the fixed-step scheme)."""
    zz = np.atleast_1d(np.asarray(z, dtype=complex))
    b, db = _boundary_matrix_and_derivative(p, zz, cfg.steps)
    d = (db[:, 0, 0] * b[:, 1, 1] + b[:, 0, 0] * db[:, 1, 1]
         - db[:, 0, 1] * b[:, 1, 0] - b[:, 0, 1] * db[:, 1, 0])
    return complex(d[0]) if np.ndim(z) == 0 else d.reshape(np.shape(z))


def shooting_zeros(p: Params, rect: rf.Rect, cfg: ShootingConfig = ShootingConfig()):
    f = lambda z: shooting_det(p, z, cfg)
    fp = lambda z: shooting_det_prime(p, z, cfg)
    return rf.isolate_zeros(f, fp, rect)


class DiscreteOperator:
    """Finite-difference T_h on N_h + 1 nodes per component."""

    KL = KU = 2

    def __init__(self, p: Params, n_h: int):
        if n_h < 200:
            raise ValueError("N_h must be >= 200")
        self.params = p
        self.n_h = n_h
        self.h = p.ell / n_h
        self.x = np.linspace(0.0, p.ell, n_h + 1)
        w = np.full(n_h + 1, self.h)
        w[0] = w[-1] = self.h / 2
        self.node_weights = w
        # trapezoid weights, repeated for the interleaved (u, v) unknowns
        self.weights = np.repeat(w, 2)
        self.size = 2 * (n_h + 1)
        self._band_cache = {}

    def band(self, shift: complex = 0.0, scaled: bool = False) -> np.ndarray:
        """LAPACK general-band storage of T_h - shift (with room for pivoting fill).

        With scaled=True the matrix is W^(1/2) (T_h - shift) W^(-1/2), in which the
        discrete L2 norm becomes the Euclidean one.
        """
        key = bool(scaled)
        if key not in self._band_cache:
            self._band_cache[key] = self._build_band(key)
        ab = self._band_cache[key].copy()
        ab[self.KL + self.KU] -= shift
        return ab

    def _build_band(self, scaled: bool) -> np.ndarray:
        n, h, kl, ku = self.size, self.h, self.KL, self.KU
        a, b = self.params.a, self.params.b
        ab = np.zeros((2 * kl + ku + 1, n), dtype=complex)
        row0 = kl + ku
        inv = 1.0 / (h * h)
        ab[row0] = 2 * inv
        # entry (i, i + 2) sits in row row0 - 2, column i + 2
        sup = np.full(n - 2, -inv)
        sub = np.full(n - 2, -inv)
        sup[:2] = -2 * inv  # node 0 couples to node 1 with weight 2 (ghost node)
        sub[-2:] = -2 * inv  # node N couples to node N - 1 with weight 2
        ab[row0 - 2, 2:] = sup
        ab[row0 + 2, :-2] = sub
        # ghost-node boundary block -(2i/h) M at node 0
        ab[row0, 0] += -2j / h * a
        ab[row0 - 1, 1] += -2j / h * b
        ab[row0 + 1, 0] += 2j / h * b
        if scaled:
            sw = np.sqrt(self.weights)
            for d in range(-ku, kl + 1):
                cols = np.arange(max(0, -d), min(n, n - d))
                ab[row0 + d, cols] *= sw[cols + d] / sw[cols]
        return ab

    def matvec(self, u: np.ndarray) -> np.ndarray:
        """T_h applied to an interleaved vector."""
        uu = u.reshape(-1, 2)
        h2 = self.h * self.h
        out = np.empty_like(uu)
        out[1:-1] = (2 * uu[1:-1] - uu[:-2] - uu[2:]) / h2
        out[0] = (2 * uu[0] - 2 * uu[1]) / h2
        out[-1] = (2 * uu[-1] - 2 * uu[-2]) / h2
        out[0] += -2j / self.h * (coupling_matrix(self.params) @ uu[0])
        return out.reshape(-1)

    def to_dense(self) -> np.ndarray:
        eye = np.eye(self.size)
        return np.stack([self.matvec(eye[:, k].astype(complex)) for k in range(self.size)], axis=1)

    def inner(self, u: np.ndarray, v: np.ndarray) -> complex:
        return complex(np.sum(self.weights * u * np.conj(v)))

    def logdet_banded(self, omega: complex):
        """(log|det(T_h - omega)|, arg det) from a pivoted banded LU factorization."""
        lu, piv, info = zgbtrf(self.band(omega), self.KL, self.KU)
        if info > 0:
            return -math.inf, 0.0
        diag = lu[self.KL + self.KU]
        swaps = int(np.sum(piv != np.arange(self.size)))
        phase = float(np.sum(np.angle(diag)) + math.pi * swaps)
        return float(np.sum(np.log(np.abs(diag)))), phase

    def symbol(self, z):
        """Discrete dispersion omega_h(z) = (4 / h^2) sin^2(z h / 2)."""
        return 4.0 / self.h ** 2 * np.sin(np.asarray(z) * self.h / 2) ** 2

    def det_in_z(self, z, with_derivative: bool = False):
        """h^(4(N_h+1)) det(T_h - omega_h(z)), vectorized over z.

        Each component block is tridiagonal; its trailing-principal determinants
        follow from the continuant (no-pivot LU) recursion. The boundary block is a
        rank-two correction at node 0, folded in with the determinant lemma:
        det = D^2 + D D' tr(h^2 C) + D'^2 det(h^2 C), where C = -(2i/h) M.
        """
        scalar = np.ndim(z) == 0
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        h, nn = self.h, self.n_h
        alpha = 2 * np.cos(z * h)  # 2 - h^2 omega_h(z)
        dalpha = -2 * h * np.sin(z * h)
        # trailing determinants P_k of rows k..N (rows scaled by h^2)
        p_next2 = np.ones_like(z)
        p_next = alpha.copy()
        d_next2 = np.zeros_like(z)
        d_next = dalpha.copy()
        for k in range(nn - 1, 0, -1):
            coupling = 2.0 if k == nn - 1 else 1.0
            p_k = alpha * p_next - coupling * p_next2
            d_k = dalpha * p_next + alpha * d_next - coupling * d_next2
            p_next2, p_next = p_next, p_k
            d_next2, d_next = d_next, d_k
        d_full = alpha * p_next - 2.0 * p_next2
        dd_full = dalpha * p_next + alpha * d_next - 2.0 * d_next2
        d_trunc, dd_trunc = p_next, d_next
        a, b = self.params.a, self.params.b
        tr_c = -2j * h * a
        det_c = -4 * h * h * b * b
        val = d_full ** 2 + d_full * d_trunc * tr_c + d_trunc ** 2 * det_c
        if scalar:
            val = complex(val[0])
        if not with_derivative:
            return val
        der = (2 * d_full * dd_full + (dd_full * d_trunc + d_full * dd_trunc) * tr_c
               + 2 * d_trunc * dd_trunc * det_c)
        return val, complex(der[0]) if scalar else der


def _check_budget(p: Params, rect: rf.Rect, n_h: int):
    n_allowed = n_h // 40
    if rect.re_max > (n_allowed + 1) * p.nu or rect.re_min < -(n_allowed + 1) * p.nu:
        raise ResolutionBudgetExceeded(
            f"strips beyond n = {n_allowed} are not resolved by N_h = {n_h}")


def discrete_det_count(p: Params, rect: rf.Rect, n_h: int) -> int:
    """Zeros of z -> det(T_h - omega_h(z)) inside rect (argument principle with phase continuation)."""
    _check_budget(p, rect, n_h)
    op = DiscreteOperator(p, n_h)
    return rf.count_zeros(lambda z: op.det_in_z(z), rect, quad_points=64)


def discrete_zeros(p: Params, rect: rf.Rect, n_h: int) -> List[rf.LocatedZero]:
    _check_budget(p, rect, n_h)
    op = DiscreteOperator(p, n_h)
    f = lambda z: op.det_in_z(z)
    fp = lambda z: op.det_in_z(z, with_derivative=True)[1]
    return rf.isolate_zeros(f, fp, rect)


def discrete_eigenvalues(p: Params, n_h: int, n_max: int, window) -> np.ndarray:
    """Discrete eigenvalues omega_h(z) for roots with 0 <= Re z < (n_max + 1) nu."""
    op = DiscreteOperator(p, n_h)
    lo, hi = window
    nu = p.nu
    eps = 1e-4 * nu
    out = []
    for n in range(n_max + 1):
        rect = rf.Rect(-(nu - eps), nu - eps, lo, -lo) if n == 0 else \
            rf.Rect(n * nu - eps, (n + 1) * nu - eps, lo, hi)
        for lz in discrete_zeros(p, rect, n_h):
            z = lz.z
            tol = 1e-9 * max(1.0, abs(z))
            if z.real < -tol or (abs(z.real) <= tol and z.imag > tol):
                continue
            out.extend([op.symbol(z)] * lz.multiplicity)
    return np.array(out, dtype=complex)


def resolvent_norm_estimate(p: Params, zeta: complex, n_h: int, tol: float = 1e-6,
                            max_iter: int = 500) -> float:
    """||(T_h - zeta)^{-1}|| in the discrete L2 norm, as 1 / sigma_min."""
    return resolvent_norm(DiscreteOperator(p, n_h), zeta, tol, max_iter)


def resolvent_norm(op: DiscreteOperator, zeta: complex, tol: float = 1e-6,
                   max_iter: int = 500) -> float:
    lu, piv, info = zgbtrf(op.band(zeta, scaled=True), op.KL, op.KU)
    if info > 0:
        raise NearSingular(f"zeta = {zeta} is an eigenvalue of T_h")
    rng = np.random.default_rng(12345)
    x = rng.standard_normal(op.size) + 1j * rng.standard_normal(op.size)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(max_iter):
        y, info1 = zgbtrs(lu, op.KL, op.KU, x, piv, trans=2)
        w, info2 = zgbtrs(lu, op.KL, op.KU, y, piv, trans=0)
        nw = np.linalg.norm(w)
        new = math.sqrt(nw)
        x = w / nw
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    if est > 1e6:
        raise NearSingular(f"zeta = {zeta} is within 1e-6 of the discrete spectrum")
    return est


def discrete_eigenvalue_near(p: Params, n_h: int, target_z: complex,
                             radius: Optional[float] = None) -> complex:
    """Discrete eigenvalue whose root is nearest target_z, found in a small box."""
    r = radius if radius is not None else 0.25 * p.nu
    rect = rf.Rect(target_z.real - r * 0.973, target_z.real + r, target_z.imag - r,
                   target_z.imag + r * 1.031)
    op = DiscreteOperator(p, n_h)
    zs = discrete_zeros(p, rect, n_h)
    if not zs:
        raise OracleError(f"no discrete root near {target_z}")
    z = min(zs, key=lambda lz: abs(lz.z - target_z)).z
    return complex(op.symbol(z))


# zeros closer than this are compared as one cluster (centroid, total multiplicity)
CLUSTER_RADIUS = 1e-4


def _merge_clusters(zeros):
    """A double zero of a perturbed determinant splits by sqrt(perturbation) while
    its centroid moves only by O(perturbation); compare centroids."""
    groups: List[list] = []
    for z, mult in sorted(zeros, key=lambda q: (q[0].real, q[0].imag)):
        for g in groups:
            if abs(z - g[0][0]) <= CLUSTER_RADIUS * max(1.0, abs(z)):
                g.append((z, mult))
                break
        else:
            groups.append([(z, mult)])
    out = []
    for g in groups:
        total = sum(m for _, m in g)
        out.append((sum(z * m for z, m in g) / total, total))
    return out


def _match_zeros(expected, found, tol: float):
    """Greedy nearest matching of (z, multiplicity) lists; returns (worst distance, unmatched)."""
    pool = list(found)
    worst, unmatched = 0.0, 0
    for z, mult in expected:
        if not pool:
            unmatched += 1
            continue
        best = min(pool, key=lambda q: abs(q[0] - z))
        if best[1] != mult or abs(best[0] - z) > max(tol, 1e-3):
            unmatched += 1
            continue
        worst = max(worst, abs(best[0] - z))
        pool.remove(best)
    return worst, unmatched + len(pool)


def cross_validate(p: Params, n_tiles: int = 9, n_h: int = 800, tol: float = 1e-8,
                   cfg: ShootingConfig = ShootingConfig()) -> dict:
    """Characteristic zeros vs shooting zeros (location) and finite-difference counts.

    Tiles are the rectangles of spectrum.search_tiles; tile n holds the zeros
    near the line Re z = n nu. Both oracles see every zero in a tile, including
    the mirror images -z in tile 0.
    """
    from .spectrum import compute_spectrum, search_tiles, TILE_SHIFTS

    s = compute_spectrum(p, n_max=max(5, n_tiles))
    shoot_f = lambda z: shooting_det(p, z, cfg)
    shoot_fp = lambda z: shooting_det_prime(p, z, cfg)
    op = DiscreteOperator(p, n_h)
    disc_f = lambda z: op.det_in_z(z)
    rows, ok = [], True
    for n in range(n_tiles):
        for shift in TILE_SHIFTS:
            rect = dict(search_tiles(p, n_tiles, s.window, shift))[n]
            _check_budget(p, rect, n_h)
            try:
                discrete = rf.count_zeros(disc_f, rect, quad_points=64)
                shoot = rf.isolate_zeros(shoot_f, shoot_fp, rect)
                break
            except (rf.BoundaryZero, rf.NonIntegerWinding):
                continue
        else:
            raise OracleError(f"no clean contour for tile {n}")
        expected = []
        for e in s.eigenvalues:
            for z in ((e.z, -e.z) if n == 0 and e.z != 0 else (e.z,)):
                if rect.contains(z):
                    expected.append((z, e.alg_mult * (2 if e.z == 0 else 1)))
        found = [(lz.z, lz.multiplicity) for lz in shoot]
        worst, unmatched = _match_zeros(_merge_clusters(expected), _merge_clusters(found), tol)
        count = sum(m for _, m in expected)
        row_ok = discrete == count and unmatched == 0 and worst <= tol
        ok &= row_ok
        rows.append({"tile": n, "phi_count": count, "discrete_count": discrete,
                     "shooting_count": sum(m for _, m in found),
                     "max_location_error": worst, "unmatched": unmatched, "ok": row_ok})
    return {"params": {"a": p.a, "b": p.b, "ell": p.ell, "regime": s_regime(p)},
            "ok": ok, "tiles": rows}


def s_regime(p: Params) -> str:
    from .core import classify
    return classify(p).value
