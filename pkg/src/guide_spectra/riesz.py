"""Truncated generalized-eigenfunction families, Gram matrices and Riesz conditioning.

Members are ordered by frequency: for each n the Minus mode precedes the Plus
mode (or, in the degenerate regime, the pure mode precedes its Jordan partner).
Indices k = 1..N are local to the truncation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .charfn import (Branch, ModeKind, ModeVector, SingularInnerProduct, e_mode,
                     e_tilde_mode, generalized_residual, inner_e_e, inner_e_etilde,
                     make_exceptional_generalized, make_generalized, make_pure_mode,
                     mode_d2x, mode_values, neumann_mode, norm_e_sq, boundary_residual)
from .core import Params, Regime, classify
from .spectrum import SpectrumTruncation, compute_spectrum

GAUSS_NODES = 8
MIN_PANELS = 64
SELF_CONSISTENCY = 1e-9
RESIDUAL_TOL = 1e-8


class NonPositiveDefinite(ArithmeticError):
    pass


class FamilyResidualError(ArithmeticError):
    pass


@dataclass(frozen=True)
class QuadratureGrid:
    ell: float
    panels: int
    x: np.ndarray
    w: np.ndarray


def quadrature_grid(ell: float, panels: int = MIN_PANELS, nodes: int = GAUSS_NODES) -> QuadratureGrid:
    """Composite Gauss-Legendre rule on [0, ell]."""
    t, wt = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(0.0, ell, panels + 1)
    half = np.diff(edges) / 2
    mid = (edges[:-1] + edges[1:]) / 2
    x = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    w = (half[:, None] * wt[None, :]).ravel()
    return QuadratureGrid(ell, panels, x, w)


@dataclass
class BasisFamily:
    params: Params
    members: List[ModeVector]
    freq_index: List[int]  # n with Re z closest to n nu
    norms_sq: np.ndarray
    grid: QuadratureGrid
    residuals: np.ndarray

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def c1(self) -> float:
        """Smallest C with C^-1 <= ||Phi_k||^2 <= C over the family."""
        return float(max(np.max(self.norms_sq), np.max(1 / self.norms_sq)))


def _mode_norm_sq_quad(mode: ModeVector, grid: QuadratureGrid) -> float:
    v = mode_values(mode, grid.x, grid.ell)
    return float(np.sum(grid.w * np.sum(np.abs(v) ** 2, axis=0)))


def _fit_grid(members: List[ModeVector], ell: float) -> QuadratureGrid:
    zmax = max(abs(m.z) for m in members)
    panels = max(MIN_PANELS, int(math.ceil(zmax * ell)))
    probes = sorted(members, key=lambda m: -abs(m.z))[:2]
    probes += [m for m in members if m.kind is ModeKind.GENERALIZED][-1:]
    for _ in range(8):
        g1, g2 = quadrature_grid(ell, panels), quadrature_grid(ell, 2 * panels)
        ok = True
        for m in probes:
            n1, n2 = _mode_norm_sq_quad(m, g1), _mode_norm_sq_quad(m, g2)
            if abs(n1 - n2) > SELF_CONSISTENCY * n2:
                ok = False
        if ok:
            return g1
        panels *= 2
    raise FamilyResidualError("quadrature grid did not reach self-consistency")


def _eigen_residual(p: Params, mode: ModeVector, partner: Optional[ModeVector]) -> float:
    """Relative size of (T - z^2) Phi (minus the partner for Jordan modes) plus boundary terms."""
    x = np.linspace(0.0, p.ell, 33)
    z2 = mode.z * mode.z
    lhs = -mode_d2x(mode, x, p.ell) - z2 * mode_values(mode, x, p.ell)
    if partner is not None:
        lhs = lhs - mode_values(partner, x, p.ell)
    scale = (abs(mode.z) + 1) * float(np.max(np.abs(mode_values(mode, x, p.ell)))) + 1e-300
    interior = float(np.max(np.abs(lhs))) / (scale * (abs(mode.z) + 1))
    return max(interior, boundary_residual(p, mode) / scale)


def _modes_for(p: Params, e, regime: Regime) -> List[ModeVector]:
    if e.z == 0:
        return [neumann_mode(0j)]
    br = Branch(e.branch)
    if regime is Regime.DEGENERATE:
        return [make_pure_mode(p, Branch.MINUS, e.z), make_generalized(p, e.z)]
    if p.b == 0 and br is Branch.MINUS:
        return [neumann_mode(e.z)]
    first = make_pure_mode(p, br, e.z)
    if e.alg_mult == 2:
        return [first, make_exceptional_generalized(p, br, e.z)]
    return [first]


def build_family(s: SpectrumTruncation, n_members: int) -> BasisFamily:
    """The first n_members generalized eigenfunctions, ordered by frequency."""
    p = s.params
    if n_members <= 0 or n_members % 2:
        raise ValueError("N must be a positive even number")
    if p.a == 0:
        raise ValueError("the family is built for a != 0")
    if n_members // 2 > s.n_max:
        raise ValueError(f"N/2 = {n_members // 2} exceeds the certified strips ({s.n_max})")
    regime = classify(p)
    nu = p.nu
    order = {"Minus": 0, "Plus": 1}
    eigs = sorted(s.eigenvalues, key=lambda e: (round(e.z.real / nu), order[e.branch],
                                               e.z.real, e.z.imag))
    members: List[ModeVector] = []
    residuals: List[float] = []
    for e in eigs:
        modes = _modes_for(p, e, regime)
        for i, m in enumerate(modes):
            partner = modes[0] if i == 1 else None
            r = _eigen_residual(p, m, partner)
            if m.kind is ModeKind.GENERALIZED:
                r = max(r, generalized_residual(p, m) / max(1.0, float(np.linalg.norm(m.coeff))))
            members.append(m)
            residuals.append(r)
        if len(members) >= n_members:
            break
    if len(members) < n_members:
        raise ValueError("not enough eigenvalues in the truncation")
    members, residuals = members[:n_members], residuals[:n_members]
    bad = [k for k, r in enumerate(residuals) if r > RESIDUAL_TOL]
    if bad:
        raise FamilyResidualError(f"members {bad[:5]} fail the eigen-equation check")
    grid = _fit_grid(members, p.ell)
    norms = np.array([_member_inner(m, m, p.ell, grid, {}).real for m in members])
    freq = [int(round(m.z.real / nu)) for m in members]
    return BasisFamily(p, members, freq, norms, grid, np.array(residuals))


def family_for(p: Params, n_members: int) -> BasisFamily:
    s = compute_spectrum(p, n_max=max(5, n_members // 2 + 2))
    return build_family(s, n_members)


def reference_family(p: Params, n_members: int, grid: Optional[QuadratureGrid] = None) -> BasisFamily:
    """Unperturbed family A e_{n nu}; with a = b = 0 the components decouple."""
    nu, ell = p.nu, p.ell
    regime = classify(p)
    if regime is Regime.DECOUPLED:
        vecs = [np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)]
    elif regime is Regime.DEGENERATE:
        vecs = [np.array([p.a / 2, -p.b], dtype=complex), np.array([1j * ell / 2, 0])]
    else:
        vecs = [_ref_vector(p, Branch.MINUS), _ref_vector(p, Branch.PLUS)]
    members = []
    for k in range(n_members):
        n = k // 2
        members.append(ModeVector(ModeKind.PURE, complex(n * nu), vecs[k % 2]))
    grid = grid or quadrature_grid(ell, max(MIN_PANELS, int(math.ceil(n_members / 2 * nu * ell))))
    norms = np.array([_member_inner(m, m, ell, grid, {}).real for m in members])
    return BasisFamily(p, members, [k // 2 for k in range(n_members)], norms, grid,
                       np.zeros(n_members))


def _ref_vector(p: Params, branch: Branch) -> np.ndarray:
    if p.b == 0 and branch is Branch.MINUS:
        return np.array([0, 1], dtype=complex)
    return make_pure_mode(p, branch, 1.0).coeff


def _terms(m: ModeVector):
    if m.kind is ModeKind.PURE:
        return [(m.coeff, "e")]
    out = [(m.coeff, "et")]
    if np.any(m.coeff_e != 0):
        out.append((m.coeff_e, "e"))
    return out


def _samples(z: complex, kind: str, grid: QuadratureGrid, cache: Dict) -> np.ndarray:
    key = (z, kind, grid.panels)
    if key not in cache:
        f = e_mode if kind == "e" else e_tilde_mode
        cache[key] = f(z, grid.x, grid.ell)
    return cache[key]


def _scalar_inner(z: complex, kz: str, zeta: complex, kzeta: str, ell: float,
                  grid: QuadratureGrid, cache: Dict) -> complex:
    try:
        if kz == "e" and kzeta == "e":
            if z == zeta:
                return complex(norm_e_sq(z, ell))
            return inner_e_e(z, zeta, ell)
        if kz == "e" and kzeta == "et":
            return inner_e_etilde(z, zeta, ell)
        if kz == "et" and kzeta == "e":
            return inner_e_etilde(zeta, z, ell).conjugate()
    except SingularInnerProduct:
        pass
    u = _samples(z, kz, grid, cache)
    v = _samples(zeta, kzeta, grid, cache)
    return complex(np.sum(grid.w * u * np.conj(v)))


def _member_inner(mj: ModeVector, mk: ModeVector, ell: float, grid: QuadratureGrid,
                  cache: Dict) -> complex:
    total = 0j
    for cj, kj in _terms(mj):
        for ck, kk in _terms(mk):
            total += complex(np.vdot(ck, cj)) * _scalar_inner(mj.z, kj, mk.z, kk, ell, grid, cache)
    return total


def gram_matrix(f: BasisFamily, normalized: bool = True) -> np.ndarray:
    """G[j, k] = <Phi_j, Phi_k> from closed forms (quadrature only for e~-e~ terms and singular pairs)."""
    n = f.size
    g = np.empty((n, n), dtype=complex)
    cache: Dict = {}
    for j in range(n):
        g[j, j] = f.norms_sq[j]
        for k in range(j + 1, n):
            v = _member_inner(f.members[j], f.members[k], f.params.ell, f.grid, cache)
            g[j, k] = v
            g[k, j] = v.conjugate()
    if normalized:
        s = 1 / np.sqrt(f.norms_sq)
        g = g * s[:, None] * s[None, :]
        np.fill_diagonal(g, 1.0)
    return g


def gram_matrix_quadrature(f: BasisFamily, grid: QuadratureGrid, normalized: bool = False) -> np.ndarray:
    """Same matrix assembled purely from samples on `grid`."""
    vals = np.stack([mode_values(m, grid.x, grid.ell) for m in f.members])  # (N, 2, q)
    flat = (vals * np.sqrt(grid.w)).reshape(f.size, -1)
    g = flat @ flat.conj().T
    if normalized:
        d = np.sqrt(np.real(np.diag(g)))
        g = g / d[:, None] / d[None, :]
    return g


def _power(mat: np.ndarray, tol: float = 1e-13, max_iter: int = 200000) -> Tuple[float, np.ndarray]:
    rng = np.random.default_rng(0)
    x = rng.standard_normal(mat.shape[0]) + 1j * rng.standard_normal(mat.shape[0])
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = mat @ x
        new = float(np.vdot(x, y).real)
        ny = np.linalg.norm(y)
        if ny == 0:
            return 0.0, x
        x = y / ny
        if abs(new - lam) <= tol * max(abs(new), 1e-300):
            return new, x
        lam = new
    return lam, x


def riesz_condition(gram: np.ndarray) -> Tuple[float, float]:
    """(lambda_min, lambda_max) of a Hermitian Gram matrix by power iteration."""
    lam_max, _ = _power(gram)
    shifted = lam_max * np.eye(gram.shape[0]) - gram
    top, _ = _power(shifted)
    lam_min = lam_max - top
    if not lam_min > 1e-14 * lam_max:
        raise NonPositiveDefinite(f"lambda_min = {lam_min} is not positive")
    return lam_min, lam_max


@dataclass(frozen=True)
class Expansion:
    coeffs: np.ndarray
    residual: float  # ||sum c_k Phi_k - target|| / ||target||


def family_samples(f: BasisFamily) -> np.ndarray:
    """(N, 2, q) member values on the family's quadrature grid."""
    return np.stack([mode_values(m, f.grid.x, f.grid.ell) for m in f.members])


def expand(f: BasisFamily, target: np.ndarray, gram: Optional[np.ndarray] = None) -> Expansion:
    """Least-squares coefficients of target (shape (2, q) on f.grid) in the raw family."""
    g = gram if gram is not None else gram_matrix(f, normalized=False)
    vals = family_samples(f)
    w = f.grid.w
    rhs = np.einsum("cq,kcq->k", target * w, vals.conj())  # <target, Phi_k>
    try:
        # sum_k c_k <Phi_k, Phi_j> = <target, Phi_j>, i.e. conj(G) c = rhs
        c = cho_solve(cho_factor(np.conj(g)), rhs)
    except np.linalg.LinAlgError as exc:
        raise NonPositiveDefinite(str(exc)) from exc
    recon = np.einsum("k,kcq->cq", c, vals)
    err = math.sqrt(float(np.sum(w * np.sum(np.abs(recon - target) ** 2, axis=0))))
    tn = math.sqrt(float(np.sum(w * np.sum(np.abs(target) ** 2, axis=0))))
    return Expansion(c, err / tn if tn > 0 else err)


def reference_distance(f: BasisFamily) -> np.ndarray:
    """||Phi_k - Phi_k^0||^2 for k = 1..N, the reference built at the nearest n nu."""
    p = f.params
    ref = reference_family(p, 2 * (max(f.freq_index) + 1), f.grid)
    regime = classify(p)
    out = np.empty(f.size)
    for k, m in enumerate(f.members):
        n = f.freq_index[k]
        if regime is Regime.DEGENERATE:
            slot = 1 if m.kind is ModeKind.GENERALIZED else 0
        elif m.z == 0 or (p.b == 0 and m.branch is Branch.MINUS):
            slot = 0
        else:
            slot = 0 if m.branch is Branch.MINUS else 1
        r = ref.members[2 * n + slot]
        d = mode_values(m, f.grid.x, p.ell) - mode_values(r, f.grid.x, p.ell)
        out[k] = float(np.sum(f.grid.w * np.sum(np.abs(d) ** 2, axis=0)))
    return out


def almost_orthogonality_constant(f: BasisFamily, n_min: int) -> float:
    """max |G_jk| n |n' - n| / (||Phi_j|| ||Phi_k||) over members with n, n' >= n_min, n != n'."""
    g = gram_matrix(f, normalized=True)
    idx = np.array(f.freq_index)
    best = 0.0
    for j in range(f.size):
        for k in range(f.size):
            nj, nk = idx[j], idx[k]
            if nj >= n_min and nk > nj:
                best = max(best, abs(g[j, k]) * nj * (nk - nj))
    return best
