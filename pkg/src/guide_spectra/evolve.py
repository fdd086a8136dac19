"""Crank-Nicolson time stepping of i u_t = T_h u and energy diagnostics.

The energy is the trapezoid-weighted discrete norm E = sum_j w_j |U_j|^2. With
that weight the scheme satisfies the exact discrete balance
E(t + dt) - E(t) = -2 a dt |u_mid(0)|^2, where u_mid is the average of the two
time levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg.lapack import zgbtrf, zgbtrs

from .charfn import (Branch, ModeVector, make_exceptional_generalized, make_generalized,
                     make_pure_mode, mode_values, neumann_mode)
from .core import Params, Regime, classify
from .oracle import DiscreteOperator


class EvolutionError(RuntimeError):
    pass


class InsufficientDecay(EvolutionError):
    pass


@dataclass(frozen=True)
class TracePoint:
    t: float
    energy: float
    boundary_term: float  # 2 a |u(t, 0)|^2
    u0: complex


@dataclass
class EvolutionState:
    u: np.ndarray  # interleaved (u_0, v_0, u_1, v_1, ...)
    t: float = 0.0
    trace: List[TracePoint] = field(default_factory=list)

    def grid_values(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.u[0::2], self.u[1::2]


def energy(op: DiscreteOperator, u: np.ndarray) -> float:
    return float(np.sum(op.weights * np.abs(u) ** 2))


def _record(state: EvolutionState, op: DiscreteOperator):
    u0 = complex(state.u[0])
    state.trace.append(TracePoint(state.t, energy(op, state.u),
                                  2 * op.params.a * abs(u0) ** 2, u0))


def new_state(op: DiscreteOperator, u: np.ndarray) -> EvolutionState:
    u = np.asarray(u, dtype=complex)
    if u.shape != (op.size,):
        raise ValueError(f"initial data must have shape ({op.size},)")
    s = EvolutionState(u.copy())
    _record(s, op)
    return s


class CrankNicolson:
    """(I + i dt/2 T_h) U+ = (I - i dt/2 T_h) U with a factorization reused across steps."""

    def __init__(self, op: DiscreteOperator, dt: float):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.op, self.dt = op, dt
        tau = dt / 2
        # I + i tau T = i tau (T - i / tau)
        ab = op.band(1j / tau) * (1j * tau)
        self.lu, self.piv, info = zgbtrf(ab, op.KL, op.KU)
        if info != 0:
            raise EvolutionError(f"Crank-Nicolson matrix is singular (info = {info})")

    def step(self, state: EvolutionState, record: bool = True) -> EvolutionState:
        rhs = state.u - 0.5j * self.dt * self.op.matvec(state.u)
        x, info = zgbtrs(self.lu, self.op.KL, self.op.KU, rhs, self.piv)
        if info != 0:
            raise EvolutionError(f"banded solve failed (info = {info})")
        state.u = x
        state.t += self.dt
        if record:
            _record(state, self.op)
        return state

    def run(self, state: EvolutionState, steps: int, record_every: int = 1) -> EvolutionState:
        for k in range(1, steps + 1):
            self.step(state, record=(k % record_every == 0))
        return state


def step_crank_nicolson(state: EvolutionState, dt: float, op: DiscreteOperator) -> EvolutionState:
    """One step; for many steps build a CrankNicolson once instead."""
    return CrankNicolson(op, dt).step(state)


def energy_monotone(trace: Sequence[TracePoint], slack: float = 1e-12) -> bool:
    return all(q.energy <= p.energy * (1 + slack) for p, q in zip(trace, trace[1:]))


def energy_balance_residual(trace: Sequence[TracePoint], a: float, rule: str = "trapezoid") -> float:
    """max_n |(E_{n+1} - E_n)/dt + 2a |u(0)|^2| / max(E, 1e-30) over a uniform history.

    rule="trapezoid" averages the boundary term over the two time levels, a
    second-order quadrature of the continuous balance. rule="midpoint" uses the
    averaged state, for which the scheme's identity is exact.
    """
    if len(trace) < 2:
        raise ValueError("need at least two trace points")
    ts = np.array([p.t for p in trace])
    dts = np.diff(ts)
    if np.max(np.abs(dts - dts[0])) > 1e-9 * dts[0]:
        raise ValueError("trace must have a uniform time step")
    e = np.array([p.energy for p in trace])
    u0 = np.array([p.u0 for p in trace])
    if rule == "trapezoid":
        bterm = a * (np.abs(u0[:-1]) ** 2 + np.abs(u0[1:]) ** 2)
    elif rule == "midpoint":
        bterm = 2 * a * np.abs((u0[:-1] + u0[1:]) / 2) ** 2
    else:
        raise ValueError(f"unknown rule {rule!r}")
    res = np.abs(np.diff(e) / dts + bterm) / np.maximum(e[:-1], 1e-30)
    return float(np.max(res))


def fit_decay_rate(trace: Sequence[TracePoint], t_min: float, t_max: Optional[float] = None,
                   min_efoldings: float = 3.0, power: float = 0.0) -> float:
    """Least-squares rate rho in E ~ t^power exp(-rho t) over [t_min, t_max].

    A slowest eigenvalue with a Jordan block of size m gives power = 2(m - 1).
    """
    t = np.array([p.t for p in trace])
    e = np.array([p.energy for p in trace])
    sel = t >= t_min
    if t_max is not None:
        sel &= t <= t_max
    if sel.sum() < 3 or np.any(e[sel] <= 0):
        raise InsufficientDecay("not enough positive samples in the fit window")
    ts, le = t[sel], np.log(e[sel])
    if le[0] - le[-1] < min_efoldings:
        raise InsufficientDecay(f"energy drops by only {le[0] - le[-1]:.3g} e-foldings")
    if power:
        if ts[0] <= 0:
            raise ValueError("t_min must be positive when power != 0")
        le = le - power * np.log(ts)
    slope = np.polyfit(ts, le, 1)[0]
    return float(-slope)


def windowed_rates(trace: Sequence[TracePoint], width: float) -> List[Tuple[float, float]]:
    """(window midpoint, rate) over consecutive windows of the given width."""
    t = np.array([p.t for p in trace])
    le = np.log(np.array([p.energy for p in trace]))
    out = []
    start = t[0]
    while start + width <= t[-1] + 1e-12:
        sel = (t >= start) & (t <= start + width)
        if sel.sum() >= 3:
            out.append((start + width / 2, float(-np.polyfit(t[sel], le[sel], 1)[0])))
        start += width
    return out


def sample_mode(op: DiscreteOperator, mode: ModeVector) -> np.ndarray:
    """Interleave a continuum mode's values at the grid nodes."""
    v = mode_values(mode, op.x, op.params.ell)
    out = np.empty(op.size, dtype=complex)
    out[0::2], out[1::2] = v[0], v[1]
    return out


def eigenmode_data(p: Params, op: DiscreteOperator, z: complex, branch: str) -> np.ndarray:
    if classify(p) is Regime.DECOUPLED:
        raise ValueError("use explicit components in the decoupled case")
    br = Branch(branch)
    if z == 0 or (p.b == 0 and br is Branch.MINUS):
        mode = neumann_mode(z)
    else:
        mode = make_pure_mode(p, br, z)
    u = sample_mode(op, mode)
    return u / math.sqrt(energy(op, u))


def jordan_partner(p: Params, z: complex, branch: str) -> ModeVector:
    if classify(p) is Regime.DEGENERATE:
        return make_generalized(p, z)
    return make_exceptional_generalized(p, Branch(branch), z)


def random_modal_data(p: Params, op: DiscreteOperator, eigenvalues, seed: int,
                      max_strip: int = 3) -> np.ndarray:
    """Random complex combination of the eigenmodes with strip <= max_strip (unit energy)."""
    rng = np.random.default_rng(seed)
    u = np.zeros(op.size, dtype=complex)
    for e in eigenvalues:
        if e.strip > max_strip:
            continue
        c = complex(rng.standard_normal(), rng.standard_normal())
        u += c * eigenmode_data(p, op, e.z, e.branch)
        if e.alg_mult == 2 and e.z != 0:
            c = complex(rng.standard_normal(), rng.standard_normal())
            g = sample_mode(op, jordan_partner(p, e.z, e.branch))
            u += c * g / math.sqrt(energy(op, g))
    return u / math.sqrt(energy(op, u))


def trace_csv(trace: Sequence[TracePoint]) -> str:
    lines = ["t,E,boundary_term"]
    for q in trace:
        lines.append(f"{q.t!r},{q.energy!r},{q.boundary_term!r}")
    return "\n".join(lines) + "\n"
