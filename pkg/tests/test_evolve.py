import cmath
import math

import numpy as np
import pytest

from guide_spectra import evolve as ev
from guide_spectra import oracle as orc
from guide_spectra.core import make_params
from guide_spectra.riesz import reference_family
from guide_spectra.spectrum import compute_spectrum

PI = math.pi


def modal_run(p, n_h, dt, steps, seed=0, record_every=1):
    op = orc.DiscreteOperator(p, n_h)
    s = compute_spectrum(p, 6)
    u = ev.random_modal_data(p, op, s.eigenvalues, seed)
    state = ev.new_state(op, u)
    ev.CrankNicolson(op, dt).run(state, steps, record_every)
    return state


def test_decoupled_eigenmode_phase():
    p = make_params(0, 0, PI)
    op = orc.DiscreteOperator(p, 800)
    u = ev.sample_mode(op, reference_family(p, 4).members[2])
    u /= math.sqrt(ev.energy(op, u))
    state = ev.new_state(op, u)
    dt = 1e-2
    ev.CrankNicolson(op, dt).run(state, 10)
    lam_h = op.symbol(1.0)
    # CN advances an eigenmode by the Cayley factor, e^{-i lam dt} + O(dt^3) per step
    cayley = (1 - 0.5j * dt * lam_h) / (1 + 0.5j * dt * lam_h)
    assert abs(cayley - cmath.exp(-1j * lam_h * dt)) < dt ** 3
    ratio = state.u[0] / u[0]
    assert ratio == pytest.approx(cayley ** 10, abs=1e-9)
    assert state.trace[-1].energy == pytest.approx(1, abs=1e-12)


def test_selfadjoint_norm_conserved():
    p = make_params(0, 1, PI)
    state = modal_run(p, 200, 0.01, 10_000, record_every=100)
    e = np.array([q.energy for q in state.trace])
    assert np.max(np.abs(e - e[0])) <= 1e-12


def test_energy_monotone_dissipative():
    state = modal_run(make_params(1, 0.3, PI), 400, 0.01, 2000)
    assert ev.energy_monotone(state.trace)
    assert state.trace[-1].energy < state.trace[0].energy


def test_balance_residual_selfadjoint():
    state = modal_run(make_params(0, 1, PI), 400, 0.01, 500)
    assert ev.energy_balance_residual(state.trace, 0.0) <= 1e-10


def test_balance_residual_second_order():
    p = make_params(1, 0.3, PI)
    t_end = 1.0
    r1 = ev.energy_balance_residual(modal_run(p, 400, 1e-3, int(t_end / 1e-3)).trace, p.a)
    r2 = ev.energy_balance_residual(modal_run(p, 400, 5e-4, int(t_end / 5e-4)).trace, p.a)
    assert r1 / r2 >= 3


def test_midpoint_balance_is_exact():
    p = make_params(2, 1, PI)
    state = modal_run(p, 400, 0.01, 300)
    assert ev.energy_balance_residual(state.trace, p.a, rule="midpoint") < 1e-10
    assert math.isfinite(ev.energy_balance_residual(state.trace, p.a))


def test_slowest_eigenmode_rate():
    p = make_params(1, 0.3, PI)
    op = orc.DiscreteOperator(p, 800)
    s = compute_spectrum(p, 6)
    slow = min(s.eigenvalues, key=lambda e: -e.lam.imag)
    u = ev.eigenmode_data(p, op, slow.z, slow.branch)
    state = ev.new_state(op, u)
    gamma = -slow.lam.imag
    t_end = 4 / (2 * gamma)
    ev.CrankNicolson(op, 0.05).run(state, int(t_end / 0.05), record_every=5)
    rate = ev.fit_decay_rate(state.trace, 0.0)
    assert rate == pytest.approx(2 * gamma, rel=0.05)


def test_no_decay_raises():
    state = modal_run(make_params(0, 1, PI), 200, 0.05, 200)
    with pytest.raises(ev.InsufficientDecay):
        ev.fit_decay_rate(state.trace, 0.0)


def test_jordan_windowed_rates_increase():
    p = make_params(2, 1, PI)
    op = orc.DiscreteOperator(p, 400)
    s = compute_spectrum(p, 6)
    slow = min(s.eigenvalues, key=lambda e: -e.lam.imag)
    assert slow.alg_mult == 2
    g = ev.sample_mode(op, ev.jordan_partner(p, slow.z, slow.branch))
    state = ev.new_state(op, g / math.sqrt(ev.energy(op, g)))
    gamma = -orc.discrete_eigenvalue_near(p, 400, slow.z).imag
    ev.CrankNicolson(op, 0.02).run(state, int(12 / gamma / 0.02), record_every=10)
    rates = [r for _, r in ev.windowed_rates(state.trace, 2 / gamma)]
    tail = rates[1:]
    assert all(x < y for x, y in zip(tail, tail[1:]))
    assert tail[-1] < 2 * gamma
    fitted = ev.fit_decay_rate(state.trace, 4 / gamma, power=2.0)
    assert fitted == pytest.approx(2 * gamma, rel=0.05)


def test_trace_csv_header():
    state = modal_run(make_params(1, 0.3, PI), 200, 0.1, 3)
    lines = ev.trace_csv(state.trace).splitlines()
    assert lines[0] == "t,E,boundary_term" and len(lines) == 5


def test_bad_initial_shape():
    op = orc.DiscreteOperator(make_params(1, 0.3, PI), 200)
    with pytest.raises(ValueError):
        ev.new_state(op, np.zeros(3))
