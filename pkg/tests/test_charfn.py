import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from guide_spectra.charfn import (Branch, SingularInnerProduct, boundary_residual, e_mode,
                                  e_tilde_mode, eta, generalized_residual, inner_e_e,
                                  inner_e_etilde, make_generalized, make_pure_mode, mode_d2x,
                                  mode_values, norm_e_sq, phi, phi_prime, phi_scaled)
from guide_spectra.core import make_params, mu_pair
from guide_spectra.oracle import shooting_zeros
from guide_spectra.rootfind import Rect

PI = math.pi
P0 = make_params(0, 0, PI)
P1 = make_params(1, 0.3, PI)


def quad(f, ell, n=2000):
    # composite Gauss-Legendre, n panels of 4 nodes
    xg, wg = np.polynomial.legendre.leggauss(4)
    edges = np.linspace(0, ell, n + 1)
    mid, half = (edges[1:] + edges[:-1]) / 2, (edges[1:] - edges[:-1]) / 2
    x = (mid[:, None] + half[:, None] * xg).ravel()
    w = (half[:, None] * wg).ravel()
    return np.sum(w * f(x))


def test_phi_decoupled_values():
    assert abs(phi(P0, Branch.MINUS, 1.0)) < 1e-14
    assert phi(P0, Branch.PLUS, 0.5) == pytest.approx(-1.0)


def test_phi_vanishes_at_shooting_zero():
    zs = shooting_zeros(P1, Rect(1 + 1e-3, 2 - 1e-3, -1.5, 0.5))
    assert len(zs) == 2
    minus = min(zs, key=lambda q: abs(phi(P1, Branch.MINUS, q.z)))
    assert abs(phi(P1, Branch.MINUS, minus.z)) < 1e-10


def test_phi_prime_examples():
    assert phi_prime(P0, Branch.MINUS, 1.0) == pytest.approx(2j * PI)
    for br in Branch:
        mu = mu_pair(P1).mu_minus if br is Branch.MINUS else mu_pair(P1).mu_plus
        assert phi_prime(P1, br, mu) == pytest.approx(cmath.exp(2j * mu * PI) - 1)


@settings(max_examples=30)
@given(st.floats(0, 2 * PI), st.floats(0, 0.99))
def test_phi_prime_matches_finite_difference(angle, r):
    z = 3 + r * cmath.exp(1j * angle)
    h = 1e-6
    fd = (phi(P1, Branch.PLUS, z + h) - phi(P1, Branch.PLUS, z - h)) / (2 * h)
    assert phi_prime(P1, Branch.PLUS, z) == pytest.approx(fd, rel=1e-7, abs=1e-7)


def test_phi_rescaling_is_consistent():
    z = 4 - 20j
    ratio = phi(P1, Branch.MINUS, z) / phi_scaled(P1, Branch.MINUS, z)
    assert abs(ratio) > 0
    z = 4 - 0.5j
    assert phi(P1, Branch.MINUS, z) == pytest.approx(
        phi_scaled(P1, Branch.MINUS, z) * cmath.exp(1j * z * PI))


@given(st.floats(0.1, 5), st.floats(-2, 0))
def test_reflection_law(x, y):
    z = complex(x, y)
    for br in Branch:
        assert phi(P1, br, -z) == pytest.approx(cmath.exp(-2j * z * PI) * phi(P1, br, z),
                                                rel=1e-9, abs=1e-9)


def test_eta_limits():
    assert eta(P0, Branch.MINUS, 1.7 + 0.3j) == pytest.approx(0.5j * PI)
    big = eta(P1, Branch.MINUS, 1e6)
    assert big == pytest.approx(0.5j * PI, abs=1e-6)


def test_eta_at_degenerate_root():
    from guide_spectra.spectrum import compute_spectrum
    p = make_params(2, 1, PI)
    e = next(e for e in compute_spectrum(p, 8).eigenvalues if e.strip == 5)
    v = eta(p, Branch.MINUS, e.z)
    assert v != 0 and abs(v - 0.5j * PI) < 0.2


def test_e_mode_at_right_end():
    z = 1.3
    assert e_mode(z, PI, PI) == pytest.approx(2 * cmath.exp(1j * z * PI))


def test_e_mode_matches_rk4_backwards():
    z, ell = 1 + 0.1j, PI
    steps = 3000
    h = -(ell - ell / 3) / steps
    y = np.array([2 * cmath.exp(1j * z * ell), 0j])  # value, derivative at x = ell
    f = lambda v: np.array([v[1], -z * z * v[0]])
    for _ in range(steps):
        k1 = f(y)
        k2 = f(y + h / 2 * k1)
        k3 = f(y + h / 2 * k2)
        k4 = f(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    assert e_mode(z, ell / 3, ell) == pytest.approx(y[0], rel=1e-10)


def test_inner_e_e_vs_quadrature():
    z, zeta = 1 + 0.2j, 2 - 0.1j
    ref = quad(lambda x: e_mode(z, x, PI) * np.conj(e_mode(zeta, x, PI)), PI)
    assert inner_e_e(z, zeta, PI) == pytest.approx(ref, rel=1e-12)


def test_norm_tends_to_two_ell():
    assert norm_e_sq(1e4 + 1e-9j, PI) == pytest.approx(2 * PI, rel=1e-4)
    z = 0.7 - 0.3j
    ref = quad(lambda x: np.abs(e_mode(z, x, PI)) ** 2, PI)
    assert norm_e_sq(z, PI) == pytest.approx(ref.real, rel=1e-12)


def test_inner_e_etilde_vs_quadrature():
    z, zeta = 3 + 0.1j, 5 - 0.05j
    ref = quad(lambda x: e_mode(z, x, PI) * np.conj(e_tilde_mode(zeta, x, PI)), PI)
    assert inner_e_etilde(z, zeta, PI) == pytest.approx(ref, rel=1e-10)


def test_inner_guards_removable_singularity():
    with pytest.raises(SingularInnerProduct):
        inner_e_etilde(2 + 0.1j, 2 - 0.1j, PI)
    with pytest.raises(SingularInnerProduct):
        inner_e_e(2 + 0.1j, -2 + 0.1j, PI)


def test_pure_mode_b_zero():
    p = make_params(1, 0, PI)
    with pytest.raises(ValueError):
        make_pure_mode(p, Branch.MINUS, 1.0)
    m = make_pure_mode(p, Branch.PLUS, 1.0)
    assert np.allclose(m.coeff / m.coeff[0], [1, 0])


def test_modes_satisfy_the_equation_at_roots():
    from guide_spectra.spectrum import compute_spectrum
    s = compute_spectrum(P1, 6)
    x = np.linspace(0, PI, 7)
    for e in s.eigenvalues:
        m = make_pure_mode(P1, Branch(e.branch), e.z)
        assert boundary_residual(P1, m) < 1e-9
        lhs = -mode_d2x(m, x, PI)
        assert np.allclose(lhs, e.lam * mode_values(m, x, PI), atol=1e-9 * abs(e.lam) + 1e-12)


def test_generalized_mode_degenerate():
    p = make_params(2, 1, PI)
    m = make_generalized(p, 400.0 + 0.0j)
    assert m.coeff_e[0] == pytest.approx(0.5j * PI, abs=1e-3)
    from guide_spectra.spectrum import compute_spectrum
    e = next(e for e in compute_spectrum(p, 6).eigenvalues if e.strip == 3)
    g = make_generalized(p, e.z)
    assert generalized_residual(p, g) < 1e-12
    assert boundary_residual(p, g) < 1e-9
