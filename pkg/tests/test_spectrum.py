import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from guide_spectra import spectrum as sp
from guide_spectra.charfn import Branch, phi
from guide_spectra.core import make_params, mu_pair

PI = math.pi


@pytest.fixture(scope="module")
def decoupled():
    return sp.compute_spectrum(make_params(0, 0, PI), n_max=10)


@pytest.fixture(scope="module")
def real_distinct():
    return sp.compute_spectrum(make_params(1, 0.3, PI), n_max=40)


def test_decoupled_integers_squared(decoupled):
    lams = sorted((e.lam.real, e.alg_mult) for e in decoupled.eigenvalues)
    assert lams == [(float(n * n), 2) for n in range(11)]


def test_each_root_is_a_zero(real_distinct):
    p = real_distinct.params
    for e in real_distinct.eigenvalues:
        assert abs(phi(p, Branch(e.branch), e.z)) < 1e-9 * max(1, abs(e.z))
        assert e.lam == pytest.approx(e.z * e.z)
        assert e.lam.imag < 0


def test_two_roots_per_strip(real_distinct):
    for row in real_distinct.certificate:
        assert (row.minus, row.plus) == (1, 1)


def test_spectral_gap_examples(real_distinct):
    g = sp.spectral_gap(real_distinct)
    assert 0 < g <= 0.2 / PI + 0.05
    s = sp.compute_spectrum(make_params(2, 1, PI), n_max=20)
    assert sp.spectral_gap(s) > 0
    with pytest.raises(ValueError):
        sp.spectral_gap(sp.compute_spectrum(make_params(0, 1, PI), n_max=5))


def test_weyl_count_examples(decoupled):
    assert sp.weyl_count(decoupled, 10) == 8
    assert sp.weyl_count(decoupled, 0.5) == 2
    s = sp.compute_spectrum(make_params(1, 1, PI), n_max=25)
    assert 39 <= sp.weyl_count(s, 400) <= 43
    with pytest.raises(sp.OutOfCertifiedRange):
        sp.weyl_count(decoupled, 101)


def test_asymptotics_examples(decoupled, real_distinct):
    assert all(r.residual == 0 for r in sp.asymptotics_residual(decoupled, 1))
    rows = [r for r in sp.asymptotics_residual(real_distinct, 10) if r.branch == "Plus"]
    at10 = rows[0].scaled
    assert max(r.scaled for r in rows) <= 2 * at10
    z30 = next(r for r in rows if r.n == 30)
    assert abs(z30.z - (30 - 0.9j / (30 * PI))) * 900 <= 2 * at10
    deg = sp.compute_spectrum(make_params(2, 1, PI), n_max=40)
    lam_rows = [r.lambda_scaled for r in sp.asymptotics_residual(deg, 10)]
    assert max(lam_rows) <= 2 * lam_rows[0]


def test_dist_to_sigma_examples(decoupled, real_distinct):
    assert sp.dist_to_sigma(decoupled, -1) == pytest.approx(1)
    assert sp.dist_to_sigma(decoupled, 2 + 1j) == pytest.approx(1)
    assert sp.dist_to_sigma(real_distinct, 1) > 0


def test_s_bracket_m():
    assert sp.s_bracket_m(0.5, 2) == 0.25
    assert sp.s_bracket_m(2, 2) == 2
    assert all(sp.s_bracket_m(1, m) == 1 for m in range(1, 5))


def test_negative_damping_is_conjugate():
    s = sp.compute_spectrum(make_params(1, 0.3, PI), n_max=8)
    t = sp.compute_spectrum(make_params(-1, 0.3, PI), n_max=8)
    a = np.sort_complex([e.lam for e in s.eigenvalues])
    b = np.sort_complex([e.lam.conjugate() for e in t.eigenvalues])
    assert np.allclose(a, b, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 3), st.floats(-3, 3), st.sampled_from([1.0, PI, 2.5]))
def test_spectrum_properties(a, b, ell):
    p = make_params(a, b, ell)
    s = sp.compute_spectrum(p, n_max=6)
    assert sum(e.alg_mult for e in s.eigenvalues) >= 2 * 6
    for e in s.eigenvalues:
        assert e.lam.imag <= 1e-9
        assert e.alg_mult in (1, 2) and e.geo_mult == 1
    limit = 2 * min(mu_pair(p).mu_minus.real, mu_pair(p).mu_plus.real) / ell
    # the gap scales like b^2, below rounding for tiny b
    if abs(b) >= 1e-3:
        assert 0 < sp.spectral_gap(s) <= limit + 1e-12


def test_to_dict_roundtrip(real_distinct):
    d = sp.spectrum_to_dict(real_distinct)
    assert len(d["eigenvalues"]) == len(real_distinct.eigenvalues)
    assert d["gap"]["gamma1"] > 0
