import math

import pytest

from guide_spectra import exceptional as ex
from guide_spectra.charfn import Branch, phi, phi_prime
from guide_spectra.core import make_params
from guide_spectra.spectrum import compute_spectrum

PI = math.pi


@pytest.mark.parametrize("k", range(4))
def test_theta_point_certificates(k):
    t = ex.theta_point(k, PI)
    assert t.a_k ** 2 < 4 * t.b_k ** 2
    assert t.phi_abs < 1e-10 and t.phi_prime_abs < 1e-10
    assert max(t.res_sin, t.res_cosh, t.res_sinh) < 1e-10


def test_theta_point_scales_with_ell():
    t1, t2 = ex.theta_point(1, 1.0), ex.theta_point(1, 2.0)
    assert t1.z == pytest.approx(2 * t2.z)
    assert t2.phi_abs < 1e-10


def test_line_zero_neumann():
    assert ex.line_zero(make_params(1, 0, PI), 2) == 2


def test_line_zero_generic_absent():
    assert ex.line_zero(make_params(1, 0.4, PI), 1) is None


def test_line_zero_constructed():
    b = ex.solve_b_for_line_zero(0.5, 1, PI)
    p = make_params(0.5, b, PI)
    z = ex.line_zero(p, 1)
    assert z == pytest.approx(1 - 1j * math.sqrt(4 * b * b / 0.25 - 1))
    assert abs(phi(p, Branch.MINUS, z)) < 1e-10
    assert abs(phi_prime(p, Branch.MINUS, z)) > 1e-3
    assert ex.theta_parameter(p) == pytest.approx(1, abs=1e-9)


def test_solve_b_limits_and_errors():
    bs = [ex.solve_b_for_line_zero(a, 1, PI) / (a / 2) for a in (0.4, 0.1, 0.01, 1e-4)]
    assert all(x > y > 1 for x, y in zip(bs, bs[1:]))
    with pytest.raises(ValueError):
        ex.solve_b_for_line_zero(2.0, 1, PI)


def test_theta_parameter_monotone():
    a = 0.8
    thetas = [ex.theta_parameter(make_params(a, b, PI)) for b in (0.41, 0.45, 0.6, 1.0)]
    assert all(x > y for x, y in zip(thetas, thetas[1:]))
    near = [ex.theta_parameter(make_params(a, a / 2 * (1 + 10.0 ** -k), PI)) for k in (2, 4, 6, 8)]
    assert all(x < y for x, y in zip(near, near[1:]))
    with pytest.raises(ValueError):
        ex.theta_parameter(make_params(0, 1, PI))


def test_b_for_theta_inverts():
    p = make_params(0.7, ex.b_for_theta(0.7, 2.5, PI), PI)
    assert ex.theta_parameter(p) == pytest.approx(2.5, rel=1e-10)


def counts(p, n_max):
    cert = compute_spectrum(p, n_max).certificate
    return {r.n: (r.minus, r.line_minus) for r in cert}


def test_strip_count_real_distinct():
    p = make_params(1, 0.3, PI)
    got = counts(p, 6)
    for n in range(6):
        assert ex.strip_count_expected(p, n) == (1, 0) == got[n]


def test_strip_count_theta_between_two_and_three():
    p = make_params(0.7, ex.b_for_theta(0.7, 2.5, PI), PI)
    got = counts(p, 6)
    assert ex.strip_count_expected(p, 2) == (2, 0) == got[2]
    assert ex.strip_count_expected(p, 1) == (1, 0) == got[1]


def test_strip_count_on_line():
    p = make_params(0.5, ex.solve_b_for_line_zero(0.5, 1, PI), PI)
    assert ex.strip_count_expected(p, 1) == (1, 1)
    got = counts(p, 5)
    assert got[1] == (1, 1)


def test_theta_table_csv():
    text = ex.theta_table_csv([ex.theta_point(0, PI)])
    head, row = text.strip().splitlines()
    assert head.split(",")[0] == "k" and row.startswith("0,")
