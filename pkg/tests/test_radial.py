import math

import numpy as np
import pytest

from phidir.errors import DomainError, NoRadialSolution
from phidir.radial import (
    WarpedProduct,
    asymptotic_barrier,
    asymptotic_residual,
    boundary_gap_map,
    evaluate_radial,
    solve_radial,
)
from phidir.symbol import make_builtin

# c solving c (arccosh(4/c) - arccosh(1/c)) = 1, found with mpmath at 30 digits
CATENOID_C = 0.661054830147333046742270458774
# a(2)/cosh(1) for the minimal surface symbol
MS_NOMINAL_C = 0.57963736360867978083143884191
# c with int_0^inf a^{-1}(c sech t) dt = 2 for the minimal surface symbol (mpmath)
MS_CALIB_C = 0.891177716584642718664556435721


def annulus(r0, r1, n=2, kind="euclidean", k=1.0):
    return WarpedProduct(n, kind, k, r0, r1)


def test_harmonic_annulus():
    sol = solve_radial(make_builtin("p_laplacian", 2), annulus(1, 2), 0.0, 1.0)
    assert sol.flux_c == pytest.approx(1 / math.log(2), rel=1e-12)
    np.testing.assert_allclose(sol.u_table, np.log(sol.r_table) / math.log(2), atol=1e-12)
    assert evaluate_radial(sol, math.sqrt(2)) == pytest.approx(0.5, abs=1e-13)


def test_p3_annulus():
    sol = solve_radial(make_builtin("p_laplacian", 3), annulus(1, 4), 0.0, 1.0)
    np.testing.assert_allclose(sol.u_table, np.sqrt(sol.r_table) - 1, atol=1e-8)
    r = np.linspace(1, 4, 37)
    np.testing.assert_allclose(evaluate_radial(sol, r), np.sqrt(r) - 1, atol=1e-12)


def test_catenoid():
    sol = solve_radial(make_builtin("minimal_surface"), annulus(1, 4), 0.0, 1.0)
    c = CATENOID_C
    want = c * np.arccosh(sol.r_table / c) - c * np.arccosh(1 / c)
    assert sol.flux_c == pytest.approx(c, rel=1e-12)
    np.testing.assert_allclose(sol.u_table, want, atol=1e-12)


def test_decreasing_data_gives_negative_flux():
    sol = solve_radial(make_builtin("p_laplacian", 2), annulus(1, 2), 1.0, 0.0)
    assert sol.flux_c == pytest.approx(-1 / math.log(2), rel=1e-12)
    assert evaluate_radial(sol, math.sqrt(2)) == pytest.approx(0.5, abs=1e-13)


def test_constant_data():
    sol = solve_radial(make_builtin("minimal_surface"), annulus(1, 3), 0.7, 0.7)
    assert sol.flux_c == 0.0
    np.testing.assert_array_equal(evaluate_radial(sol, [1.0, 2.0, 3.0]), 0.7)


def test_endpoints_exact_and_domain():
    sol = solve_radial(make_builtin("p_laplacian", 3), annulus(1, 4), 0.25, 1.5)
    assert evaluate_radial(sol, 1.0) == 0.25
    assert evaluate_radial(sol, 4.0) == 1.5
    with pytest.raises(DomainError):
        evaluate_radial(sol, 4.5)


def test_minimal_surface_saturation():
    with pytest.raises(NoRadialSolution):
        solve_radial(make_builtin("minimal_surface"), annulus(1, 4), 0.0, 10.0)


def test_flux_conservation_and_monotone_table():
    for name, p in (("p_laplacian", 1.5), ("p_area", 2.0), ("minimal_surface", None)):
        sol = solve_radial(make_builtin(name, p), annulus(1, 3, n=3), 0.0, 0.5)
        assert sol.flux_residual() <= 10 * sol.tol * max(1.0, abs(sol.flux_c))
        assert np.all(np.diff(sol.u_table) > 0)


def test_hyperbolic_matches_closed_form():
    # p = 2, n = 2 on the hyperbolic plane: u' = c / sinh r, so u = c ln tanh(r/2) + const
    sol = solve_radial(make_builtin("p_laplacian", 2), annulus(1, 3, kind="hyperbolic"), 0.0, 1.0)
    f = np.log(np.tanh(sol.r_table / 2))
    want = (f - f[0]) / (f[-1] - f[0])
    np.testing.assert_allclose(sol.u_table, want, atol=1e-12)


def test_gap_map_strictly_increasing():
    cs = np.linspace(0.05, 0.95, 19)
    gaps = boundary_gap_map(make_builtin("minimal_surface"), annulus(1, 4), cs)
    assert np.all(np.diff(gaps) > 0)


def test_radial_csv(tmp_path):
    sol = solve_radial(make_builtin("p_laplacian", 2), annulus(1, 2), 0.0, 1.0)
    path = tmp_path / "r.csv"
    sol.to_csv(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_allclose(data[:, 1], np.log(data[:, 0]) / math.log(2), atol=1e-12)
    assert path.read_text().splitlines()[0] == "r,u"


# --------------------------------------------------------------------------- barrier at infinity


def test_p2_n3_closed_form():
    bar = asymptotic_barrier(make_builtin("p_laplacian", 2), 3, 1.0, 1.0)
    s = np.linspace(0.0, 6.0, 25)
    np.testing.assert_allclose(bar.g(s), bar.calib_c * (1 - np.tanh(s)), atol=1e-12)
    assert bar.nominal_c == pytest.approx(2 / math.cosh(1) ** 2, rel=1e-14)


def test_adaptive_and_fixed_quadrature_agree():
    spec = make_builtin("p_laplacian", 2)
    a = asymptotic_barrier(spec, 3, 1.0, 1.0, method="adaptive")
    b = asymptotic_barrier(spec, 3, 1.0, 1.0, method="fixed")
    s = np.linspace(0.05, 10.0, 30)
    np.testing.assert_allclose(a.g(s), b.g(s), atol=1e-7)


def test_minimal_surface_calibration():
    bar = asymptotic_barrier(make_builtin("minimal_surface"), 2, 1.0, 1.0)
    assert bar.nominal_c == pytest.approx(MS_NOMINAL_C, rel=1e-13)
    assert bar.calib_c == pytest.approx(MS_CALIB_C, rel=1e-8)
    assert bar.g0 >= 2.0
    s = np.linspace(0.01, 8.0, 60)
    g = bar.g(s)
    assert np.all(np.diff(g) < 0)
    assert np.all(g <= bar.tail_bound(s) * (1 + 1e-12))
    assert bar.g(40.0) <= 1e-6


def test_nominal_constant_alone_misses_height():
    # the literal constant leaves g(0) < 2C, which is why it is raised
    bar = asymptotic_barrier(make_builtin("p_laplacian", 2), 3, 1.0, 1.0)
    assert bar.calib_c > bar.nominal_c
    assert bar.nominal_c * (1 - math.tanh(0.0)) < 2.0


def test_w_is_capped():
    bar = asymptotic_barrier(make_builtin("p_laplacian", 2), 3, 1.0, 1.0)
    assert bar.w(0.0) == 1.0
    assert bar.w(5.0) == pytest.approx(bar.g(5.0))


def test_zero_height():
    bar = asymptotic_barrier(make_builtin("minimal_surface"), 2, 1.0, 0.0)
    assert bar.calib_c == 0.0
    np.testing.assert_array_equal(bar.w(np.array([0.0, 1.0, 10.0])), 0.0)


@pytest.mark.parametrize("name,p,n", [("minimal_surface", None, 2), ("p_laplacian", 2.0, 3), ("p_laplacian", 3.0, 2)])
def test_residual_vanishes_for_tight_laplacian(name, p, n):
    bar = asymptotic_barrier(make_builtin(name, p), n, 1.0, 1.0)
    res = asymptotic_residual(bar, [0.5, 1.0, 2.0])
    assert np.all(res <= 1e-9)
    np.testing.assert_allclose(res, 0.0, atol=1e-12)


def test_residual_strict_for_larger_laplacian():
    bar = asymptotic_barrier(make_builtin("minimal_surface"), 2, 1.0, 1.0)
    s = np.array([0.5, 1.0, 2.0])
    res = asymptotic_residual(bar, s, laplacian=lambda x: 1 / np.tanh(x + 0.5))
    assert np.all(res < 0)


def test_residual_terms_decay():
    bar = asymptotic_barrier(make_builtin("minimal_surface"), 2, 1.0, 1.0)
    s = np.linspace(1.0, 12.0, 12)
    _, first, second = asymptotic_residual(bar, s, return_terms=True)
    assert np.all(np.diff(np.abs(first)) < 0) and np.all(np.diff(np.abs(second)) < 0)


def test_residual_domain():
    bar = asymptotic_barrier(make_builtin("minimal_surface"), 2, 1.0, 1.0)
    with pytest.raises(DomainError):
        asymptotic_residual(bar, [0.0, 1.0])


def test_invalid_inputs():
    spec = make_builtin("minimal_surface")
    with pytest.raises(DomainError):
        asymptotic_barrier(spec, 1, 1.0, 1.0)
    with pytest.raises(DomainError):
        asymptotic_barrier(spec, 2, 0.0, 1.0)
    with pytest.raises(DomainError):
        WarpedProduct(2, "euclidean", r_min=2.0, r_max=1.0)
