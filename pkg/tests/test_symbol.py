import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from phidir.errors import DomainError, EllipticityError, OutOfRangeError, SymbolError
from phidir.symbol import (
    Minorant,
    SymbolSpec,
    check_condition,
    derive,
    ellipticity_bounds,
    inverse_a,
    make_builtin,
    parse_A,
    quadratic_form,
    regularize,
    regularized_identities,
    symbol_from_json,
)

S_LOG = np.geomspace(1e-3, 1e3, 61)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
def test_p_laplacian_b_is_constant(p):
    d = derive(make_builtin("p_laplacian", p))
    np.testing.assert_allclose(d.b(S_LOG), p - 2, atol=1e-12)
    np.testing.assert_allclose(d.b_prime(S_LOG), 0.0, atol=1e-12)


def test_minimal_surface_structure():
    d = derive(make_builtin("minimal_surface"))
    np.testing.assert_allclose(d.one_plus_b(S_LOG), 1 / (1 + S_LOG**2), rtol=1e-12)
    np.testing.assert_allclose(d.ratio(S_LOG), 1 / (1 + S_LOG**2), rtol=1e-12)
    np.testing.assert_allclose(d.B(S_LOG), 1.0)


def test_p_area_structure():
    for p in (1.5, 2.0, 3.0):
        d = derive(make_builtin("p_area", p))
        np.testing.assert_allclose(d.one_plus_b(S_LOG), (p - 1) / (S_LOG**p + 1), rtol=1e-12)


def test_a_values_and_sup():
    ms = make_builtin("minimal_surface")
    assert ms.a(1.0) == pytest.approx(1 / math.sqrt(2), rel=1e-15)
    assert ms.sup_a == pytest.approx(1.0)
    assert math.isinf(make_builtin("p_laplacian", 3).sup_a)
    assert make_builtin("p_laplacian", 2).a(0.0) == 0.0


def test_inverse_a_roundtrip_examples():
    assert inverse_a(make_builtin("minimal_surface"), 1 / math.sqrt(2)) == pytest.approx(1.0, rel=1e-14)
    assert inverse_a(make_builtin("p_laplacian", 3), 4.0) == pytest.approx(2.0, rel=1e-14)
    assert inverse_a(make_builtin("p_laplacian", 3), 0.0) == 0.0


def test_inverse_a_out_of_range():
    with pytest.raises(OutOfRangeError):
        inverse_a(make_builtin("minimal_surface"), 1.0)
    with pytest.raises(DomainError):
        inverse_a(make_builtin("p_laplacian", 2), -1.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-6, 1e4), st.sampled_from(["p_laplacian", "minimal_surface", "p_area"]))
def test_inverse_a_is_inverse(s, name):
    spec = make_builtin(name, 2.5 if name != "minimal_surface" else None)
    t = float(spec.a(s))
    back = inverse_a(spec, t)
    # forward error is amplified by the condition number 1/(1+b) of a
    cond = 1 / float(derive(spec).one_plus_b(s))
    assert back == pytest.approx(s, rel=1e-13 * cond + 1e-13)
    assert float(spec.a(back)) == pytest.approx(t, rel=1e-14)


def test_parse_rejects_outside_grammar():
    with pytest.raises(SymbolError):
        parse_A("__import__('os')")
    with pytest.raises(SymbolError):
        parse_A("sin(s)")
    with pytest.raises(SymbolError):
        parse_A("s + t")
    assert parse_A("(1 + s**2)**(-1/2)") == (1 + sp.Symbol("s", positive=True) ** 2) ** sp.Rational(-1, 2)


def test_spec_validation():
    with pytest.raises(SymbolError):
        SymbolSpec(p=1.0, A_expr="1")
    with pytest.raises(SymbolError):
        SymbolSpec(p=2, A_expr="-1")
    with pytest.raises(SymbolError):
        SymbolSpec(p=2, A_expr="exp(-s**2)")  # s e^{-s^2} is not increasing


def test_json_roundtrip():
    spec = make_builtin("p_area", 1.5)
    back = symbol_from_json(spec.to_json())
    np.testing.assert_allclose(back.a(S_LOG), spec.a(S_LOG), rtol=1e-14)
    reg = regularize(make_builtin("p_laplacian", 3), 0.1)
    back = symbol_from_json(reg.to_json())
    np.testing.assert_allclose(back.a(S_LOG), reg.a(S_LOG), rtol=1e-14)
    assert symbol_from_json({"name": "minimal_surface"}).label == "minimal_surface"


def test_regularize_rejects_bad_kappa():
    with pytest.raises(SymbolError):
        regularize(make_builtin("p_laplacian", 3), 0.0)
    with pytest.raises(SymbolError):
        regularize(regularize(make_builtin("p_laplacian", 3), 1.0), 1.0)


def test_regularized_example_value():
    reg = derive(regularize(make_builtin("p_laplacian", 3), 1.0))
    assert reg.one_plus_b(1.0) == pytest.approx(1.5, rel=1e-14)


def test_regularized_p2_is_unchanged():
    base = make_builtin("minimal_surface")
    reg = regularize(base, 0.3)
    np.testing.assert_allclose(reg.a(S_LOG), base.a(S_LOG), rtol=1e-14)


@pytest.mark.parametrize("kappa", [1.0, 0.1, 1e-3])
@pytest.mark.parametrize("name,p", [("p_laplacian", 3.0), ("p_laplacian", 1.5), ("p_area", 2.5)])
def test_regularized_identities_match_direct_derivatives(kappa, name, p):
    spec = make_builtin(name, p)
    s = sp.Symbol("s", positive=True)
    A = sp.sympify(spec.A_expr, locals={"s": s, "p": sp.nsimplify(p)})
    a_k = (kappa + s**2) ** (sp.nsimplify(p) / 2 - 1) * A * s
    one_plus = s * sp.diff(a_k, s) / a_k
    db = sp.diff(one_plus, s)
    x = np.geomspace(1e-2, 1e3, 41)
    # evaluated at 40 digits: the direct derivative cancels badly in double precision
    want_1b = [float(one_plus.evalf(40, subs={s: sp.Float(v, 40)})) for v in x]
    want_db = [float(db.evalf(40, subs={s: sp.Float(v, 40)})) for v in x]
    got_1b, got_db = regularized_identities(spec, kappa, x)
    np.testing.assert_allclose(got_1b, want_1b, rtol=1e-6)
    np.testing.assert_allclose(got_db, want_db, rtol=1e-6, atol=1e-300)


def test_condition_suite_p_laplacian():
    spec = make_builtin("p_laplacian", 3)
    assert check_condition(spec, "I", minorant=Minorant(1.0, 2)).holds
    assert check_condition(spec, "C6", minorant=Minorant(2.0, 2), beta=1.0).holds
    rep = check_condition(spec, "C10", beta=1.0, alpha=0.5)
    assert rep.holds and rep.infimum_value == pytest.approx(1.0)


def test_condition_suite_minimal_surface():
    spec = make_builtin("minimal_surface")
    assert check_condition(spec, "II", minorant=Minorant(0.5, 0), s0=1.0).holds
    assert check_condition(spec, "C11_1", s0=2.0).infimum_value == pytest.approx(0.48)
    rep = check_condition(spec, "C18_1", epsilon=0.25, s0=10.0)
    assert rep.holds
    assert rep.infimum_value == pytest.approx(100 * (75 - 1.25) / 101**2, rel=1e-12)


def test_condition_failures_are_reported():
    ms = make_builtin("minimal_surface")
    assert not check_condition(ms, "I", minorant=Minorant(1.0, 2)).holds
    assert not check_condition(ms, "C18_1", epsilon=0.25, s0=1.0).holds
    assert not check_condition(make_builtin("p_laplacian", 3), "C18_1", epsilon=0.25).holds
    # a growing minorant breaks the structural part of condition II
    assert not check_condition(ms, "II", minorant=Minorant(0.1, 0.5)).holds
    with pytest.raises(SymbolError):
        check_condition(ms, "C6", minorant=Minorant(1, 1))
    with pytest.raises(SymbolError):
        check_condition(ms, "C99")


def test_condition_report_json():
    doc = check_condition(make_builtin("minimal_surface"), "C18_1", epsilon=0.25, s0=10.0).to_json()
    assert doc["holds"] is True and doc["condition_id"] == "C18_1"


def test_ellipticity_bounds_minimal_surface():
    c, C = ellipticity_bounds(make_builtin("minimal_surface"), 1.0, 10.0)
    assert c == pytest.approx(1 / 101, rel=1e-12)
    assert C == pytest.approx(1.0)


@pytest.mark.parametrize("p,s_max", [(1.5, 5.0), (3.0, 0.8)])
def test_ellipticity_quadratic_form_between_bounds(p, s_max):
    # for p > 2 the lemma's lower bound 1 + sA'/A stays positive only for s < 1
    spec = make_builtin("p_area", p)
    c, C = ellipticity_bounds(spec, 0.5, s_max)
    s = np.linspace(0.0, s_max, 51)[:, None]
    cos = np.linspace(-1, 1, 21)[None, :]
    q = quadratic_form(spec, 0.5, s, cos)
    weight = (0.5 + s**2) ** (spec.p / 2 - 1)
    assert np.all(q / weight >= c**2 * (1 - 1e-12))
    assert np.all(q / weight <= C**2 * (1 + 1e-12))


def test_ellipticity_error():
    # a is still increasing, but 1 + s A'/A < 0 once s^2 > 2
    spec = SymbolSpec(p=3, A_expr="(1 + s**2)**(-3/4)")
    with pytest.raises(EllipticityError):
        ellipticity_bounds(spec, 1.0, 1e3)
