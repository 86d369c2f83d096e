import json
import math

import numpy as np
import pytest

from phidir.barrier import DomainGeometry, alpha_of, build_profile, eval_profile, profile_residual
from phidir.errors import DomainError, PhidirError
from phidir.symbol import Minorant


def test_alpha_examples():
    assert alpha_of(2.0, 1.0, 0.2) == 2.0
    assert alpha_of(0.1, 1.0, 0.0) == 1.0
    assert alpha_of(1.0, 10.0, 2.0) == 6.0
    with pytest.raises(DomainError):
        alpha_of(0.0, 1.0, 0.0)


def test_mild_power_closed_form():
    geom = DomainGeometry(delta0=1.0, c1=0.2, C_geom=2.0)
    prof = build_profile("mild", Minorant(1.0, 2), geom, 2.0)
    # phi(2t/3)/(C t^2) = 4/(9C), so beta = alpha + 9 C M / 4
    assert prof.beta == pytest.approx(prof.alpha + 9 * 2.0 * 2.0 / 4, abs=1e-10)
    # h(alpha) = (4/(9C)) ln(beta/alpha)
    assert prof.delta == pytest.approx(4 / 9 / 2.0 * math.log(prof.beta / prof.alpha), rel=1e-12)


def test_strong_constant_closed_form():
    geom = DomainGeometry(delta0=1.0, c1=0.2, C_geom=2.0, mean_convex=True)
    prof = build_profile("strong", Minorant(0.5, 0), geom, 1.0)
    assert prof.beta == pytest.approx(prof.alpha * math.exp(2.0 * 1.0 / 0.5), rel=1e-10)


def test_profile_values():
    geom = DomainGeometry(delta0=1.0, c1=0.0, C_geom=1.0)
    prof = build_profile("mild", Minorant(1.0, 2), geom, 0.5)
    assert eval_profile(prof, 0.0) == 0.0
    assert eval_profile(prof, prof.delta) == pytest.approx(0.5, abs=1e-8)
    mid = eval_profile(prof, prof.delta / 2)
    assert 0.0 < mid < 0.5
    # concave with f(0) = 0 lies above its chord
    assert mid >= 0.25 * (1 - 1e-12)
    d = np.linspace(0.0, prof.delta, 40)
    f = eval_profile(prof, d)
    assert np.all(np.diff(f) > 0)
    assert np.all(np.diff(f, 2) <= 1e-12)


def test_slopes_at_ends():
    geom = DomainGeometry(delta0=2.0, c1=0.1, C_geom=3.0)
    prof = build_profile("mild", Minorant(0.7, 3), geom, 1.0)
    assert prof.slope_at(0.0)[0] == prof.beta
    assert prof.slope_at(prof.delta)[0] == prof.alpha
    s = prof.slope_at(np.linspace(0.01, 0.99, 9) * prof.delta)
    assert np.all(np.diff(s) < 0)


def test_width_chain():
    for M in (0.05, 0.5, 2.0):
        geom = DomainGeometry(delta0=1.5, c1=0.3, C_geom=4.0, mean_convex=True)
        for regime, phi in (("mild", Minorant(1.0, 2)), ("strong", Minorant(0.3, 0))):
            prof = build_profile(regime, phi, geom, M)
            assert prof.delta <= M / prof.alpha <= geom.delta0


def test_lower_barrier_is_negation():
    prof = build_profile("mild", Minorant(1.0, 1), DomainGeometry(1.0, 0.0, 1.0), 0.3)
    d = np.linspace(0.0, prof.delta, 11)
    np.testing.assert_array_equal(eval_profile(prof, d, lower=True), -eval_profile(prof, d))


@pytest.mark.parametrize("regime,phi", [("mild", Minorant(1.0, 2)), ("strong", Minorant(0.5, 0))])
def test_certificate_residuals(regime, phi):
    geom = DomainGeometry(delta0=1.0, c1=0.2, C_geom=2.0, mean_convex=True)
    prof = build_profile(regime, phi, geom, 1.0)
    s = np.linspace(prof.alpha, prof.beta, 100)
    np.testing.assert_allclose(profile_residual(prof, s), 0.0, atol=1e-9)
    assert np.all(profile_residual(prof, s, f2_scale=1.1) < 0)


def test_literal_strong_constant_breaks_certificate():
    geom = DomainGeometry(delta0=1.0, c1=0.2, C_geom=2.0, mean_convex=True)
    prof = build_profile("strong", Minorant(0.5, 0), geom, 1.0, strong_constant="literal")
    assert np.all(profile_residual(prof, [prof.alpha, prof.beta]) > 0)


def test_small_height_limit():
    geom = DomainGeometry(delta0=1.0, c1=0.0, C_geom=1.0)
    prof = build_profile("mild", Minorant(1.0, 2), geom, 1e-6)
    assert prof.beta == pytest.approx(prof.alpha, rel=1e-5)
    assert prof.delta < 1e-5


def test_requirements():
    geom = DomainGeometry(delta0=1.0, c1=0.0, C_geom=1.0)
    with pytest.raises(PhidirError):
        build_profile("mild", Minorant(1.0, 0.5), geom, 1.0)
    with pytest.raises(PhidirError):
        build_profile("strong", Minorant(1.0, 0), geom, 1.0)  # not mean convex
    with pytest.raises(DomainError):
        build_profile("other", Minorant(1.0, 2), geom, 1.0)
    with pytest.raises(DomainError):
        DomainGeometry(delta0=0.0, c1=0.0, C_geom=1.0)


def test_beta_overflow_guard():
    geom = DomainGeometry(delta0=1.0, c1=0.0, C_geom=50.0, mean_convex=True)
    with pytest.raises(PhidirError):
        build_profile("strong", Minorant(0.01, 0), geom, 1.0)


def test_domain_errors():
    prof = build_profile("mild", Minorant(1.0, 2), DomainGeometry(1.0, 0.0, 1.0), 0.5)
    with pytest.raises(DomainError):
        eval_profile(prof, prof.delta * 1.1)
    with pytest.raises(DomainError):
        profile_residual(prof, [prof.alpha / 2])


def test_exports(tmp_path):
    prof = build_profile("mild", Minorant(1.0, 2), DomainGeometry(1.0, 0.2, 2.0), 2.0)
    prof.to_csv(tmp_path / "p.csv")
    prof.to_json(tmp_path / "p.json")
    data = np.loadtxt(tmp_path / "p.csv", delimiter=",", skiprows=1)
    assert data[0, 0] == 0.0 and data[0, 1] == 0.0
    assert data[-1, 1] == pytest.approx(2.0, abs=1e-8)
    meta = json.loads((tmp_path / "p.json").read_text())
    assert set(meta) >= {"regime", "alpha", "beta", "delta", "M", "C_geom"}
