import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tubecert.certificate import (Exponents, InadmissibleExponents, check_condition_f,
                                  coefficient, coefficient_value, critical_eps)
from tubecert.curves import arc, segment
from tubecert.field import mu
from tubecert.nonlinearity import Nonlinearity
from tubecert.tube import build_chart

TS = np.linspace(-10, 10, 2001)


@pytest.fixture(scope="module")
def unit_arc():
    return build_chart(arc([0, 0], 1.0, 0.0, np.pi), 1.0)


def test_exponent_admissibility():
    Exponents(2, 1.5, 6.000001)
    with pytest.raises(InadmissibleExponents):
        Exponents(2, 1.5, 6.0)
    with pytest.raises(InadmissibleExponents):
        Exponents(2, 2.0, 10.0)
    with pytest.raises(InadmissibleExponents):
        Exponents(2, 1.0, 10.0)
    with pytest.raises(InadmissibleExponents):
        Exponents(2.5, 1.5, 10.0)
    with pytest.raises(InadmissibleExponents):
        Exponents(2, 1.5, 4.0)


def test_coefficient_values():
    e = Exponents(2, 1.5, 10)
    assert coefficient(e, 0.0) == pytest.approx(-2 / 15, rel=1e-15)
    assert e.slope == pytest.approx(53 / 30, rel=1e-15)
    assert coefficient(e, 4 / 53) == pytest.approx(0.0, abs=1e-15)
    assert coefficient_value(2, 1.5, 4, 0.0) == pytest.approx(1 - 4 / 3 + 1 / 2)
    with pytest.raises(ValueError):
        coefficient(e, -0.1)


@given(st.integers(2, 6), st.floats(0.01, 0.99), st.floats(1.001, 5.0), st.floats(0, 1), st.floats(0, 1))
def test_coefficient_structure(n, pf, qf, m1, m2):
    p = 1 + pf * (n - 1)
    if p >= n:
        return
    q = qf * n * p / (n - p)
    e = Exponents(n, p, q)
    assert e.base < 0 and e.slope > 1
    lo, hi = sorted((m1, m2))
    if hi > lo + 1e-9:
        assert coefficient(e, lo) < coefficient(e, hi)


def test_condition_power_is_equality():
    rep = check_condition_f(Nonlinearity.power(10), 10, TS)
    assert rep.passed
    assert abs(rep.margin) < 1e-12 and rep.min_F == 0.0


def test_condition_cubic_with_small_q():
    assert check_condition_f(Nonlinearity.power(4), 4, TS).passed
    with pytest.raises(InadmissibleExponents):
        Exponents(2, 1.5, 4)


def test_condition_exponential_fails():
    f = Nonlinearity.function(np.expm1, np.exp, label="exp(t)-1")
    rep = check_condition_f(f, 10, TS[::10])
    assert not rep.passed
    assert rep.margin < -1
    assert rep.margin_t == -10.0
    # its primitive e^t - 1 - t is nonnegative; the failure is in t f >= q F
    assert rep.min_F >= 0


def test_condition_needs_both_signs():
    with pytest.raises(ValueError):
        check_condition_f(Nonlinearity.power(10), 10, np.linspace(0, 1, 5))


def test_table_nonlinearity():
    t = np.linspace(-3, 3, 601)
    f = Nonlinearity.table(t, np.abs(t) ** 8 * t)
    assert f.F(np.array([0.0]))[0] == 0.0
    assert f.F(np.array([2.0]))[0] == pytest.approx(2.0**10 / 10, rel=1e-6)


def test_unit_arc_critical_width(unit_arc):
    cert = critical_eps(unit_arc, Exponents(2, 1.5, 10))
    assert cert.eps_bar == pytest.approx(4 / 57, rel=1e-5)
    assert cert.eps_bar <= 4 / 57
    assert not cert.geometry_limited and cert.certified
    assert abs(cert.C(mu(unit_arc, cert.eps_bar).mu)) <= 1e-5 * cert.slope
    assert cert.C(mu(unit_arc, cert.eps_bar / 2).mu) < 0


def test_three_dimensional_critical_width(unit_arc):
    e = Exponents(3, 2.0, 7.0)
    assert e.base == pytest.approx(-1 / 14) and e.slope == pytest.approx(23 / 14)
    cert = critical_eps(unit_arc, e)
    assert cert.eps_bar == pytest.approx(1 / 24, rel=1e-5)
    assert "cylinder" in cert.statement()


def test_segment_is_geometry_limited():
    ch = build_chart(segment([-1, 0], [1, 0]), 0.4)
    cert = critical_eps(ch, Exponents(2, 1.5, 10))
    assert cert.geometry_limited and cert.certified
    assert cert.eps_bar == ch.eps_bar1 == 0.4
    assert np.all(cert.mu_profile.mu_values == 0)


def test_critical_width_shrinks_towards_critical_q(unit_arc):
    qs = [12.0, 8.0, 7.0, 6.5, 6.2, 6.05]
    eb = [critical_eps(unit_arc, Exponents(2, 1.5, q), ladder=16, rtol=1e-4).eps_bar for q in qs]
    assert np.all(np.diff(eb) < 0)
    assert eb[-1] < 0.01


def test_condition_folds_into_verdict(unit_arc):
    bad = Nonlinearity.function(np.expm1, np.exp)
    cert = critical_eps(unit_arc, Exponents(2, 1.5, 10), f=bad, f_samples=np.linspace(-5, 5, 41),
                        ladder=8)
    assert cert.verdict == "not-certified"
    assert cert.condition_f is not None and not cert.condition_f.passed


def test_spline_warning_propagates(spline_chart):
    cert = critical_eps(spline_chart, Exponents(2, 1.5, 10), ladder=8, rtol=1e-4)
    assert any("C^2" in w or "spline" in w for w in cert.warnings)
    assert any("reach" in w for w in cert.warnings)


def test_serialization(unit_arc):
    cert = critical_eps(unit_arc, Exponents(2, 1.5, 10), f=Nonlinearity.power(10), ladder=8)
    d = json.loads(cert.to_json())
    assert d["verdict"] == "certified" and d["eps_bar"] == cert.eps_bar
    assert len(d["mu_ladder"]) == 8 and set(d["mu_ladder"][0]) == {"eps", "mu", "C", "argmax_t", "argmax_r"}
    buf = io.StringIO()
    cert.write_csv(buf)
    rows = buf.getvalue().splitlines()
    assert rows[0] == "eps,mu,C" and len(rows) == 9
    eps, m, C = map(float, rows[-1].split(","))
    assert eps == cert.mu_profile.eps_values[-1] and C == pytest.approx(cert.C(m))
