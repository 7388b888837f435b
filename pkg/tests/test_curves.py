import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tubecert.curves import (ParametricPath, arc, check_simple, curve_from_dict,
                             load_curve, resolve_curve, segment, shipped_curves, spline)

H = 1e-5


def fd_speed(curve, t, h=1e-6):
    return np.linalg.norm(curve.point(t + h) - curve.point(t - h), axis=-1) / (2 * h)


def test_segment_reparametrized_and_centered():
    c = segment([0, 0], [2, 0])
    assert (c.a, c.b) == (-1.0, 1.0)
    t = np.linspace(-1, 1, 11)
    assert np.allclose(c.point(t), np.stack([t + 1, 0 * t], 1), atol=1e-15)
    f = c.frame_at(0.3)
    assert np.allclose(f.T, [1, 0]) and np.allclose(f.N, [0, 1])
    assert f.kappa == 0.0 and f.tkappa_prime == 0.0


def test_arc_length_and_curvature():
    c = arc([0, 0], 2.0, 0.0, np.pi / 2)
    assert c.length == pytest.approx(np.pi, rel=1e-14)
    t = np.linspace(c.a, c.b, 50)
    assert np.allclose(c.curvature(t), 0.5)
    assert np.allclose(c.tkappa_prime(t), 0.5)
    assert np.allclose(np.linalg.norm(c.point(t), axis=1), 2.0, atol=1e-14)


def test_clockwise_arc_has_negative_curvature():
    c = arc([0, 0], 1.0, np.pi / 2, 0.0)
    assert np.allclose(c.curvature(np.linspace(c.a, c.b, 9)), -1.0)


def test_arc_rejects_full_turn():
    with pytest.raises(ValueError):
        arc([0, 0], 1.0, 0.0, 2 * np.pi)


@pytest.mark.parametrize("curve", [segment([0, 0], [1, 1]), arc([0, 0], 1.5, 0.2, 2.0),
                                   spline([(0, 0), (1, 0.5), (2, 0)])])
def test_unit_speed(curve):
    t = np.linspace(curve.a + 1e-4, curve.b - 1e-4, 1000)
    tol = 1e-6 if curve.kind == "spline" else 1e-9
    assert np.max(np.abs(fd_speed(curve, t) - 1)) <= tol
    T = curve.tangent(t)
    N = curve.normal(t)
    assert np.allclose(np.linalg.norm(T, axis=1), 1, atol=1e-10)
    assert np.allclose(np.sum(T * N, axis=1), 0, atol=1e-12)
    assert np.array_equal(N, np.stack([-T[:, 1], T[:, 0]], 1))


def test_spline_image_matches_raw_path():
    pts = np.array([(0, 0), (1, 0.5), (2, 0)], float)
    c = spline(pts)
    # the knots lie on the curve
    t = np.linspace(c.a, c.b, 20001)
    P = c.point(t)
    for p in pts:
        assert np.min(np.linalg.norm(P - p, axis=1)) < 1e-4
    assert np.allclose(c.point(c.a), pts[0], atol=1e-12)
    assert np.allclose(c.point(c.b), pts[-1], atol=1e-9)


@pytest.mark.parametrize("curve", [arc([1, 2], 0.7, -1.0, 1.5), spline([(0, 0), (1, 0.5), (2, 0), (3, 0.4)])])
def test_frenet_consistency(curve):
    t = np.linspace(curve.a + 0.01, curve.b - 0.01, 200)
    dT = (curve.tangent(t + H) - curve.tangent(t - H)) / (2 * H)
    kN = curve.curvature(t)[:, None] * curve.normal(t)
    scale = np.maximum(np.linalg.norm(kN, axis=1), 1.0)
    assert np.max(np.linalg.norm(dT - kN, axis=1) / scale) <= 1e-4


def test_spline_tkappa_prime_against_finite_differences():
    c = spline([(0, 0), (1, 0.5), (2, 0), (3, 0.4)])
    knots_free = np.linspace(c.a + 0.05, c.b - 0.05, 300)
    tk = lambda t: t * c.curvature(t)
    fd = (tk(knots_free + H) - tk(knots_free - H)) / (2 * H)
    # one-sided jumps of kappa' at interior knots are O(1); compare away from them
    err = np.abs(fd - c.tkappa_prime(knots_free))
    assert np.median(err) < 1e-6
    assert np.mean(err < 1e-4) > 0.95


def test_extension_is_straight():
    c = arc([0, 0], 1.0, 0.0, np.pi / 2)
    e = c.extend(0.2)
    assert e.t_min == pytest.approx(c.a - 0.2) and e.t_max == pytest.approx(c.b + 0.2)
    tl = np.linspace(e.t_min, c.a - 1e-9, 7)
    tr = np.linspace(c.b + 1e-9, e.t_max, 7)
    assert np.all(e.curvature(tl) == 0) and np.all(e.curvature(tr) == 0)
    assert np.allclose(e.tangent(tl), c.tangent(c.a), atol=1e-15)
    assert np.allclose(e.tangent(tr), c.tangent(c.b), atol=1e-15)
    assert np.allclose(e.point(c.a - 0.2), c.point(c.a) - 0.2 * c.tangent(c.a))
    assert np.all(e.curvature(np.linspace(c.a, c.b, 9)) == 1.0)


def test_spline_extension_tangents():
    c = spline([(0, 0), (1, 0.5), (2, 0)])
    e = c.extend(0.3)
    assert np.allclose(e.tangent(e.t_min), c.tangent(c.a), atol=1e-10)
    assert np.allclose(e.tangent(e.t_max), c.tangent(c.b), atol=1e-10)


def test_extend_then_restrict_is_identity():
    c = arc([0, 0], 1.0, 0.3, 2.1)
    r = c.extend(0.4).restrict()
    t = np.linspace(c.a, c.b, 101)
    assert np.array_equal(r.point(t), c.point(t))
    assert np.array_equal(r.curvature(t), c.curvature(t))


def test_junction_flag():
    c = arc([0, 0], 1.0, 0.0, 1.0).extend(0.1)
    assert c.frame_at(c.a).junction and c.frame_at(c.b).junction
    assert c.frame_at(c.t_min).junction
    assert not c.frame_at(0.0).junction


def test_out_of_range_parameter():
    c = segment([0, 0], [1, 0])
    with pytest.raises(ValueError):
        c.point(2.0)


def test_shift_override_and_bounds():
    c = segment([0, 0], [1, 0], shift=0.0)
    assert c.a == 0.0 and c.b == 1.0
    with pytest.raises(ValueError):
        segment([0, 0], [1, 0], shift=2.0)


def test_degenerate_parametrization_rejected():
    with pytest.raises(ValueError, match="degenerate"):
        ParametricPath(lambda u: np.stack([u**3, 0 * u], -1),
                       lambda u: np.stack([3 * u**2, 0 * u], -1),
                       lambda u: np.stack([6 * u, 0 * u], -1),
                       lambda u: np.stack([6 + 0 * u, 0 * u], -1), 0.0, 1.0)


def test_self_intersection_detected():
    with pytest.raises(ValueError):
        spline([(0, 0), (2, 0), (1, 1), (1, -1)])


def test_check_simple_reports_distance():
    assert check_simple(segment([0, 0], [1, 0])) > 0


@given(st.floats(0.2, 5.0), st.floats(-3.0, 3.0), st.floats(0.2, 4.0), st.booleans())
def test_arc_property(R, th0, span, ccw):
    th1 = th0 + span if ccw else th0 - span
    c = arc([0.3, -0.2], R, th0, th1)
    assert c.length == pytest.approx(R * span, rel=1e-12)
    t = np.linspace(c.a, c.b, 17)
    assert np.allclose(np.linalg.norm(c.point(t) - [0.3, -0.2], axis=1), R, rtol=1e-12)
    assert np.allclose(c.curvature(t), (1 if ccw else -1) / R, rtol=1e-12)
    assert c.a <= 0 <= c.b


def test_spec_parsing_is_strict():
    with pytest.raises(ValueError, match="unknown keys"):
        curve_from_dict({"kind": "segment", "start": [0, 0], "end": [1, 0], "colour": 1})
    with pytest.raises(ValueError, match="missing"):
        curve_from_dict({"kind": "arc", "center": [0, 0], "radius": 1})
    with pytest.raises(ValueError, match="unknown curve kind"):
        curve_from_dict({"kind": "helix"})


def test_spec_roundtrip(tmp_path):
    c = arc([0, 0], 2.0, 0.0, 1.0, shift=0.5, name="demo")
    f = tmp_path / "c.json"
    f.write_text(json.dumps(c.to_dict()))
    d = load_curve(f)
    assert d.name == "demo" and d.a == c.a
    t = np.linspace(c.a, c.b, 11)
    assert np.array_equal(d.point(t), c.point(t))


def test_shipped_curves_load():
    names = shipped_curves()
    assert {"segment", "unit_arc", "wavy_spline", "spiral_spline"} <= set(names)
    for name in names:
        c = resolve_curve(name)
        assert c.a <= 0 <= c.b and check_simple(c) > 0
    with pytest.raises(FileNotFoundError):
        resolve_curve("no-such-curve")
