"""Unit-speed planar curves with Frenet data and straight-line extensions.

A curve is built from a raw parametrization (a ``*Path`` object) by
:func:`reparametrize_arclength`. The resulting :class:`Curve` is parametrized
by arclength ``t`` on ``[a, b]`` with ``a <= 0 <= b`` and can be extended past
both ends by straight lines carrying the endpoint tangents.

Conventions: ``T = gamma'``, ``N = (-T_2, T_1)`` and the signed curvature is
``kappa = gamma'' . N``, so a counterclockwise circle of radius ``R`` has
``kappa = 1/R``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

__all__ = [
    "LinePath",
    "CirclePath",
    "ParametricPath",
    "SplinePath",
    "Curve",
    "Frame",
    "reparametrize_arclength",
    "segment",
    "arc",
    "spline",
    "check_simple",
    "load_curve",
    "curve_from_dict",
    "shipped_curves",
    "resolve_curve",
]

#: parameter distance from a junction inside which frames are flagged
JUNCTION_TOL = 1e-5
#: minimal admissible speed of a raw parametrization
MIN_SPEED = 1e-12

_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _rot90(v):
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def _cross(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


# ---------------------------------------------------------------------------
# raw parametrizations
# ---------------------------------------------------------------------------

class LinePath:
    """Straight segment ``c(u) = p0 + u (p1 - p0)``, ``u in [0, 1]``."""

    kind = "segment"

    def __init__(self, p0, p1):
        self.p0 = np.asarray(p0, dtype=float)
        self.p1 = np.asarray(p1, dtype=float)
        d = self.p1 - self.p0
        self.length = float(np.hypot(*d))
        if self.length < MIN_SPEED:
            raise ValueError("degenerate segment: endpoints coincide")
        self._T = d / self.length
        self.params = {"start": self.p0.tolist(), "end": self.p1.tolist()}

    def raw(self, u):
        u = np.asarray(u, dtype=float)
        return self.p0 + u[..., None] * (self.p1 - self.p0)

    def geometry(self, s):
        s = np.asarray(s, dtype=float)
        pos = self.p0 + s[..., None] * self._T
        T = np.broadcast_to(self._T, pos.shape).copy()
        zero = np.zeros(s.shape)
        return pos, T, zero, zero.copy()


class CirclePath:
    """Circular arc parametrized by angle from ``theta0`` to ``theta1``.

    ``theta1 < theta0`` gives a clockwise arc (negative curvature).
    """

    kind = "arc"

    def __init__(self, center, radius, theta0, theta1):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.theta0 = float(theta0)
        self.theta1 = float(theta1)
        if self.radius <= 0:
            raise ValueError("arc radius must be positive")
        span = self.theta1 - self.theta0
        if abs(span) * self.radius < MIN_SPEED:
            raise ValueError("degenerate arc: zero angular span")
        if abs(span) >= 2 * np.pi:
            raise ValueError("arc spans a full turn; closed curves are not supported")
        self.sign = 1.0 if span > 0 else -1.0
        self.length = abs(span) * self.radius
        self.params = {"center": self.center.tolist(), "radius": self.radius,
                       "theta0": self.theta0, "theta1": self.theta1}

    def raw(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.center + self.radius * np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    def geometry(self, s):
        s = np.asarray(s, dtype=float)
        theta = self.theta0 + self.sign * s / self.radius
        c, sn = np.cos(theta), np.sin(theta)
        pos = self.center + self.radius * np.stack([c, sn], axis=-1)
        T = self.sign * np.stack([-sn, c], axis=-1)
        kappa = np.full(s.shape, self.sign / self.radius)
        return pos, T, kappa, np.zeros(s.shape)


class ParametricPath:
    """General regular parametrization ``u -> c(u)`` on ``[u0, u1]``.

    ``d1, d2, d3`` return the first three derivatives of ``c``. Arclength is
    accumulated with adaptive quadrature between ``breaks`` (points where the
    parametrization may lose smoothness) and inverted by Newton iteration on
    a fixed 20-point Gauss-Legendre rule inside each piece.
    """

    kind = "parametric"

    def __init__(self, func, d1, d2, d3, u0, u1, breaks=None, n_check=2000):
        self.func, self.d1, self.d2, self.d3 = func, d1, d2, d3
        self.u0, self.u1 = float(u0), float(u1)
        if not self.u1 > self.u0:
            raise ValueError("parameter interval must satisfy u0 < u1")
        knots = np.unique(np.concatenate([[self.u0, self.u1],
                                          [] if breaks is None else np.asarray(breaks, float)]))
        self.knots = knots[(knots >= self.u0) & (knots <= self.u1)]

        probe = np.linspace(self.u0, self.u1, n_check)
        speed = np.linalg.norm(self.d1(probe), axis=-1)
        if np.min(speed) < MIN_SPEED:
            raise ValueError(f"degenerate parametrization: speed {np.min(speed):.3e} "
                             f"at u={probe[np.argmin(speed)]:.6g}")

        pieces = [integrate.quad(self._speed, lo, hi, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
                  for lo, hi in zip(self.knots[:-1], self.knots[1:])]
        self.cumlen = np.concatenate([[0.0], np.cumsum(pieces)])
        self.length = float(self.cumlen[-1])
        self.params = {}

    def _speed(self, u):
        return float(np.linalg.norm(self.d1(np.atleast_1d(u))[0]))

    def _partial_length(self, k, u):
        """Arclength from knots[k] to u, u inside piece k (vectorized)."""
        lo = self.knots[k]
        half = 0.5 * (u - lo)
        nodes = lo[..., None] + half[..., None] * (_GL_X + 1.0)
        sp = np.linalg.norm(self.d1(nodes.ravel()), axis=-1).reshape(nodes.shape)
        return half * (sp @ _GL_W)

    def param_of_length(self, s):
        """Invert the arclength map; returns ``u`` with ``len(u0..u) = s``."""
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.length)
        k = np.clip(np.searchsorted(self.cumlen, s, side="right") - 1, 0, len(self.knots) - 2)
        lo, hi = self.knots[k], self.knots[k + 1]
        frac = (s - self.cumlen[k]) / (self.cumlen[k + 1] - self.cumlen[k])
        u = lo + frac * (hi - lo)
        target = s - self.cumlen[k]
        for _ in range(30):
            resid = self._partial_length(k, u) - target
            sp = np.linalg.norm(self.d1(u), axis=-1)
            step = resid / sp
            u = np.clip(u - step, lo, hi)
            if np.all(np.abs(step) <= 1e-15 * (1.0 + np.abs(u))):
                break
        return u

    def raw(self, u):
        return self.func(np.asarray(u, dtype=float))

    def geometry(self, s):
        u = self.param_of_length(s)
        c, c1, c2, c3 = self.func(u), self.d1(u), self.d2(u), self.d3(u)
        sig = np.linalg.norm(c1, axis=-1)
        T = c1 / sig[..., None]
        cr = _cross(c1, c2)
        kappa = cr / sig**3
        dsig = np.sum(c1 * c2, axis=-1) / sig
        dkappa_du = (_cross(c1, c3) * sig - 3.0 * cr * dsig) / sig**4
        return c, T, kappa, dkappa_du / sig


class SplinePath(ParametricPath):
    """Interpolating cubic spline through ``points`` (chord-length knots).

    The spline is C^2 only: curvature is continuous, its derivative jumps at
    interior knots.
    """

    kind = "spline"

    def __init__(self, points, bc_type="natural"):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
            raise ValueError("spline needs at least three planar points")
        chords = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(chords <= MIN_SPEED):
            raise ValueError("consecutive spline points coincide")
        u = np.concatenate([[0.0], np.cumsum(chords)])
        cs = CubicSpline(u, pts, bc_type=bc_type, axis=0)
        self._cs = cs
        super().__init__(cs, cs.derivative(1), cs.derivative(2), cs.derivative(3),
                         u[0], u[-1], breaks=u)
        self.params = {"points": pts.tolist(), "bc": bc_type}


# ---------------------------------------------------------------------------
# unit-speed curve
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Frame:
    t: float
    point: np.ndarray
    T: np.ndarray
    N: np.ndarray
    kappa: float
    tkappa_prime: float
    junction: bool = False

    @property
    def gamma2(self):
        """Second derivative of the curve, ``kappa N``."""
        return self.kappa * self.N


class Curve:
    """Arclength-parametrized planar curve on ``[a, b]`` with optional
    straight extensions of length ``margin`` on both ends.

    Instances are immutable; :meth:`extend` and :meth:`restrict` return new
    curves sharing the same underlying path.
    """

    def __init__(self, path, shift=None, margin=0.0, name=None):
        self.path = path
        self.length = float(path.length)
        shift = 0.5 * self.length if shift is None else float(shift)
        if not 0.0 <= shift <= self.length:
            raise ValueError(f"shift {shift} outside [0, {self.length}]; need a <= 0 <= b")
        if margin < 0:
            raise ValueError("margin must be nonnegative")
        self.shift = shift
        self.margin = float(margin)
        self.name = name or path.kind
        self.a = -shift
        self.b = self.length - shift
        pa, Ta, _, _ = path.geometry(np.array([0.0]))
        pb, Tb, _, _ = path.geometry(np.array([self.length]))
        self._ends = (pa[0], Ta[0], pb[0], Tb[0])

    kind = property(lambda self: self.path.kind)
    t_min = property(lambda self: self.a - self.margin)
    t_max = property(lambda self: self.b + self.margin)
    regularity_warning = property(lambda self: self.path.kind not in ("segment", "arc"))

    def __repr__(self):
        return (f"Curve({self.name!r}, kind={self.kind}, a={self.a:.6g}, b={self.b:.6g}, "
                f"margin={self.margin:.6g})")

    def extend(self, margin):
        if margin <= 0:
            raise ValueError("extension margin must be positive")
        return Curve(self.path, self.shift, margin, self.name)

    def restrict(self):
        return Curve(self.path, self.shift, 0.0, self.name)

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        tol = 1e-12 * (1.0 + self.length)
        if np.any(t < self.t_min - tol) or np.any(t > self.t_max + tol):
            raise ValueError(f"parameter outside [{self.t_min:.6g}, {self.t_max:.6g}]")
        return t

    def geometry(self, t):
        """Return ``(point, T, kappa, kappa')`` at parameters ``t``.

        On the extensions kappa and kappa' vanish; at ``t = a, b`` the values
        of the curve itself (the interior one-sided limits) are returned.
        """
        t = self._check(t)
        shape = t.shape
        t = t.ravel()
        s = np.clip(t - self.a, 0.0, self.length)
        pos, T, kappa, dkappa = self.path.geometry(s)
        pos = np.array(pos, dtype=float, copy=True)
        T = np.array(T, dtype=float, copy=True)
        kappa = np.array(kappa, dtype=float, copy=True)
        dkappa = np.array(dkappa, dtype=float, copy=True)
        pa, Ta, pb, Tb = self._ends
        lo, hi = t < self.a, t > self.b
        if np.any(lo):
            pos[lo] = pa + (t[lo] - self.a)[:, None] * Ta
            T[lo] = Ta
            kappa[lo] = 0.0
            dkappa[lo] = 0.0
        if np.any(hi):
            pos[hi] = pb + (t[hi] - self.b)[:, None] * Tb
            T[hi] = Tb
            kappa[hi] = 0.0
            dkappa[hi] = 0.0
        return (pos.reshape(shape + (2,)), T.reshape(shape + (2,)),
                kappa.reshape(shape), dkappa.reshape(shape))

    def point(self, t):
        return self.geometry(t)[0]

    def tangent(self, t):
        return self.geometry(t)[1]

    def normal(self, t):
        return _rot90(self.geometry(t)[1])

    def curvature(self, t):
        return self.geometry(t)[2]

    def tkappa_prime(self, t):
        """Derivative of ``t kappa(t)``, i.e. ``kappa + t kappa'``."""
        t = np.asarray(t, dtype=float)
        _, _, kappa, dkappa = self.geometry(t)
        return kappa + t * dkappa

    def derivatives(self, t):
        """``gamma, gamma', gamma'', gamma'''`` at ``t`` (unit-speed)."""
        pos, T, kappa, dkappa = self.geometry(t)
        N = _rot90(T)
        g2 = kappa[..., None] * N
        g3 = dkappa[..., None] * N - (kappa**2)[..., None] * T
        return pos, T, g2, g3

    def is_junction(self, t, tol=JUNCTION_TOL):
        t = np.asarray(t, dtype=float)
        ends = [self.a, self.b]
        if self.margin > 0:
            ends += [self.t_min, self.t_max]
        return np.any([np.abs(t - e) <= tol for e in ends], axis=0)

    def frame_at(self, t):
        t = float(t)
        pos, T, kappa, dkappa = self.geometry(np.array([t]))
        return Frame(t=t, point=pos[0], T=T[0], N=_rot90(T[0]), kappa=float(kappa[0]),
                     tkappa_prime=float(kappa[0] + t * dkappa[0]),
                     junction=bool(self.is_junction(t)))

    def samples(self, n, extended=True):
        lo, hi = (self.t_min, self.t_max) if extended else (self.a, self.b)
        t = np.linspace(lo, hi, n)
        return t, self.point(t)

    def to_dict(self):
        d = {"kind": self.kind, **self.path.params, "shift": self.shift}
        if self.name != self.kind:
            d["name"] = self.name
        return d


def check_simple(curve, n=1000):
    """Check that the sampled curve ``[a, b]`` has no self-crossings.

    Non-adjacent chords of an ``n``-point polyline are tested pairwise for
    intersection. Returns the minimal distance between sample points whose
    parameters are at least two samples apart; raises ``ValueError`` on a
    crossing.
    """
    t, P = curve.samples(n, extended=False)
    A, B = P[:-1], P[1:]
    m = len(A)
    i, j = np.triu_indices(m, k=2)
    d1, d2 = B[i] - A[i], B[j] - A[j]
    o1 = _cross(d1, A[j] - A[i])
    o2 = _cross(d1, B[j] - A[i])
    o3 = _cross(d2, A[i] - A[j])
    o4 = _cross(d2, B[i] - A[j])
    hit = (o1 * o2 < 0) & (o3 * o4 < 0)
    if np.any(hit):
        k = np.argmax(hit)
        raise ValueError(f"curve self-intersects near t={t[i[k]]:.6g} and t={t[j[k]]:.6g}")
    diff = P[i] - P[j]
    dmin = float(np.sqrt(np.min(np.sum(diff * diff, axis=1)))) if len(i) else np.inf
    if dmin <= 0:
        raise ValueError("curve passes twice through the same point")
    return dmin


def reparametrize_arclength(path, shift=None, name=None):
    """Unit-speed reparametrization of a regular raw path.

    The parameter origin is placed ``shift`` length units from the start of
    the path (default: the midpoint), so that ``a <= 0 <= b``.
    """
    curve = Curve(path, shift=shift, name=name)
    check_simple(curve)
    return curve


def segment(start, end, shift=None, name=None):
    return reparametrize_arclength(LinePath(start, end), shift, name)


def arc(center, radius, theta0, theta1, shift=None, name=None):
    return reparametrize_arclength(CirclePath(center, radius, theta0, theta1), shift, name)


def spline(points, bc="natural", shift=None, name=None):
    return reparametrize_arclength(SplinePath(points, bc), shift, name)


# ---------------------------------------------------------------------------
# curve spec files
# ---------------------------------------------------------------------------

_SPEC_KEYS = {
    "segment": {"start", "end"},
    "arc": {"center", "radius", "theta0", "theta1"},
    "spline": {"points"},
}
_OPTIONAL_KEYS = {"segment": set(), "arc": set(), "spline": {"bc"}}
_COMMON_KEYS = {"kind", "shift", "name"}


def curve_from_dict(spec):
    """Build a curve from a parsed spec dict; unknown keys are rejected."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError("curve spec must be an object with a 'kind' field")
    kind = spec["kind"]
    if kind not in _SPEC_KEYS:
        raise ValueError(f"unknown curve kind {kind!r}; expected one of {sorted(_SPEC_KEYS)}")
    required = _SPEC_KEYS[kind]
    allowed = required | _OPTIONAL_KEYS[kind] | _COMMON_KEYS
    unknown = set(spec) - allowed
    if unknown:
        raise ValueError(f"unknown keys for {kind} curve: {sorted(unknown)}")
    missing = required - set(spec)
    if missing:
        raise ValueError(f"missing keys for {kind} curve: {sorted(missing)}")
    shift, name = spec.get("shift"), spec.get("name")
    if kind == "segment":
        return segment(spec["start"], spec["end"], shift, name)
    if kind == "arc":
        return arc(spec["center"], spec["radius"], spec["theta0"], spec["theta1"], shift, name)
    return spline(spec["points"], spec.get("bc", "natural"), shift, name)


def load_curve(path):
    """Read a JSON curve spec file."""
    with open(Path(path)) as fh:
        spec = json.load(fh)
    if "name" not in spec:
        spec["name"] = Path(path).stem
    return curve_from_dict(spec)


def shipped_curves():
    """Names and paths of the example curves bundled with the package."""
    root = resources.files("tubecert") / "data" / "curves"
    return {Path(p.name).stem: Path(str(p)) for p in sorted(root.iterdir(), key=lambda p: p.name)
            if p.name.endswith(".json")}


def resolve_curve(ref):
    """Load a curve from a file path or the name of a shipped example."""
    path = Path(ref)
    if path.is_file():
        return load_curve(path)
    shipped = shipped_curves()
    if str(ref) in shipped:
        return load_curve(shipped[str(ref)])
    raise FileNotFoundError(f"no curve file {ref!r} and no shipped curve of that name "
                            f"(shipped: {', '.join(shipped)})")
