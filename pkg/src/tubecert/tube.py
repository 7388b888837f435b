"""Tubular neighborhoods of a curve: the (t, r) chart and structured meshes.

The chart maps ``(t, r) -> gamma(t) + r N(t)`` on the curve extended by the
validated half-width ``eps_bar1``. Its inverse is a closest-point projection.
The meshed domain is the flat-capped tube ``{gamma(t) + r N(t) : a < t < b,
|r| < eps}``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .curves import Curve

__all__ = [
    "ChartError",
    "ProjectionError",
    "TubeChart",
    "TriMesh",
    "TubeMesh",
    "build_chart",
    "write_mesh",
    "read_mesh",
    "BOUNDARY_TAGS",
]

#: boundary tags; ``wall_*`` are the lateral walls r = +-eps, ``cap_*`` the end caps
BOUNDARY_TAGS = ("wall_plus", "wall_minus", "cap_a", "cap_b")

REACH_WARNING = ("eps_bar1 is a sampled reach estimate (curvature bound and pairwise "
                 "sample distances), not a rigorous bound")
REGULARITY_WARNING = ("spline curve is C^2 only: [t kappa]' is piecewise continuous "
                      "and jumps at spline knots")


class ChartError(ValueError):
    """No valid tubular chart at the requested half-width."""


class ProjectionError(RuntimeError):
    """Closest-point projection failed to converge."""


def _rot90(v):
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def _nonlocal_violation(curve, eps, n):
    """Closest pair of samples of ``curve.extend(eps)`` that are further than
    ``pi * eps`` apart in parameter but closer than ``2 eps`` in the plane.

    Returns ``None`` when no such pair exists, else ``(dist, t1, t2)``.
    """
    ext = curve.extend(eps)
    t, P = ext.samples(n)
    pairs = cKDTree(P).query_pairs(2.0 * eps, output_type="ndarray")
    if len(pairs) == 0:
        return None
    far = np.abs(t[pairs[:, 0]] - t[pairs[:, 1]]) > np.pi * eps
    pairs = pairs[far]
    if len(pairs) == 0:
        return None
    d = np.linalg.norm(P[pairs[:, 0]] - P[pairs[:, 1]], axis=1)
    k = np.argmin(d)
    return float(d[k]), float(t[pairs[k, 0]]), float(t[pairs[k, 1]])


def build_chart(curve: Curve, requested_eps: float, eta: float = 0.9, samples: int = 2000):
    """Build a tubular chart with half-width ``eps_bar1 <= requested_eps``.

    ``eps_bar1`` is the requested value capped by ``eta / max|kappa|`` and by a
    sampled global reach estimate: the tube of half-width ``e`` around the
    curve extended by ``e`` is accepted when no two samples more than
    ``pi e`` apart in arclength lie within ``2 e`` of each other. The
    separation ``pi e`` keeps locally curved (but injective) pieces from
    tripping the test while the curvature bound handles local injectivity.
    """
    if requested_eps <= 0:
        raise ChartError("requested half-width must be positive")
    base = curve.restrict()
    t = np.linspace(base.a, base.b, samples)
    kmax = float(np.max(np.abs(base.curvature(t))))
    eps = float(requested_eps)
    limits = {"requested": eps}
    if kmax > 0:
        limits["curvature"] = eta / kmax
        eps = min(eps, eta / kmax)

    hit = _nonlocal_violation(base, eps, samples)
    if hit is not None:
        lo, hi = 0.0, eps
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if _nonlocal_violation(base, mid, samples) is None:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-6 * hi:
                break
        limits["reach"] = lo
        eps = lo
    spacing = (base.length + 2 * eps) / (samples - 1)
    if eps <= spacing:
        raise ChartError(f"no positive eps_bar1 at sampling resolution {spacing:.3g}: "
                         "curve is nearly self-touching")
    warnings = [REACH_WARNING]
    if base.regularity_warning:
        warnings.append(REGULARITY_WARNING)
    return TubeChart(base.extend(eps), eps, warnings=warnings, limits=limits,
                     kappa_max=kmax, samples=samples)


class TubeChart:
    """The coordinate system ``(t, r) <-> R^2`` on the tube of half-width
    ``eps_bar1`` around the extended curve. Immutable after construction."""

    def __init__(self, curve, eps_bar1, warnings=(), limits=None, kappa_max=None, samples=2000):
        self.curve = curve
        self.eps_bar1 = float(eps_bar1)
        self.warnings = list(warnings)
        self.limits = dict(limits or {})
        if kappa_max is None:
            t = np.linspace(curve.a, curve.b, samples)
            kappa_max = float(np.max(np.abs(curve.curvature(t))))
        self.kappa_max = kappa_max
        n = max(samples, int(np.ceil((curve.t_max - curve.t_min) / (0.25 * self.eps_bar1))))
        self._t_samp, P = curve.samples(n)
        self._tree = cKDTree(P)

    a = property(lambda self: self.curve.a)
    b = property(lambda self: self.curve.b)
    t_min = property(lambda self: self.curve.t_min)
    t_max = property(lambda self: self.curve.t_max)

    def __repr__(self):
        return f"TubeChart({self.curve.name!r}, eps_bar1={self.eps_bar1:.6g})"

    def _tol(self):
        return 1e-12 * (1.0 + self.curve.length + self.eps_bar1)

    def to_physical(self, t, r):
        """Forward map ``gamma(t) + r N(t)`` (vectorized)."""
        t = np.asarray(t, dtype=float)
        r = np.asarray(r, dtype=float)
        if np.any(np.abs(r) > self.eps_bar1 + self._tol()):
            raise ChartError(f"|r| exceeds eps_bar1={self.eps_bar1:.6g}")
        try:
            pos, T, _, _ = self.curve.geometry(t)
        except ValueError as exc:
            raise ChartError(str(exc)) from None
        return pos + r[..., None] * _rot90(T)

    def jacobian_det(self, t, r):
        """Chart Jacobian ``1 - r kappa(t)``."""
        return 1.0 - np.asarray(r) * self.curve.curvature(t)

    def project(self, x, max_iter=50):
        """Closest-point projection of points ``x`` (shape ``(..., 2)``).

        Returns ``(t, r, inside)``: ``inside`` marks points of the closed chart
        domain. Raises :class:`ProjectionError` if Newton fails to converge.
        """
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        X = x.reshape(-1, 2)
        _, idx = self._tree.query(X)
        t = self._t_samp[idx].copy()
        tmin, tmax = self.t_min, self.t_max
        active = np.ones(len(t), dtype=bool)
        for _ in range(max_iter):
            pos, T, kappa, _ = self.curve.geometry(t[active])
            d = X[active] - pos
            g = np.sum(d * T, axis=1)
            r = np.sum(d * _rot90(T), axis=1)
            denom = np.maximum(1.0 - r * kappa, 0.1)
            tn = np.clip(t[active] + g / denom, tmin, tmax)
            step = np.abs(tn - t[active])
            t[active] = tn
            done = (step <= 1e-13 * (1.0 + np.abs(tn))) | (np.abs(g) <= 1e-15 * (1.0 + np.abs(r)))
            # stuck on a clamp with the gradient pointing outward
            done |= ((tn == tmin) & (g < 0)) | ((tn == tmax) & (g > 0))
            ids = np.flatnonzero(active)
            active[ids[done]] = False
            if not active.any():
                break
        if active.any():
            bad = X[active][0]
            raise ProjectionError(f"projection did not converge in {max_iter} iterations "
                                  f"near x=({bad[0]:.6g}, {bad[1]:.6g})")
        pos, T, _, _ = self.curve.geometry(t)
        d = X - pos
        r = np.sum(d * _rot90(T), axis=1)
        g = np.sum(d * T, axis=1)
        tol = 1e-9 * (1.0 + self.eps_bar1)
        inside = (np.abs(r) <= self.eps_bar1 + tol) & (np.abs(g) <= tol)
        # a nearer curve sample than the projection means another branch is closer
        dist_samp, _ = self._tree.query(X)
        inside &= np.hypot(g, r) <= dist_samp + tol
        return t.reshape(shape), r.reshape(shape), inside.reshape(shape)

    def to_chart(self, x):
        """Chart coordinates ``(t, r)`` of a single point, or ``None`` if the
        point lies outside the closed chart domain."""
        t, r, inside = self.project(np.asarray(x, dtype=float)[None, :2])
        if not inside[0]:
            return None
        return float(t[0]), float(r[0])

    def contains(self, eps, x, s=0.0, n=2):
        """Membership in the flat-capped tube (n = 2) or in the cylinder over it
        ``{(x1, x2, y) : (x1, x2) in tube, |y| < s}`` (n > 2). Strict
        inequalities throughout."""
        if eps > self.eps_bar1 + self._tol():
            raise ChartError(f"eps={eps:.6g} exceeds eps_bar1={self.eps_bar1:.6g}")
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        if n < 2 or X.shape[1] != n:
            raise ValueError(f"points must have dimension n={n}")
        t, r, inside = self.project(X[:, :2])
        ok = inside & (np.abs(r) < eps) & (t > self.a) & (t < self.b)
        if n > 2:
            ok &= np.linalg.norm(X[:, 2:], axis=1) < s
        return bool(ok[0]) if single else ok

    def mesh(self, eps, target_h):
        """Structured triangulation of the flat-capped tube of half-width eps.

        Chart cells have ``dr <= target_h`` and ``dt (1 + eps kappa_max) <=
        target_h``, so every physical edge is at most ``sqrt(2) target_h``.
        Each cell is split along alternating diagonals.
        """
        if not 0 < eps <= self.eps_bar1 + self._tol():
            raise ChartError(f"eps={eps:.6g} outside (0, eps_bar1={self.eps_bar1:.6g}]")
        if target_h <= 0:
            raise ValueError("target_h must be positive")
        nr = int(np.ceil(2 * eps / target_h - 1e-9))
        if nr < 4:
            raise ValueError(f"target_h={target_h:.3g} too coarse: fewer than 4 cells across "
                             f"a tube of width {2 * eps:.3g}")
        stretch = 1.0 + eps * self.kappa_max
        nt = max(1, int(np.ceil(self.curve.length * stretch / target_h - 1e-9)))
        return self.mesh_counts(eps, nt, nr)

    def mesh_counts(self, eps, nt, nr):
        """Structured mesh with ``nt`` cells along the curve and ``nr`` across."""
        if not 0 < eps <= self.eps_bar1 + self._tol():
            raise ChartError(f"eps={eps:.6g} outside (0, eps_bar1={self.eps_bar1:.6g}]")
        tg = np.linspace(self.a, self.b, nt + 1)
        rg = np.linspace(-eps, eps, nr + 1)
        TT, RR = np.meshgrid(tg, rg, indexing="ij")
        tr = np.stack([TT.ravel(), RR.ravel()], axis=1)
        verts = self.to_physical(tr[:, 0], tr[:, 1])
        tris, bedges, tags = _grid_topology(nt, nr)
        return TubeMesh(vertices=verts, triangles=tris, boundary_edges=bedges,
                        boundary_tags=tags, chart=self, eps=float(eps), tr=tr,
                        shape=(nt, nr))


def _grid_topology(nt, nr):
    """Triangles and tagged boundary edges of an ``nt x nr`` cell grid whose
    vertex ``(i, j)`` has index ``i (nr + 1) + j``."""

    def vid(i, j):
        return i * (nr + 1) + j

    I, J = np.meshgrid(np.arange(nt), np.arange(nr), indexing="ij")
    I, J = I.ravel(), J.ravel()
    v00, v10, v01, v11 = vid(I, J), vid(I + 1, J), vid(I, J + 1), vid(I + 1, J + 1)
    alt = ((I + J) % 2 == 1)[:, None]
    tri_a = np.where(alt, np.stack([v00, v10, v01], 1), np.stack([v00, v10, v11], 1))
    tri_b = np.where(alt, np.stack([v10, v11, v01], 1), np.stack([v00, v11, v01], 1))
    tris = np.empty((2 * len(I), 3), dtype=np.int64)
    tris[0::2], tris[1::2] = tri_a, tri_b

    i, j = np.arange(nt), np.arange(nr)
    edges = [
        (np.stack([vid(i, 0), vid(i + 1, 0)], 1), "wall_minus"),
        (np.stack([vid(nt, j), vid(nt, j + 1)], 1), "cap_b"),
        (np.stack([vid(i + 1, nr), vid(i, nr)], 1)[::-1], "wall_plus"),
        (np.stack([vid(0, j + 1), vid(0, j)], 1)[::-1], "cap_a"),
    ]
    bedges = np.concatenate([e for e, _ in edges])
    tags = np.concatenate([[tag] * len(e) for e, tag in edges]).astype(object)
    return tris, bedges, tags


# ---------------------------------------------------------------------------
# meshes
# ---------------------------------------------------------------------------

@dataclass
class TriMesh:
    """Conforming P1 triangle mesh with tagged, counterclockwise-oriented
    boundary edges (domain on the left)."""

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        self.boundary_edges = np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        self.boundary_tags = np.asarray(self.boundary_tags, dtype=object)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def areas(self):
        P = self.vertices[self.triangles]
        e1, e2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def h(self):
        P = self.vertices[self.triangles]
        lens = [np.linalg.norm(P[:, k] - P[:, (k + 1) % 3], axis=1) for k in range(3)]
        return float(np.max(lens))

    @property
    def boundary_vertices(self):
        return np.unique(self.boundary_edges)

    @property
    def boundary_mask(self):
        m = np.zeros(self.n_vertices, dtype=bool)
        m[self.boundary_edges.ravel()] = True
        return m

    def edge_normals(self):
        """Outward unit normals and lengths of boundary edges."""
        P0 = self.vertices[self.boundary_edges[:, 0]]
        P1 = self.vertices[self.boundary_edges[:, 1]]
        d = P1 - P0
        length = np.linalg.norm(d, axis=1)
        nu = np.stack([d[:, 1], -d[:, 0]], axis=1) / length[:, None]
        return nu, length

    def edge_triangles(self):
        """Index of the triangle adjacent to each boundary edge."""
        lookup = {}
        for k, tri in enumerate(self.triangles):
            for m in range(3):
                lookup[(int(tri[m]), int(tri[(m + 1) % 3]))] = k
        return np.array([lookup[(int(i), int(j))] for i, j in self.boundary_edges])

    def topological_boundary(self):
        """Boundary edges recovered from the triangle list (half-edges
        without a twin), for conformity checks."""
        half = {}
        for tri in self.triangles:
            for m in range(3):
                half[(int(tri[m]), int(tri[(m + 1) % 3]))] = True
        return sorted(e for e in half if (e[1], e[0]) not in half)


@dataclass
class TubeMesh(TriMesh):
    chart: TubeChart = None
    eps: float = 0.0
    tr: np.ndarray = None
    shape: tuple = field(default=(0, 0))

    def refine(self):
        """Uniform refinement: doubles the cell counts in both chart directions."""
        nt, nr = self.shape
        return self.chart.mesh_counts(self.eps, 2 * nt, 2 * nr)


# ---------------------------------------------------------------------------
# plain-text mesh format
# ---------------------------------------------------------------------------

MESH_HEADER = "# tubecert mesh v1"


def _fmt(x):
    return "%.17g" % x


def write_mesh(mesh, dest, values=None):
    """Write ``mesh`` (and optionally one nodal value column) as plain text.

    Layout, one record per line, fields separated by single spaces::

        # tubecert mesh v1
        vertices <N> <ncols>
        <i> <x> <y> [<t> <r>] [<u>]
        triangles <M>
        <i> <j> <k>
        boundary <K>
        <i> <j> <tag>

    ``ncols`` counts the per-vertex fields after the index: 2 for a plain
    mesh, 4 when chart coordinates are present, plus one for ``values``.
    Floats use 17 significant digits (``%.17g``). Lines end with ``\n``.
    """
    cols = [mesh.vertices]
    tr = getattr(mesh, "tr", None)
    if tr is not None:
        cols.append(tr)
    if values is not None:
        cols.append(np.asarray(values, dtype=float)[:, None])
    data = np.hstack(cols)
    out = io.StringIO()
    out.write(MESH_HEADER + "\n")
    out.write(f"vertices {len(data)} {data.shape[1]}\n")
    for i, row in enumerate(data):
        out.write(str(i) + " " + " ".join(_fmt(v) for v in row) + "\n")
    out.write(f"triangles {len(mesh.triangles)}\n")
    for tri in mesh.triangles:
        out.write(f"{tri[0]} {tri[1]} {tri[2]}\n")
    out.write(f"boundary {len(mesh.boundary_edges)}\n")
    for (i, j), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        out.write(f"{i} {j} {tag}\n")
    text = out.getvalue()
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        Path(dest).write_text(text)
    return text


def read_mesh(src):
    """Inverse of :func:`write_mesh`. Returns ``(TriMesh, extra_columns)``
    where ``extra_columns`` holds the per-vertex fields beyond ``x y``."""
    text = src.read() if hasattr(src, "read") else Path(src).read_text()
    lines = text.splitlines()
    if not lines or lines[0] != MESH_HEADER:
        raise ValueError("not a tubecert mesh file")
    pos = 1
    head = lines[pos].split()
    nv, ncol = int(head[1]), int(head[2])
    rows = np.array([[float(v) for v in ln.split()[1:]] for ln in lines[pos + 1:pos + 1 + nv]])
    rows = rows.reshape(nv, ncol)
    pos += 1 + nv
    nt = int(lines[pos].split()[1])
    tris = np.array([[int(v) for v in ln.split()] for ln in lines[pos + 1:pos + 1 + nt]],
                    dtype=np.int64).reshape(nt, 3)
    pos += 1 + nt
    nb = int(lines[pos].split()[1])
    bl = [ln.split() for ln in lines[pos + 1:pos + 1 + nb]]
    bedges = np.array([[int(a), int(b)] for a, b, _ in bl], dtype=np.int64).reshape(nb, 2)
    tags = np.array([tag for _, _, tag in bl], dtype=object)
    mesh = TriMesh(rows[:, :2], tris, bedges, tags)
    return mesh, rows[:, 2:]
