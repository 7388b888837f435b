"""P1 finite elements for ``div(|Du|^(p-2) Du) + f(u) = 0``, ``u = 0`` on the
boundary, and numerical evaluation of the generalized Pohozaev identity.

Discrete functional (lumped quadrature for the lower-order term)::

    J(u) = sum_T |T| (1/p) (|Du_T|^2 + delta^2)^(p/2) - sum_i m_i F(u_i)

with ``m_i`` the lumped vertex masses. The ``delta`` regularization keeps
Newton's method well posed where ``Du = 0`` (singular for p < 2,
degenerate for p > 2).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq, minimize_scalar
from scipy.sparse.linalg import spsolve
from scipy.spatial import Delaunay

from .field import field_arrays, jacobian_form, mu
from .nonlinearity import Nonlinearity
from .tube import TriMesh, TubeChart, _grid_topology, write_mesh

__all__ = [
    "ConvergenceError",
    "P1Space",
    "DiscreteSolution",
    "IdentityReport",
    "InequalityReport",
    "solve_source",
    "solve_semilinear",
    "pohozaev_residual",
    "inequality_check",
    "disk_mesh",
    "square_mesh",
    "bump",
    "mountain_pass_scale",
    "nehari_scale",
    "ground_state",
    "write_solution",
]

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# test fixtures
# ---------------------------------------------------------------------------

def disk_mesh(radius=1.0, h=0.05):
    """Delaunay mesh of concentric rings of points, ring spacing ``h``.

    The outer ring lies exactly on the circle; the meshed domain is the
    inscribed polygon.
    """
    K = max(2, int(np.ceil(radius / h)))
    pts = [np.zeros((1, 2))]
    for k in range(1, K + 1):
        rk = radius * k / K
        nk = max(6, int(round(2 * np.pi * k)))
        th = 2 * np.pi * (np.arange(nk) + 0.5 * (k % 2)) / nk
        pts.append(rk * np.stack([np.cos(th), np.sin(th)], axis=1))
    P = np.concatenate(pts)
    tri = Delaunay(P)
    T = _ccw(P, tri.simplices)
    nb = nk
    outer = np.arange(len(P) - nb, len(P))
    edges = np.stack([outer, np.roll(outer, -1)], axis=1)
    return TriMesh(P, T, edges, np.array(["outer"] * len(edges), dtype=object))


def square_mesh(side=1.0, n=32):
    """Structured mesh of ``[0, side]^2`` with ``n`` cells per side."""
    g = np.linspace(0.0, side, n + 1)
    X, Y = np.meshgrid(g, g, indexing="ij")
    P = np.stack([X.ravel(), Y.ravel()], axis=1)
    tris, bedges, tags = _grid_topology(n, n)
    rename = {"wall_minus": "bottom", "cap_b": "right", "wall_plus": "top", "cap_a": "left"}
    tags = np.array([rename[t] for t in tags], dtype=object)
    return TriMesh(P, tris, bedges, tags)


def _ccw(P, T):
    T = np.array(T, dtype=np.int64)
    e1 = P[T[:, 1]] - P[T[:, 0]]
    e2 = P[T[:, 2]] - P[T[:, 0]]
    neg = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0
    T[neg] = T[neg][:, [0, 2, 1]]
    return T


# ---------------------------------------------------------------------------
# discrete operators
# ---------------------------------------------------------------------------

class P1Space:
    """Geometric data of a triangle mesh for P1 assembly."""

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        P = mesh.vertices[mesh.triangles]
        e1, e2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        if np.any(det <= 0):
            raise ValueError("mesh has degenerate or clockwise triangles")
        self.area = 0.5 * det
        # gradients of the barycentric basis functions, shape (M, 3, 2)
        inv = np.stack([np.stack([e2[:, 1], -e2[:, 0]], 1),
                        np.stack([-e1[:, 1], e1[:, 0]], 1)], axis=1) / det[:, None, None]
        g1, g2 = inv[:, 0], inv[:, 1]
        self.grads = np.stack([-g1 - g2, g1, g2], axis=1)
        n = mesh.n_vertices
        self.n = n
        self.mass = np.bincount(mesh.triangles.ravel(), np.repeat(self.area / 3, 3), minlength=n)
        self.free = ~mesh.boundary_mask
        self._rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
        self._cols = np.tile(mesh.triangles, (1, 3)).ravel()
        diam = np.ptp(mesh.vertices, axis=0)
        self.diameter = float(np.hypot(*diam))

    def gradient(self, u):
        return np.einsum("mk,mkd->md", u[self.mesh.triangles], self.grads)

    def scatter(self, per_tri_vertex):
        """Sum an ``(M, 3)`` array of per-vertex contributions to nodes."""
        return np.bincount(self.mesh.triangles.ravel(), per_tri_vertex.ravel(), minlength=self.n)

    def dirichlet_energy(self, u, p):
        g = self.gradient(u)
        return float(np.sum(self.area * np.sum(g * g, axis=1) ** (0.5 * p)))


@dataclass
class _Problem:
    """Regularized p-Laplace functional with a lumped lower-order term
    ``sum_i m_i F_i(u_i)``."""

    space: P1Space
    p: float
    delta: float
    F: object
    f: object
    df: object

    def energy(self, u):
        s = self.space
        g = s.gradient(u)
        w = np.sum(g * g, axis=1) + self.delta**2
        return float(np.sum(s.area * w ** (0.5 * self.p)) / self.p - np.sum(s.mass * self.F(u)))

    def residual(self, u, parts=False):
        s = self.space
        g = s.gradient(u)
        w = np.sum(g * g, axis=1) + self.delta**2
        a = np.ones_like(w) if self.p == 2.0 else w ** (0.5 * self.p - 1.0)
        flux = (s.area * a)[:, None] * g
        stiff = s.scatter(np.einsum("md,mkd->mk", flux, s.grads))
        load = s.mass * self.f(u)
        R = stiff - load
        R[~s.free] = 0.0
        return (R, stiff, load) if parts else R

    def hessian(self, u):
        s = self.space
        g = s.gradient(u)
        w = np.sum(g * g, axis=1) + self.delta**2
        if self.p == 2.0:
            a, b = np.ones_like(w), np.zeros_like(w)
        else:
            with np.errstate(divide="ignore"):
                a = w ** (0.5 * self.p - 1.0)
                b = np.where(w > 0, (self.p - 2.0) * w ** (0.5 * self.p - 2.0), 0.0)
        H = a[:, None, None] * np.eye(2) + b[:, None, None] * g[:, :, None] * g[:, None, :]
        K = np.einsum("m,mid,mde,mje->mij", s.area, s.grads, H, s.grads)
        A = sp.coo_matrix((K.ravel(), (s._rows, s._cols)), shape=(s.n, s.n)).tocsr()
        A = A - sp.diags(s.mass * self.df(u))
        fr = np.flatnonzero(s.free)
        return A[fr][:, fr].tocsc(), fr


# ---------------------------------------------------------------------------
# solutions
# ---------------------------------------------------------------------------

@dataclass
class DiscreteSolution:
    mesh: TriMesh
    nodal_values: np.ndarray
    p: float
    energy: float
    residual_norm: float
    residual_rel: float
    status: str
    iterations: int
    delta: float
    history: list = field(default_factory=list, repr=False)

    @property
    def converged(self):
        return self.status == "converged"

    @property
    def diverged(self):
        return self.status == "diverged"

    @property
    def u_inf(self):
        return float(np.max(np.abs(self.nodal_values)))


def _source_values(space, source):
    """Lumped source: returns per-node constant source values."""
    if isinstance(source, Nonlinearity):
        if source.kind != "constant":
            raise ValueError("source problems take a constant Nonlinearity or a function of x")
        return np.full(space.n, float(source.f(np.zeros(1))[0]))
    if callable(source):
        return np.asarray(source(space.mesh.vertices), dtype=float)
    if np.ndim(source) == 1:
        if len(source) != space.n:
            raise ValueError("nodal source has the wrong length")
        return np.asarray(source, dtype=float)
    return np.full(space.n, float(source))


def _laplace_direction(space, load):
    """Solve the p = 2 problem with right-hand side ``load`` (a descent
    direction for the energy in the H^1 metric)."""
    lap = _Problem(space, 2.0, 0.0, lambda u: 0 * u, lambda u: 0 * u, lambda u: 0 * u)
    H, fr = lap.hessian(np.zeros(space.n))
    w = np.zeros(space.n)
    w[fr] = spsolve(H, load[fr])
    return w


def _converged(R, stiff, load, free, rtol, atol):
    r = float(np.max(np.abs(R[free]), initial=0.0))
    ref = max(float(np.max(np.abs(stiff[free]), initial=0.0)),
              float(np.max(np.abs(load[free]), initial=0.0)))
    rel = r / ref if ref > 0 else 0.0
    return (r <= atol or rel <= rtol), r, rel


def solve_source(mesh, p, source=1.0, rtol=1e-9, atol=1e-15, delta=None, max_iter=200,
                 continuation=None, u0=None):
    """Minimize ``(1/p) int |Du|^p - int s u`` over P1 functions vanishing on
    the boundary by damped Newton with Armijo backtracking on the energy.

    ``delta`` defaults to ``1e-8`` times the mesh diameter. With
    ``continuation`` (the default for ``p != 2``) the problem is first solved
    at ``delta`` values shrinking geometrically from ``1e-2`` times the
    diameter, which saves Newton steps near the degenerate points.
    """
    space = P1Space(mesh)
    s_val = _source_values(space, source)
    delta = 1e-8 * space.diameter if delta is None else float(delta)
    fF = (lambda u: s_val * u, lambda u: s_val, lambda u: np.zeros_like(u))

    if u0 is None:
        u = np.zeros(space.n)
        if np.any(s_val != 0):
            # one gradient-descent step from u = 0, exact line search along
            # the ray: alpha^p D / p - alpha L is minimal at (L / D)^(1/(p-1))
            w = _laplace_direction(space, space.mass * s_val)
            D = space.dirichlet_energy(w, p)
            L = float(np.sum(space.mass * s_val * w))
            u = (L / D) ** (1.0 / (p - 1.0)) * w
    else:
        u = np.array(u0, dtype=float)
    u[~space.free] = 0.0

    deltas = [delta]
    if continuation is None:
        continuation = p != 2.0
    if continuation:
        d = 1e-2 * space.diameter
        deltas = []
        while d > delta:
            deltas.append(d)
            d *= 0.1
        deltas.append(delta)

    total = 0
    history = []
    for d in deltas:
        prob = _Problem(space, p, d, *fF)
        u, it, status, hist = _newton_energy(prob, u, rtol, atol, max_iter)
        total += it
        history += hist
    R, stiff, load = prob.residual(u, parts=True)
    ok, r, rel = _converged(R, stiff, load, space.free, rtol, atol)
    if not ok:
        raise ConvergenceError(f"source solve did not converge after {total} Newton steps "
                               f"(residual {r:.3e}, relative {rel:.3e})")
    return DiscreteSolution(mesh, u, p, prob.energy(u), r, rel, "converged", total, delta, history)


def _newton_energy(prob, u, rtol, atol, max_iter):
    free = prob.space.free
    hist = []
    J = prob.energy(u)
    for it in range(max_iter):
        R, stiff, load = prob.residual(u, parts=True)
        ok, r, rel = _converged(R, stiff, load, free, rtol, atol)
        hist.append((J, r))
        if ok:
            return u, it, "converged", hist
        H, fr = prob.hessian(u)
        du = np.zeros_like(u)
        du[fr] = spsolve(H, -R[fr])
        slope = float(R @ du)
        if slope >= 0:  # not a descent direction; fall back to steepest descent
            du = -R
            slope = float(R @ du)
        alpha = 1.0
        accepted = False
        for _ in range(60):
            un = u + alpha * du
            Jn = prob.energy(un)
            if Jn <= J + 1e-4 * alpha * slope:
                accepted = True
                break
            # energy differences at round-off level: accept on residual decrease
            if abs(Jn - J) <= 1e-13 * max(1.0, abs(J)):
                rn = float(np.max(np.abs(prob.residual(un)[free]), initial=0.0))
                if rn < r:
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            return u, it, "stalled", hist
        u, J = un, Jn
    return u, max_iter, "max-iter", hist


def solve_semilinear(mesh, p, f: Nonlinearity, u0, rtol=1e-10, atol=1e-14, delta=None,
                     max_iter=200, blowup=1e6, stall=50):
    """Damped Newton for ``div(|Du|^(p-2) Du) + f(u) = 0`` from ``u0``.

    Backtracking is on the merit ``|R|^2``, so saddle points (mountain-pass
    solutions) are reachable. The status is ``converged``, ``diverged``
    (non-finite iterates or ``|u|_inf`` beyond ``blowup`` times its initial
    size) or ``not-converged``; the latter is also returned early when the
    best residual has not halved over the last ``stall`` steps.
    """
    space = P1Space(mesh)
    delta = 1e-8 * space.diameter if delta is None else float(delta)
    prob = _Problem(space, p, delta, f.F, f.f, f.df)
    u = np.array(u0, dtype=float)
    u[~space.free] = 0.0
    limit = blowup * max(1.0, float(np.max(np.abs(u))))
    free = space.free
    status = "not-converged"
    hist = []
    it = 0
    for it in range(max_iter + 1):
        R, stiff, load = prob.residual(u, parts=True)
        ok, r, rel = _converged(R, stiff, load, free, rtol, atol)
        hist.append(r)
        if ok:
            status = "converged"
            break
        if it == max_iter:
            break
        if stall and it > stall and min(hist[-stall:]) > 0.5 * min(hist[:-stall]):
            break
        H, fr = prob.hessian(u)
        du = np.zeros_like(u)
        try:
            du[fr] = spsolve(H, -R[fr])
        except RuntimeError:
            break
        if not np.all(np.isfinite(du)):
            status = "diverged"
            break
        # the Newton step is a descent direction for the Euclidean merit
        phi = float(R[free] @ R[free])
        alpha = 1.0
        for _ in range(40):
            un = u + alpha * du
            if not np.all(np.isfinite(un)):
                alpha *= 0.5
                continue
            with np.errstate(over="ignore", invalid="ignore"):
                Rn = prob.residual(un)[free]
                merit = float(Rn @ Rn)
            if merit <= (1 - 1e-4 * alpha) * phi:
                break
            alpha *= 0.5
        else:
            un = u + alpha * du  # tiny step; let the iteration count decide
        u = un
        if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > limit:
            status = "diverged"
            break
    R, stiff, load = prob.residual(u, parts=True)
    _, r, rel = _converged(R, stiff, load, free, rtol, atol)
    energy = prob.energy(u) if np.all(np.isfinite(u)) else float("nan")
    return DiscreteSolution(mesh, u, p, energy, r, rel, status, it, delta, hist)


# ---------------------------------------------------------------------------
# initial data for the nontrivial-solution search
# ---------------------------------------------------------------------------

def bump(mesh, center=None, width=None):
    """Smooth positive bump vanishing on the boundary.

    On tube meshes it is built in chart coordinates around ``t = center``;
    on other meshes ``center`` is a point and the bump is Gaussian in x,
    multiplied by a boundary-distance cutoff.
    """
    chart = getattr(mesh, "chart", None)
    if chart is not None and getattr(mesh, "tr", None) is not None:
        t, r = mesh.tr[:, 0], mesh.tr[:, 1]
        a, b, eps = chart.a, chart.b, mesh.eps
        t0 = 0.5 * (a + b) if center is None else float(center)
        w = (b - a) / 4 if width is None else float(width)
        phi = np.exp(-((t - t0) / w) ** 2) * np.cos(0.5 * np.pi * r / eps)
        phi *= np.sin(np.pi * (t - a) / (b - a))
    else:
        X = mesh.vertices
        c = X.mean(axis=0) if center is None else np.asarray(center, float)
        w = 0.25 * np.ptp(X, axis=0).max() if width is None else float(width)
        phi = np.exp(-np.sum((X - c) ** 2, axis=1) / w**2)
        # cutoff by distance to the boundary vertices
        from scipy.spatial import cKDTree
        d, _ = cKDTree(X[mesh.boundary_vertices]).query(X)
        phi *= np.minimum(1.0, d / (0.5 * w))
    phi[mesh.boundary_mask] = 0.0
    return phi / np.max(np.abs(phi))


def mountain_pass_scale(mesh, p, f: Nonlinearity, phi):
    """Scale ``A > 0`` maximizing the energy ``J(A phi)`` along the ray."""
    space = P1Space(mesh)
    D = space.dirichlet_energy(phi, p)
    if f.kind == "power":
        # J(A phi) = A^p D / p - A^q Q / q
        q = 1.0 / float(f.F(np.array([1.0]))[0])
        Q = float(np.sum(space.mass * np.abs(phi) ** q))
        return (D / Q) ** (1.0 / (q - p))

    def negJ(logA):
        A = np.exp(logA)
        return -(A**p * D / p - np.sum(space.mass * f.F(A * phi)))

    res = minimize_scalar(negJ, bounds=(-20, 20), method="bounded")
    return float(np.exp(res.x))


def nehari_scale(space: P1Space, p, f: Nonlinearity, w):
    """Scale ``c > 0`` putting ``c w`` on the discrete Nehari set
    ``int |D(cw)|^p = sum_i m_i c w_i f(c w_i)``.

    Requires ``f`` superlinear along the ray (a single sign change of the
    Nehari functional in ``log c``).
    """
    D = space.dirichlet_energy(w, p)
    if D <= 0:
        raise ValueError("zero function has no Nehari scaling")

    def g(lc):
        c = np.exp(lc)
        return c**p * D - float(np.sum(space.mass * c * w * f.f(c * w)))

    lo, hi = -40.0, 40.0
    if not (g(lo) > 0 > g(hi)):
        raise ValueError("nonlinearity is not superlinear along this ray")
    return float(np.exp(brentq(g, lo, hi, xtol=1e-14)))


def ground_state(mesh, p, f: Nonlinearity, u0=None, tol=1e-5, max_outer=200, **newton):
    """Nontrivial solution by normalized inverse iteration plus Newton polish.

    Each outer step solves the convex problem ``-div(|Dw|^(p-2) Dw) = f(u)``
    and rescales ``w`` onto the Nehari set. Once successive iterates agree
    to ``tol`` (relative sup norm), :func:`solve_semilinear` finishes the
    job. Plain Newton from a bump is unreliable for ``p < 2``, where the
    merit function has spurious local minima far from the saddle.
    """
    space = P1Space(mesh)
    u = bump(mesh) if u0 is None else np.array(u0, dtype=float)
    u[~space.free] = 0.0
    u *= nehari_scale(space, p, f, u)
    change = np.inf
    for k in range(max_outer):
        w = solve_source(mesh, p, source=f.f(u), u0=u, continuation=(k == 0) and p != 2.0,
                         rtol=1e-8).nodal_values
        un = nehari_scale(space, p, f, w) * w
        change = float(np.max(np.abs(un - u)) / np.max(np.abs(un)))
        u = un
        if change < tol:
            break
    log.debug("inverse iteration: %d steps, change %.2e", k + 1, change)
    return solve_semilinear(mesh, p, f, u, **newton)


# ---------------------------------------------------------------------------
# Pohozaev identity
# ---------------------------------------------------------------------------

@dataclass
class IdentityReport:
    lhs: float
    rhs_jacobian: float
    rhs_div: float
    residual: float
    relative_residual: float
    floor: float = 1e-14

    def to_dict(self):
        return dict(self.__dict__)


def _check_chart(mesh, chart):
    mc = getattr(mesh, "chart", None)
    if mc is None:
        raise ValueError("solution mesh is not a tube mesh")
    if mc is not chart and (mc.curve.to_dict() != chart.curve.to_dict()
                            or mc.eps_bar1 != chart.eps_bar1):
        raise ValueError("mesh and chart do not match")


def _centroid_data(sol, chart):
    mesh = sol.mesh
    space = P1Space(mesh)
    g = space.gradient(sol.nodal_values)
    xc = mesh.vertices[mesh.triangles].mean(axis=1)
    t, r, inside = chart.project(xc)
    if not np.all(inside):
        raise ValueError("triangle centroid outside the chart")
    uc = sol.nodal_values[mesh.triangles].mean(axis=1)
    return space, g, t, r, uc


def pohozaev_residual(sol: DiscreteSolution, chart: TubeChart, p, f: Nonlinearity):
    """Both sides of the generalized Pohozaev identity on a discrete solution.

    Volume integrals use one-point centroid quadrature, the boundary integral
    the midpoint rule per boundary edge with ``Du`` taken from the adjacent
    triangle.
    """
    mesh = sol.mesh
    _check_chart(mesh, chart)
    space, g, t, r, uc = _centroid_data(sol, chart)
    gn = np.linalg.norm(g, axis=1)
    gp = gn**p

    form = jacobian_form(chart, t, r, g)
    with np.errstate(divide="ignore", invalid="ignore"):
        weight = np.where(gn > 0, gn ** (p - 2), 0.0)
    rhs_jac = float(np.sum(space.area * weight * form))
    _, div, _, _, _, _ = field_arrays(chart, t, r)
    rhs_div = float(np.sum(space.area * div * (f.F(uc) - gp / p)))

    nu, length = mesh.edge_normals()
    tri = mesh.edge_triangles()
    mid = 0.5 * (mesh.vertices[mesh.boundary_edges[:, 0]] + mesh.vertices[mesh.boundary_edges[:, 1]])
    tb, rb, inside = chart.project(mid)
    if not np.all(inside):
        raise ValueError("boundary midpoint outside the chart")
    vb = field_arrays(chart, tb, rb)[0]
    lhs = float((1.0 - 1.0 / p) * np.sum(gp[tri] * np.sum(vb * nu, axis=1) * length))

    resid = lhs - rhs_jac - rhs_div
    floor = 1e-14
    rel = abs(resid) / (abs(lhs) + abs(rhs_jac) + abs(rhs_div) + floor)
    return IdentityReport(lhs, rhs_jac, rhs_div, resid, rel, floor)


@dataclass
class InequalityReport:
    eps: float
    mu: float
    grad_p: float
    div_F: float
    rhs: float
    u_f_u: float
    energy_gap: float
    coefficient: float
    bound: float

    @property
    def sign(self):
        return int(np.sign(self.rhs))

    def to_dict(self):
        return dict(self.__dict__, sign=self.sign)


def inequality_check(sol: DiscreteSolution, chart: TubeChart, exponents, f: Nonlinearity):
    """Evaluate ``[1 - n/p + (1 + 1/p) mu] int |Du|^p + int div v F(u)`` and
    the energy identity ``int u f(u) = int |Du|^p``.

    ``exponents`` is an :class:`Exponents` or a plain ``(n, p, q)`` tuple;
    the latter skips the admissibility check so that subcritical control
    runs can be evaluated. ``u_f_u`` uses the solver's lumped quadrature (so it matches the weak
    form exactly up to the solver tolerance); ``bound`` is ``C(eps) int
    |Du|^p``, the quantity that must be nonnegative for any true solution.
    """
    mesh = sol.mesh
    _check_chart(mesh, chart)
    if isinstance(exponents, tuple):
        n, p, q = exponents
    else:
        n, p, q = exponents.n, exponents.p, exponents.q
    space, g, t, r, uc = _centroid_data(sol, chart)
    gp_int = float(np.sum(space.area * np.linalg.norm(g, axis=1) ** p))
    _, div, _, _, _, _ = field_arrays(chart, t, r)
    div_F = float(np.sum(space.area * (div + (n - 2)) * f.F(uc)))
    m = mu(chart, mesh.eps).mu
    rhs = (1 - n / p + (1 + 1 / p) * m) * gp_int + div_F
    u = sol.nodal_values
    ufu = float(np.sum(space.mass * u * f.f(u)))
    gap = abs(ufu - gp_int) / gp_int if gp_int > 0 else abs(ufu)
    C = (1 - n / p + n / q) + (1 + 1 / p + 1 / q) * m
    return InequalityReport(mesh.eps, m, gp_int, div_F, rhs, ufu, gap, C, C * gp_int)


def write_solution(sol: DiscreteSolution, dest):
    """Mesh file with the nodal values appended as the last vertex column."""
    return write_mesh(sol.mesh, dest, values=sol.nodal_values)
