"""The Pohozaev vector field on a tube and the geometric quantity mu(eps).

In chart coordinates the field is

    v(gamma(t) + r N(t)) = t T(t) (1 - r kappa(t)) + r N(t)

and everything else (divergence, Jacobian quadratic form, mu) is expressed
through the scalar ratio

    rho(t, r) = r [t kappa(t)]' / (1 - r kappa(t)).

All closed forms are evaluated in chart coordinates. Finite differences of
the physical field appear only in :func:`verify_by_finite_differences`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .tube import ChartError, TubeChart

__all__ = [
    "FieldSample",
    "MuResult",
    "MuProfile",
    "ratio",
    "field_arrays",
    "field_value",
    "dv_matrix",
    "dv_normal",
    "dv_tangent",
    "jacobian_form",
    "field_value_nd",
    "jacobian_form_nd",
    "boundary_positivity",
    "mu",
    "mu_profile",
    "verify_by_finite_differences",
]

FD_STEP = 1e-5
_GOLDEN = 0.5 * (np.sqrt(5.0) - 1.0)


def _rot90(v):
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def _check(chart, t, r):
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    tol = 1e-12 * (1.0 + chart.eps_bar1)
    if np.any(np.abs(r) > chart.eps_bar1 + tol):
        raise ChartError(f"|r| exceeds eps_bar1={chart.eps_bar1:.6g}")
    tol_t = 1e-12 * (1.0 + chart.curve.length)
    if np.any(t < chart.t_min - tol_t) or np.any(t > chart.t_max + tol_t):
        raise ChartError(f"t outside [{chart.t_min:.6g}, {chart.t_max:.6g}]")
    return t, r


def ratio(chart, t, r):
    """``rho(t, r) = r [t kappa]' / (1 - r kappa)`` (vectorized)."""
    t, r = _check(chart, t, r)
    _, _, kappa, dkappa = chart.curve.geometry(t)
    return r * (kappa + t * dkappa) / (1.0 - r * kappa)


def field_arrays(chart, t, r):
    """Vectorized ``(v, div_v, rho, T, N, kappa)`` at chart points."""
    t, r = _check(chart, t, r)
    _, T, kappa, dkappa = chart.curve.geometry(t)
    N = _rot90(T)
    jac = 1.0 - r * kappa
    rho = r * (kappa + t * dkappa) / jac
    v = (t * jac)[..., None] * T + r[..., None] * N
    return v, 2.0 - rho, rho, T, N, kappa


@dataclass(frozen=True)
class FieldSample:
    location: tuple
    v: np.ndarray
    div_v: float
    ratio: float
    junction_flag: bool


def field_value(chart: TubeChart, t, r) -> FieldSample:
    v, div, rho, _, _, _ = field_arrays(chart, np.array([t]), np.array([r]))
    return FieldSample(location=(float(t), float(r)), v=v[0], div_v=float(div[0]),
                       ratio=float(rho[0]),
                       junction_flag=bool(chart.curve.is_junction(t, FD_STEP)))


def dv_normal(chart, t, r):
    """``dv[N] = -t kappa T + N``."""
    _, _, _, T, N, kappa = field_arrays(chart, t, r)
    t = np.asarray(t, dtype=float)
    return -(t * kappa)[..., None] * T + N


def dv_tangent(chart, t, r):
    """``dv[T] = (1 - rho) T + t kappa N``."""
    _, _, rho, T, N, kappa = field_arrays(chart, t, r)
    t = np.asarray(t, dtype=float)
    return (1.0 - rho)[..., None] * T + (t * kappa)[..., None] * N


def dv_matrix(chart, t, r):
    """Jacobian matrix of v in physical coordinates, shape ``(..., 2, 2)``."""
    _, _, rho, T, N, kappa = field_arrays(chart, t, r)
    t = np.asarray(t, dtype=float)
    dT = (1.0 - rho)[..., None] * T + (t * kappa)[..., None] * N
    dN = -(t * kappa)[..., None] * T + N
    return dT[..., :, None] * T[..., None, :] + dN[..., :, None] * N[..., None, :]


def jacobian_form(chart, t, r, xi):
    """``dv[xi] . xi = (1 - rho) (xi . T)^2 + (xi . N)^2``."""
    _, _, rho, T, N, _ = field_arrays(chart, t, r)
    xi = np.asarray(xi, dtype=float)
    xt = np.sum(xi * T, axis=-1)
    xn = np.sum(xi * N, axis=-1)
    return (1.0 - rho) * xt**2 + xn**2


def field_value_nd(chart, t, r, y, n):
    """Cylinder field ``(v(t, r), y)`` in R^n and its divergence ``n - rho``."""
    if n < 3:
        raise ValueError("the cylinder field needs n >= 3")
    y = np.asarray(y, dtype=float).reshape(-1)
    if len(y) != n - 2:
        raise ValueError(f"y must have n-2={n - 2} components")
    s = field_value(chart, t, r)
    return np.concatenate([s.v, y]), n - s.ratio


def jacobian_form_nd(chart, t, r, xi, psi):
    """``(1 - rho) xi_T^2 + xi_N^2 + |psi|^2``."""
    psi = np.asarray(psi, dtype=float)
    return jacobian_form(chart, t, r, xi) + np.sum(psi * psi, axis=-1)


# ---------------------------------------------------------------------------
# boundary positivity
# ---------------------------------------------------------------------------

@dataclass
class PositivityReport:
    min_value: float
    location: tuple
    piece: str
    samples: int
    per_piece: dict = field(default_factory=dict)

    @property
    def nonnegative(self):
        return self.min_value >= -1e-12


def _outward_from_tangent(tangent, interior_left=True):
    tangent = tangent / np.linalg.norm(tangent, axis=-1, keepdims=True)
    nu = np.stack([tangent[..., 1], -tangent[..., 0]], axis=-1)
    return nu if interior_left else -nu


def boundary_positivity(chart: TubeChart, eps, samples=10_000, domain="D"):
    """Minimum of ``v . nu`` over sampled boundary points.

    ``domain="D"`` is the flat-capped tube, ``"Omega"`` the tube with rounded
    caps (points within distance eps of the curve). Outward normals are
    obtained from finite differences of the boundary parametrization, not
    from the chart formulas.
    """
    if eps > chart.eps_bar1 * (1 + 1e-12):
        raise ChartError(f"eps={eps:.6g} exceeds eps_bar1={chart.eps_bar1:.6g}")
    a, b, L = chart.a, chart.b, chart.curve.length
    h = 1e-6 * max(1.0, L)
    cap_len = 2 * eps if domain == "D" else np.pi * eps
    total = 2 * L + 2 * cap_len
    n_wall = max(2, int(samples * L / total))
    n_cap = max(2, (samples - 2 * n_wall) // 2)
    results = {}

    tw = np.linspace(a, b, n_wall)
    twh = np.clip(tw, a + h, b - h)
    for sign, name in ((1.0, "wall_plus"), (-1.0, "wall_minus")):
        r = np.full_like(tw, sign * eps)
        tang = (chart.to_physical(twh + h, r) - chart.to_physical(twh - h, r)) / (2 * h)
        # counterclockwise traversal runs +t on r=-eps and -t on r=+eps
        nu = _outward_from_tangent(tang if sign < 0 else -tang)
        v, _, _, _, _, _ = field_arrays(chart, tw, r)
        results[name] = (np.sum(v * nu, axis=1), tw, r)

    if domain == "D":
        rc = np.linspace(-eps, eps, n_cap)
        rch = np.clip(rc, -eps + h, eps - h)
        for tc, name in ((b, "cap_b"), (a, "cap_a")):
            t = np.full_like(rc, tc)
            tang = (chart.to_physical(t, rch + h) - chart.to_physical(t, rch - h)) / (2 * h)
            nu = _outward_from_tangent(tang if tc == b else -tang)
            v, _, _, _, _, _ = field_arrays(chart, t, rc)
            results[name] = (np.sum(v * nu, axis=1), t, rc)
    elif domain == "Omega":
        phi = np.linspace(-0.5 * np.pi, 0.5 * np.pi, n_cap)
        for tc, sgn, name in ((b, 1.0, "cap_b"), (a, -1.0, "cap_a")):
            fr = chart.curve.frame_at(tc)
            nu = sgn * np.cos(phi)[:, None] * fr.T + np.sin(phi)[:, None] * fr.N
            x = fr.point + eps * nu
            t, r, inside = chart.project(x)
            if not np.all(inside):
                raise ChartError("rounded cap leaves the chart domain")
            v, _, _, _, _, _ = field_arrays(chart, t, r)
            results[name] = (np.sum(v * nu, axis=1), t, r)
    else:
        raise ValueError("domain must be 'D' or 'Omega'")

    per_piece = {k: float(np.min(val)) for k, (val, _, _) in results.items()}
    piece = min(per_piece, key=per_piece.get)
    val, t, r = results[piece]
    k = int(np.argmin(val))
    n_total = sum(len(v[0]) for v in results.values())
    return PositivityReport(min_value=float(val[k]), location=(float(t[k]), float(r[k])),
                            piece=piece, samples=n_total, per_piece=per_piece)


# ---------------------------------------------------------------------------
# mu(eps)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MuResult:
    eps: float
    mu: float
    t: float
    r: float


def _golden_max(fun, lo, hi, tol=1e-12, max_iter=200):
    """Golden-section search for a local maximum of ``fun`` on ``[lo, hi]``."""
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = fun(x1), fun(x2)
    for _ in range(max_iter):
        if hi - lo <= tol * (1.0 + abs(lo) + abs(hi)):
            break
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = fun(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = fun(x1)
    return (x1, f1) if f1 >= f2 else (x2, f2)


def mu(chart: TubeChart, eps, grid=(512, 64), refine=5):
    """``mu(eps) = max |rho(t, r)|`` over ``|r| <= eps``, ``t in [a - eps, b + eps]``.

    The maximum is taken on a tensor grid (``grid[0]`` points on ``[a, b]``
    plus the two extension ends, ``grid[1]`` points in r including
    ``+-eps``) and the ``refine`` best distinct grid maxima in t are polished
    by golden-section search at their maximizing r. On the straight
    extensions kappa vanishes and rho is identically zero; at ``t = a, b``
    the interior one-sided value, which dominates, is used.
    """
    if eps <= 0:
        return MuResult(float(eps), 0.0, 0.0, 0.0)
    if eps > chart.eps_bar1 * (1 + 1e-12):
        raise ChartError(f"eps={eps:.6g} exceeds eps_bar1={chart.eps_bar1:.6g}")
    eps = min(float(eps), chart.eps_bar1)
    nt, nr = grid
    a, b = chart.a, chart.b
    tg = np.concatenate([[a - eps], np.linspace(a, b, nt), [b + eps]])
    rg = np.linspace(-eps, eps, max(nr, 2))
    _, _, kappa, dkappa = chart.curve.geometry(tg)
    num = kappa + tg * dkappa
    R = rg[None, :]
    vals = np.abs(R * num[:, None] / (1.0 - R * kappa[:, None]))
    j_best = np.argmax(vals, axis=1)
    row = vals[np.arange(len(tg)), j_best]
    i0 = int(np.argmax(row))
    best = MuResult(eps, float(row[i0]), float(tg[i0]), float(rg[j_best[i0]]))
    if best.mu == 0.0:
        return best

    inner = row[1:-1]
    is_peak = np.r_[True, inner[1:] >= inner[:-1]] & np.r_[inner[:-1] >= inner[1:], True]
    peaks = np.flatnonzero(is_peak) + 1
    peaks = peaks[np.argsort(row[peaks])[::-1][:refine]]
    for i in peaks:
        r_star = float(rg[j_best[i]])
        lo, hi = max(tg[i - 1], a), min(tg[i + 1], b)
        if hi <= lo:
            continue

        def obj(t, r_star=r_star):
            return float(np.abs(ratio(chart, np.array([t]), np.array([r_star]))[0]))

        t_opt, f_opt = _golden_max(obj, lo, hi)
        if f_opt > best.mu:
            best = MuResult(eps, f_opt, float(t_opt), r_star)
    return best


@dataclass
class MuProfile:
    eps_values: np.ndarray
    mu_values: np.ndarray
    argmax_points: np.ndarray

    def write_csv(self, dest):
        """Columns ``eps,mu,argmax_t,argmax_r`` with 17 significant digits."""
        close = False
        if not hasattr(dest, "write"):
            dest = open(dest, "w", newline="")
            close = True
        try:
            w = csv.writer(dest, lineterminator="\n")
            w.writerow(["eps", "mu", "argmax_t", "argmax_r"])
            for e, m, (t, r) in zip(self.eps_values, self.mu_values, self.argmax_points):
                w.writerow(["%.17g" % e, "%.17g" % m, "%.17g" % t, "%.17g" % r])
        finally:
            if close:
                dest.close()


def mu_profile(chart, eps_values, grid=(512, 64)):
    """mu on an increasing list of half-widths.

    The feasible sets nest, so a maximizer found for a smaller eps is also
    feasible for every larger one; the profile carries such witnesses
    forward, which makes it nondecreasing by construction.
    """
    eps_values = np.asarray(eps_values, dtype=float)
    if np.any(np.diff(eps_values) <= 0):
        raise ValueError("eps_values must be strictly increasing")
    mus, pts = [], []
    carry = None
    for e in eps_values:
        res = mu(chart, e, grid)
        m, pt = res.mu, (res.t, res.r)
        if carry is not None:
            m_c = float(np.abs(ratio(chart, np.array([carry[0]]), np.array([carry[1]]))[0]))
            if m_c > m:
                m, pt = m_c, carry
        mus.append(m)
        pts.append(pt)
        carry = pt
    return MuProfile(eps_values, np.array(mus), np.array(pts, dtype=float).reshape(-1, 2))


# ---------------------------------------------------------------------------
# finite-difference self-test
# ---------------------------------------------------------------------------

@dataclass
class FDReport:
    samples: int
    step: float
    max_div_error: float
    max_form_error: float
    max_dvN_error: float
    max_dvT_error: float

    @property
    def max_discrepancy(self):
        return max(self.max_div_error, self.max_form_error,
                   self.max_dvN_error, self.max_dvT_error)


def physical_field(chart, x):
    """The field as a function of physical position (via projection)."""
    t, r, inside = chart.project(x)
    if not np.all(inside):
        raise ChartError("finite-difference stencil left the chart domain")
    return field_arrays(chart, t, r)[0]


def verify_by_finite_differences(chart: TubeChart, eps, samples=1000, step=FD_STEP, seed=0):
    """Compare closed-form divergence and Jacobian against central finite
    differences of the physical field at random interior points."""
    if eps > 0.999 * chart.eps_bar1 * (1 + 1e-12):
        raise ChartError("eps must not exceed 0.999 eps_bar1 for the stencil to fit")
    rng = np.random.default_rng(seed)
    a, b = chart.a, chart.b
    pad = 10 * step
    t = rng.uniform(a + pad, b - pad, samples)
    r = rng.uniform(-eps, eps, samples)
    x = chart.to_physical(t, r)
    J = np.empty((samples, 2, 2))
    for k in range(2):
        e = np.zeros(2)
        e[k] = step
        J[:, :, k] = (physical_field(chart, x + e) - physical_field(chart, x - e)) / (2 * step)
    _, div, rho, T, N, kappa = field_arrays(chart, t, r)
    xi = rng.normal(size=(samples, 2))
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    form_fd = np.einsum("ni,nij,nj->n", xi, J, xi)
    dvN_fd = np.einsum("nij,nj->ni", J, N)
    dvT_fd = np.einsum("nij,nj->ni", J, T)
    return FDReport(
        samples=samples, step=step,
        max_div_error=float(np.max(np.abs(np.trace(J, axis1=1, axis2=2) - div))),
        max_form_error=float(np.max(np.abs(form_fd - jacobian_form(chart, t, r, xi)))),
        max_dvN_error=float(np.max(np.linalg.norm(dvN_fd - dv_normal(chart, t, r), axis=1))),
        max_dvT_error=float(np.max(np.linalg.norm(dvT_fd - dv_tangent(chart, t, r), axis=1))),
    )
