import io

import numpy as np
import pytest

from tubecert import solver as S
from tubecert.curves import arc, segment
from tubecert.nonlinearity import Nonlinearity
from tubecert.tube import build_chart, read_mesh


@pytest.fixture(scope="module")
def disk():
    return S.disk_mesh(1.0, 0.1)


@pytest.fixture(scope="module")
def arc_tube():
    ch = build_chart(arc([0, 0], 1.0, 0.0, np.pi / 2), 0.5)
    return ch, ch.mesh(0.2, 0.05)


def radial(p, r):
    k = p / (p - 1)
    return (0.5) ** (1 / (p - 1)) * (1 / k) * (1 - r**k)


def test_fixture_meshes(disk):
    sq = S.square_mesh(1.0, 8)
    for m in (disk, sq):
        sp = S.P1Space(m)
        assert np.all(sp.area > 0)
        assert {tuple(sorted(e)) for e in m.topological_boundary()} == \
            {tuple(sorted(e)) for e in m.boundary_edges}
    assert sq.areas.sum() == pytest.approx(1.0)
    assert np.allclose(np.linalg.norm(disk.vertices[disk.boundary_vertices], axis=1), 1.0)


def test_zero_source_gives_zero(disk):
    sol = S.solve_source(disk, 1.5, 0.0)
    assert np.all(sol.nodal_values == 0.0)


@pytest.mark.parametrize("p, tol", [(2.0, 0.01), (1.5, 0.02), (3.0, 0.03)])
def test_disk_source_problem(disk, p, tol):
    sol = S.solve_source(disk, p, 1.0)
    r = np.linalg.norm(disk.vertices, axis=1)
    err = np.max(np.abs(sol.nodal_values - radial(p, r))) / radial(p, 0.0)
    assert sol.converged and err < tol
    assert np.all(sol.nodal_values[disk.boundary_mask] == 0.0)


def test_energy_decreases_along_newton(disk):
    sol = S.solve_source(disk, 1.5, 1.0, continuation=False)
    J = np.array([h[0] for h in sol.history])
    assert np.all(np.diff(J) <= 1e-13 * np.abs(J[:-1]))


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_residual_is_energy_gradient(disk, p):
    sp = S.P1Space(disk)
    f = Nonlinearity.power(4)
    prob = S._Problem(sp, p, 1e-3, f.F, f.f, f.df)
    rng = np.random.default_rng(0)
    u = rng.standard_normal(sp.n) * sp.free
    R = prob.residual(u)
    idx = rng.choice(np.flatnonzero(sp.free), 20, replace=False)
    h = 1e-6
    for i in idx:
        e = np.zeros(sp.n)
        e[i] = h
        fd = (prob.energy(u + e) - prob.energy(u - e)) / (2 * h)
        assert fd == pytest.approx(R[i], rel=1e-5, abs=1e-9)


def test_hessian_matches_residual_derivative(disk):
    sp = S.P1Space(disk)
    f = Nonlinearity.power(4)
    prob = S._Problem(sp, 1.5, 1e-2, f.F, f.f, f.df)
    rng = np.random.default_rng(1)
    u = rng.standard_normal(sp.n) * sp.free
    H, fr = prob.hessian(u)
    v = np.zeros(sp.n)
    v[fr] = rng.standard_normal(len(fr))
    h = 1e-6
    fd = (prob.residual(u + h * v) - prob.residual(u - h * v)) / (2 * h)
    assert np.max(np.abs(fd[fr] - H @ v[fr])) <= 1e-6 * np.max(np.abs(fd[fr]))


def test_nonconvergence_raises(disk):
    with pytest.raises(S.ConvergenceError):
        S.solve_source(disk, 1.2, 1.0, max_iter=1, continuation=False)


def test_nodal_source(disk):
    s = np.ones(disk.n_vertices)
    a = S.solve_source(disk, 2.0, s).nodal_values
    b = S.solve_source(disk, 2.0, 1.0).nodal_values
    assert np.allclose(a, b, atol=1e-15)


def test_semilinear_from_zero_is_trivial(disk):
    sol = S.solve_semilinear(disk, 1.5, Nonlinearity.power(10), np.zeros(disk.n_vertices))
    assert sol.converged and sol.iterations == 0 and sol.u_inf == 0.0


def test_square_mountain_pass_solution():
    m = S.square_mesh(1.0, 32)
    f = Nonlinearity.power(4)
    phi = S.bump(m)
    u0 = S.mountain_pass_scale(m, 2.0, f, phi) * phi
    sol = S.solve_semilinear(m, 2.0, f, u0)
    assert sol.converged and sol.energy > 0
    assert sol.residual_norm <= 1e-8
    assert np.all(sol.nodal_values >= 0) and sol.u_inf > 1


def test_ground_state_matches_newton():
    m = S.square_mesh(1.0, 16)
    f = Nonlinearity.power(4)
    phi = S.bump(m)
    a = S.solve_semilinear(m, 2.0, f, S.mountain_pass_scale(m, 2.0, f, phi) * phi)
    b = S.ground_state(m, 2.0, f)
    assert a.converged and b.converged
    assert np.allclose(a.nodal_values, b.nodal_values, atol=1e-8)


def test_divergence_is_flagged():
    m = S.square_mesh(1.0, 8)
    gelfand = Nonlinearity.function(lambda t: 50 * np.exp(t), lambda t: 50 * np.exp(t))
    sol = S.solve_semilinear(m, 2.0, gelfand, np.zeros(m.n_vertices), blowup=1.5)
    assert sol.diverged and not sol.converged


def test_nehari_scale(arc_tube):
    _, mesh = arc_tube
    sp = S.P1Space(mesh)
    f = Nonlinearity.power(4)
    w = S.bump(mesh)
    c = S.nehari_scale(sp, 1.5, f, w)
    assert sp.dirichlet_energy(c * w, 1.5) == pytest.approx(np.sum(sp.mass * (c * w) * f.f(c * w)),
                                                          rel=1e-10)
    # the mountain-pass scale of a pure power is the Nehari scale
    assert S.mountain_pass_scale(mesh, 1.5, f, w) == pytest.approx(c, rel=1e-9)


def test_identity_for_zero(arc_tube):
    ch, mesh = arc_tube
    zero = S.solve_semilinear(mesh, 1.5, Nonlinearity.power(10), np.zeros(mesh.n_vertices))
    rep = S.pohozaev_residual(zero, ch, 1.5, Nonlinearity.power(10))
    assert rep.lhs == rep.rhs_jacobian == rep.rhs_div == rep.residual == 0.0
    ineq = S.inequality_check(zero, ch, (2, 1.5, 10), Nonlinearity.power(10))
    assert ineq.rhs == 0.0


def test_identity_segment_source():
    ch = build_chart(segment([-1, 0], [1, 0]), 0.2)
    eps = 0.1
    sol = S.solve_source(ch.mesh(eps, eps / 8), 2.0, 1.0)
    rep = S.pohozaev_residual(sol, ch, 2.0, Nonlinearity.constant(1.0))
    assert rep.relative_residual <= 0.1
    assert rep.lhs > 0 and rep.rhs_div > 0


def test_energy_identity(arc_tube):
    ch, mesh = arc_tube
    f = Nonlinearity.power(4)
    sol = S.ground_state(mesh, 1.5, f)
    assert sol.converged
    rep = S.inequality_check(sol, ch, (2, 1.5, 4), f)
    assert rep.energy_gap <= 10 * 1e-10
    # a thick subcritical tube: no sign information is claimed, the value is finite
    assert np.isfinite(rep.rhs) and rep.mu > 0


def test_chart_mismatch(arc_tube):
    _, mesh = arc_tube
    other = build_chart(segment([-1, 0], [1, 0]), 0.3)
    sol = S.solve_source(mesh, 2.0, 1.0)
    with pytest.raises(ValueError, match="do not match"):
        S.pohozaev_residual(sol, other, 2.0, Nonlinearity.constant(1.0))
    with pytest.raises(ValueError, match="not a tube mesh"):
        S.pohozaev_residual(S.solve_source(S.square_mesh(1, 4), 2.0, 1.0), other, 2.0,
                            Nonlinearity.constant(1.0))


def test_solution_export(arc_tube):
    _, mesh = arc_tube
    sol = S.solve_source(mesh, 2.0, 1.0)
    buf = io.StringIO()
    S.write_solution(sol, buf)
    back, extra = read_mesh(io.StringIO(buf.getvalue()))
    assert np.array_equal(extra[:, -1], sol.nodal_values)
    assert np.array_equal(back.triangles, mesh.triangles)
