import numpy as np
import pytest

from pifem.analysis import backward_stability_ratio, default_spec, build_levels
from pifem.assembly import ORDER4, DofMap, ProblemSpec, assemble_load, assemble_mass, assemble_stiffness
from pifem.errors import GridMismatch
from pifem.functions import bump, density_from_registry
from pifem.measure import TimeMeasure, total_variation
from pifem.mesh import InterfaceCurve
from pifem.operators import FeFunction, analytic_l2_norm, l2_norm, l2_project
from pifem.solver import (
    Trajectory,
    duality_residual,
    duality_terms,
    solve_backward,
    solve_forward,
)

CIRCLE = InterfaceCurve.circle(0.5)


def profile(x, t=0.0):
    return bump(x)


def dirac_spec(t_atom=0.5, **kw):
    return ProblemSpec(1.0, 10.0, 1.0, TimeMeasure.dirac(t_atom, 1.0), curve=CIRCLE, f=profile, **kw)


def m_norm(mesh, c):
    return float(np.sqrt(c @ (assemble_mass(mesh) @ c)))


def test_energy_decay_without_forcing(level1):
    spec = ProblemSpec(1.0, 10.0, 1.0, TimeMeasure(1.0), curve=CIRCLE, u0=bump)
    u = solve_forward(spec, level1, None, 16)
    e = [m_norm(level1, c) for c in u.values]
    assert e[0] > 0
    assert np.all(np.diff(e) <= 1e-14 * e[0])


def test_causality_and_jump(level1):
    u = solve_forward(dirac_spec(0.5), level1, None, 8)
    norms = np.array([m_norm(level1, c) for c in u.values])
    assert np.all(u.values[u.times < 0.5] == 0.0)
    assert norms[4] > 0
    assert np.all(np.diff(norms[4:]) < 0)


def test_causality_atom_between_nodes(level1):
    u = solve_forward(dirac_spec(0.43), level1, None, 8)
    assert np.all(u.values[u.times < 0.43] == 0.0)
    assert np.any(u.values[4] != 0.0)


def test_forward_matches_dense_oracle(coarse):
    spec = ProblemSpec(
        1.0, 10.0, 1.0, TimeMeasure(1.0, ((0.3, 2.0),), lambda t: 1.0 + t), curve=CIRCLE, u0=bump, f=lambda x, t: np.cos(t) * bump(x) + 0.2
    )
    N = 5
    d = DofMap.from_mesh(coarse)
    u = solve_forward(spec, coarse, d, N, tol=1e-13)
    M = assemble_mass(coarse, d).to_dense()
    A = assemble_stiffness(coarse, d, spec).to_dense()
    dt = 1.0 / N
    B = M + dt * A
    x = l2_project(bump, coarse, d).coeffs[d.free]
    for n in range(1, N + 1):
        t0, t1 = (n - 1) * dt, n * dt
        F = np.zeros(d.n_free)
        if t0 < 0.3 <= t1:
            F += 2.0 * assemble_load(coarse, d, lambda X: spec.f(X, 0.3), ORDER4)
        mass = dt + 0.5 * (t1**2 - t0**2)
        F += mass * assemble_load(coarse, d, lambda X: spec.f(X, t1), ORDER4)
        x = np.linalg.solve(B, M @ x + F)
        assert np.max(np.abs(u.values[n][d.free] - x)) <= 1e-10


def test_backward_zero_source(level1):
    psi = solve_backward(lambda x, t: np.zeros(len(x)), dirac_spec(), level1, None, 8)
    assert not psi.values.any()


def test_backward_terminal_condition(level1):
    psi = solve_backward(lambda x, t: bump(x), dirac_spec(), level1, None, 8)
    assert not psi.values[-1].any() and psi.values[0].any()


def test_time_reversal(level1):
    T = 1.0
    g = lambda x, t: (1 + 3 * t) * bump(x) + t**2
    spec = ProblemSpec(2.0, 2.0, T, TimeMeasure(T), curve=CIRCLE)
    psi = solve_backward(g, spec, level1, None, 10, tol=1e-13)
    fwd_spec = ProblemSpec(2.0, 2.0, T, TimeMeasure.lebesgue(T), curve=CIRCLE, f=lambda x, t: g(x, T - t))
    u = solve_forward(fwd_spec, level1, None, 10, tol=1e-13)
    assert np.max(np.abs(psi.values[::-1] - u.values)) <= 1e-10 * max(1.0, np.abs(u.values).max())


def test_backward_stability_witness():
    spec = default_spec("parabolic_dirac")
    g = lambda x, t: (1 + t) * bump(x)
    ratios = [backward_stability_ratio(g, spec, m, 8 * 4**i) for i, m in enumerate(build_levels(spec, 3))]
    assert all(np.isfinite(ratios))
    assert max(ratios) <= 1.5 * ratios[0]


def test_l2_stability_bound(levels):
    sigma = TimeMeasure(1.0, ((0.25, 1.0), (0.6, -2.0)), density_from_registry("sine", (1.5, 6.0)))
    f = lambda x, t: (1 + t) * bump(x) + 0.3
    spec = ProblemSpec(1.0, 10.0, 1.0, sigma, curve=CIRCLE, f=f, u0=bump)
    ts = np.linspace(0, 1, 101)
    for i, mesh in enumerate(levels[:3]):
        u = solve_forward(spec, mesh, None, 8 * 4**i)
        fmax = max(analytic_l2_norm(mesh, lambda x: f(x, t)) for t in ts)
        bound = l2_norm(u[0]) + fmax * total_variation(sigma)
        assert max(m_norm(mesh, c) for c in u.values) <= bound * 1.01


CONFIGS = {
    "atom": dict(sigma=TimeMeasure.dirac(0.5, 1.0)),
    "atom_off_grid_with_u0": dict(sigma=TimeMeasure(1.0, ((0.33, 1.5),)), u0=bump),
    "density": dict(sigma=TimeMeasure.lebesgue(1.0, 0.7)),
    "mixed": dict(sigma=TimeMeasure(1.0, ((0.2, 1.0), (0.7, -2.0)), lambda t: np.sin(np.pi * t))),
    "atoms_at_ends": dict(sigma=TimeMeasure(1.0, ((0.0, 4.0), (1.0, 1.0))), u0=lambda x: 1 - x[:, 0] ** 2),
}


@pytest.mark.parametrize("name", sorted(CONFIGS))
def test_duality_identity(level1, name):
    kw = CONFIGS[name]
    spec = ProblemSpec(1.0, 10.0, 1.0, kw["sigma"], curve=CIRCLE, f=lambda x, t: (1 + t) * bump(x), u0=kw.get("u0", lambda x: np.zeros(len(x))))
    g = lambda x, t: np.cos(np.pi * t) * (x[:, 0] + 1) * (1 - x[:, 1] ** 2)
    assert duality_residual(spec, g, level1, None, 8) <= 1e-9


def test_duality_trivial_data(level1):
    spec = ProblemSpec(1.0, 10.0, 1.0, TimeMeasure(1.0), curve=CIRCLE)
    g = lambda x, t: bump(x)
    u = solve_forward(spec, level1, None, 8)
    psi = solve_backward(g, spec, level1, None, 8)
    assert duality_terms(spec, g, u, psi) == (0.0, 0.0, 0.0)


def test_duality_scaling(level1):
    spec = dirac_spec()
    g = lambda x, t: (1 + t) * bump(x)
    g10 = lambda x, t: 10 * g(x, t)
    u = solve_forward(spec, level1, None, 8, tol=1e-13)
    t1 = duality_terms(spec, g, u, solve_backward(g, spec, level1, None, 8, tol=1e-13))
    t10 = duality_terms(spec, g10, u, solve_backward(g10, spec, level1, None, 8, tol=1e-13))
    assert abs(t10[0] - 10 * t1[0]) <= 1e-12 * abs(t10[0])
    r1 = duality_residual(spec, g, level1, None, 8)
    r10 = duality_residual(spec, g10, level1, None, 8)
    assert r1 <= 1e-9 and r10 <= 1e-9


def test_grid_mismatch(level1):
    spec = dirac_spec()
    g = lambda x, t: bump(x)
    u = solve_forward(spec, level1, None, 8)
    with pytest.raises(GridMismatch):
        duality_terms(spec, g, u, solve_backward(g, spec, level1, None, 4))


def test_trajectory_round_trip(level1, tmp_path):
    u = solve_forward(dirac_spec(), level1, None, 4)
    u.write(tmp_path / "u.txt")
    v = Trajectory.read(tmp_path / "u.txt", level1)
    assert np.array_equal(u.times, v.times) and np.array_equal(u.values, v.values)
    v.write(tmp_path / "v.txt")
    assert (tmp_path / "u.txt").read_bytes() == (tmp_path / "v.txt").read_bytes()


def test_trajectory_invariants(level1):
    with pytest.raises(ValueError):
        Trajectory(level1, [0.0, 0.5, 0.5], np.zeros((3, level1.n_vertices)))
    u = Trajectory(level1, [0.0, 1.0], np.stack([np.zeros(level1.n_vertices), np.ones(level1.n_vertices)]))
    assert isinstance(u[1], FeFunction)
    assert np.allclose(u.coeffs_at(0.25), 0.25)
