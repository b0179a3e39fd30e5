import csv
import math

import numpy as np
import pytest
from scipy import integrate

from pifem.analysis import (
    ConvergenceTable,
    StudyRow,
    default_spec,
    eoc,
    error_norms,
    run_study,
)
from pifem.assembly import DofMap
from pifem.errors import GridMismatch
from pifem.functions import KinkSolution, bump
from pifem.measure import TimeMeasure
from pifem.operators import FeFunction, lagrange_interpolate, l2_project
from pifem.solver import Trajectory, solve_forward

KINK = KinkSolution(0.5, 1.0, 10.0)


def test_kink_jump_conditions():
    theta = np.linspace(0, 2 * np.pi, 10_000, endpoint=False)
    f_in, f_out = KINK.one_sided_fluxes(theta)
    v_in, v_out = KINK.one_sided_values(theta)
    assert np.max(np.abs(f_in - 0.75)) <= 1e-12 and np.max(np.abs(f_out - 0.75)) <= 1e-12
    assert np.max(np.abs(v_in - v_out)) <= 1e-12


def test_kink_gradient_jumps():
    p = np.array([[0.5 - 1e-9, 0.0], [0.5 + 1e-9, 0.0]])
    g = KINK.gradient(p)
    assert abs(g[0, 0] / g[1, 0] - 10.0) <= 1e-6
    assert np.allclose(KINK.flux(p)[0], KINK.flux(p)[1], atol=1e-8)


def test_kink_source_matches_divergence():
    x = np.array([[0.2, 0.1], [0.7, -0.3]])
    h = 1e-5
    div = np.zeros(2)
    for d in range(2):
        e = np.zeros(2)
        e[d] = h
        div += (KINK.flux(x + e)[:, d] - KINK.flux(x - e)[:, d]) / (2 * h)
    assert np.allclose(-div, KINK.source(x), rtol=1e-8)


def _oracle_sq_error(u, w, r0=0.5):
    """Nested adaptive quadrature with breakpoints where the circle crosses."""
    total = 0.0
    for k, tri in enumerate(u.mesh.triangles):
        P = u.mesh.vertices[tri]
        c = u.coeffs[tri]
        M = np.column_stack([P, np.ones(3)])
        a = np.linalg.solve(M, c)  # u_h = a0 x + a1 y + a2 on this triangle
        xs = sorted(set(P[:, 0]) | {x for x in (-r0, r0) if P[:, 0].min() < x < P[:, 0].max()})

        def y_range(x):
            ys = []
            for i in range(3):
                p, q = P[i], P[(i + 1) % 3]
                if min(p[0], q[0]) - 1e-15 <= x <= max(p[0], q[0]) + 1e-15 and p[0] != q[0]:
                    ys.append(p[1] + (q[1] - p[1]) * (x - p[0]) / (q[0] - p[0]))
            return min(ys), max(ys)

        def inner(x):
            lo, hi = y_range(x)
            if hi - lo <= 0:
                return 0.0
            pts = [s * math.sqrt(r0 * r0 - x * x) for s in (-1, 1) if abs(x) < r0]
            pts = [p for p in pts if lo < p < hi]

            def fy(y):
                e = a[0] * x + a[1] * y + a[2] - float(w(np.array([[x, y]]))[0])
                return e * e

            return integrate.quad(fy, lo, hi, points=pts or None, epsabs=1e-16, epsrel=1e-12, limit=200)[0]

        for x0, x1 in zip(xs, xs[1:]):
            total += integrate.quad(inner, x0, x1, epsabs=1e-16, epsrel=1e-12, limit=200)[0]
    return total


def test_interpolant_error_vs_dense_oracle(coarse):
    u = lagrange_interpolate(KINK.value, coarse)
    got = error_norms(u, KINK.value, "L2", curve=default_spec("ritz").curve)
    ref = math.sqrt(_oracle_sq_error(u, KINK.value))
    assert abs(got - ref) <= 1e-8


def test_error_against_itself_is_zero(level1):
    u = FeFunction(level1, np.random.default_rng(1).normal(size=level1.n_vertices))
    assert error_norms(u, u, "L2") == 0.0
    traj = Trajectory(level1, [0.0, 0.5, 1.0], np.stack([u.coeffs] * 3))
    assert error_norms(traj, traj, "L2L2") == 0.0


def test_zero_vs_one_l2l2(coarse):
    traj = Trajectory(coarse, np.linspace(0, 1, 5), np.zeros((5, coarse.n_vertices)))
    got = error_norms(traj, lambda x, t: np.ones(len(x)), "L2L2")
    assert abs(got - 2.0) <= 1e-9
    assert abs(error_norms(traj, lambda x, t: np.ones(len(x)), "LinfL2") - 2.0) <= 1e-9


def test_grid_mismatch(coarse):
    a = Trajectory(coarse, np.linspace(0, 1, 5), np.zeros((5, coarse.n_vertices)))
    b = Trajectory(coarse, np.linspace(0, 1, 4), np.zeros((4, coarse.n_vertices)))
    with pytest.raises(GridMismatch):
        error_norms(a, b, "L2L2")


def test_cross_mesh_reference(levels):
    spec = default_spec("parabolic_dirac")
    fine = solve_forward(spec, levels[2], None, 16)
    coarse = solve_forward(spec, levels[1], None, 8)
    e = error_norms(coarse, fine, "L2L2")
    assert 0 < e < 0.2
    # the error of the fine solution against itself through the coarse grid vanishes
    assert error_norms(fine, fine, "LinfL2") == 0.0


@pytest.mark.parametrize("which", ["L2", "H1"])
def test_triangle_inequality(levels, which):
    mesh = levels[1]
    spec = default_spec("ritz")
    u = lagrange_interpolate(KINK.value, mesh)
    mid = l2_project(bump, mesh, DofMap.from_mesh(mesh))
    kw = dict(grad=KINK.gradient, curve=spec.curve) if which == "H1" else dict(curve=spec.curve)
    lhs = error_norms(u, KINK.value, which, **kw)
    rhs = error_norms(u, mid, which) + error_norms(mid, KINK.value, which, **kw)
    assert lhs <= rhs + 1e-9


def test_triangle_inequality_trajectories(levels):
    mesh = levels[1]
    spec = default_spec("parabolic_dirac")
    u = solve_forward(spec, mesh, None, 8)
    mid = Trajectory(mesh, u.times, 0.5 * u.values + 0.01)
    ref = lambda x, t: t * bump(x)
    for which in ("L2L2", "LinfL2"):
        assert error_norms(u, ref, which) <= error_norms(u, mid, which) + error_norms(mid, ref, which) + 1e-9


def test_eoc_definition():
    assert abs(eoc(4e-2, 1e-2, 0.2, 0.1) - 2.0) <= 1e-12
    assert eoc(1e-14, 1e-15, 0.2, 0.1) == "exact"


def test_interp_affine_marked_exact(tmp_path):
    affine = lambda x: 1 + x[:, 0] - 2 * x[:, 1]
    grad = lambda x: np.tile([1.0, -2.0], (len(x), 1))
    t = run_study("interp", 3, exact=(affine, grad))
    assert all(e <= 1e-12 for e in t.errors("l2"))
    assert t.eocs("l2")[1:] == ["exact", "exact"]
    t.to_csv(tmp_path / "interp.csv")
    rows = list(csv.reader(open(tmp_path / "interp.csv")))
    assert rows[2][rows[0].index("eoc_l2")] == "exact"


def test_ritz_study_rates():
    t = run_study("ritz", 4)
    assert all(r.status == "ok" for r in t.rows)
    assert all(1.6 <= e <= 2.2 for e in t.eocs("l2")[1:])
    assert all(0.8 <= e <= 1.15 for e in t.eocs("h1")[1:])
    errs = t.errors("l2")
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_elliptic_study_matches_ritz():
    a, b = run_study("elliptic", 3), run_study("ritz", 3)
    assert np.allclose(a.errors("h1"), b.errors("h1"), rtol=1e-3)


def test_study_needs_three_levels():
    with pytest.raises(ValueError):
        run_study("ritz", 2)


def test_csv_and_svg_outputs(tmp_path):
    rows = [
        StudyRow(0, 0.4, 0.0, 10, {"l2": 0.04, "h1": 0.3}, 0.1, "ok"),
        StudyRow(1, 0.2, 0.0, 40, {"l2": 0.01, "h1": 0.15}, 0.2, "ok"),
        StudyRow(2, 0.1, 0.0, 160, {"l2": 0.0025, "h1": 0.075}, 0.3, "ok"),
    ]
    t = ConvergenceTable("ritz", ["l2", "h1"], rows)
    t.to_csv(tmp_path / "a.csv", timings=False)
    t.to_csv(tmp_path / "b.csv", timings=False)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    data = list(csv.DictReader(open(tmp_path / "a.csv")))
    assert list(data[0]) == ["level", "h", "dt", "ndofs", "l2", "h1", "eoc_l2", "eoc_h1", "seconds"]
    assert float(data[2]["eoc_l2"]) == pytest.approx(2.0) and data[2]["seconds"] == "0"
    paths = t.plot_svg(tmp_path)
    assert sorted(p.rsplit("/", 1)[-1] for p in map(str, paths)) == ["ritz_h1.svg", "ritz_l2.svg"]
    svg = open(paths[0]).read()
    assert svg.lstrip().startswith("<?xml") and "</svg>" in svg


def test_failed_level_marked(monkeypatch):
    import pifem.analysis as analysis
    from pifem.errors import NotConverged

    real = analysis.cg_solve

    def flaky(A, b, **kw):
        if A.n_rows > 1000:
            raise NotConverged("forced", None, None)
        return real(A, b, **kw)

    monkeypatch.setattr(analysis, "cg_solve", flaky)
    t = run_study("elliptic", 3)
    assert [r.status == "ok" for r in t.rows] == [True, True, False]
    assert math.isnan(t.errors("l2")[2])
