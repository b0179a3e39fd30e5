"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py``; the summary lines are
printed at the end of the session (see ``conftest.py``).
"""
import math
import time

import numpy as np
import pytest

from pifem.analysis import backward_stability_ratio, build_levels, default_spec, run_study
from pifem.assembly import DofMap, ProblemSpec, assemble_load, assemble_mass, assemble_stiffness, apply_dirichlet
from pifem.functions import bump, density_from_registry
from pifem.measure import TimeMeasure
from pifem.mesh import InterfaceCurve, crossing_edge_pairs, validate_mesh
from pifem.operators import l2_project, ritz_project
from pifem.solver import duality_residual, solve_forward
from pifem.sparse import cg_solve

RESULTS = {}


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def _fmt(xs):
    return "[" + ", ".join("-" if x is None else (x if isinstance(x, str) else f"{x:.3f}") for x in xs) + "]"


def _elliptic_criterion(n, kind):
    t0 = time.perf_counter()
    table = run_study(kind, 4, default_spec(kind, beta=(1.0, 10.0)), target_h=0.25, threads=1)
    seconds = time.perf_counter() - t0
    l2, h1 = table.eocs("l2")[1:], table.eocs("h1")[1:]
    ok = (
        all(r.status == "ok" for r in table.rows)
        and all(1.6 <= e <= 2.2 for e in l2)
        and all(0.8 <= e <= 1.15 for e in h1)
        and seconds <= 120
    )
    report(n, ok, f"{kind}: L2 EOC {_fmt(l2)} in [1.6, 2.2], H1 EOC {_fmt(h1)} in [0.8, 1.15], {seconds:.1f}s <= 120s")


def test_criterion_1_ritz_rates():
    _elliptic_criterion(1, "ritz")


def test_criterion_2_interpolation_rates():
    _elliptic_criterion(2, "interp")


@pytest.fixture(scope="module")
def dirac_study():
    t0 = time.perf_counter()
    spec = default_spec("parabolic_dirac")
    table = run_study("parabolic_dirac", 3, spec, target_h=0.25, threads=1)
    return table, time.perf_counter() - t0


def test_criterion_3_dirac_rate(dirac_study):
    table, seconds = dirac_study
    eocs = table.eocs("l2l2")
    last = eocs[-1]
    ok = all(r.status == "ok" for r in table.rows) and last >= 0.85 and seconds <= 600
    report(3, ok, f"L2(L2) EOC {_fmt(eocs[1:])}, last {last:.3f} >= 0.85, {seconds:.1f}s <= 600s")


def test_criterion_4_smooth_parabolic():
    table = run_study("parabolic_smooth", 3, default_spec("parabolic_smooth"), target_h=0.25, threads=1)
    errs, eocs = table.errors("linfl2"), table.eocs("linfl2")[1:]
    dt_ok = all(math.isclose(r.dt, 1.0 / round(1.0 / r.h**2)) for r in table.rows)
    ok = all(b < a for a, b in zip(errs, errs[1:])) and all(1.7 <= e <= 2.2 for e in eocs) and dt_ok
    report(4, ok, f"Linf(L2) errors {_fmt(errs)}, EOC {_fmt(eocs)} in [1.7, 2.2] with dt = h^2")


def test_criterion_5_duality():
    curve = InterfaceCurve.circle(0.5)
    mesh = build_levels(default_spec("parabolic_dirac"), 2)[1]
    f = lambda x, t: (1 + t) * bump(x)
    g = lambda x, t: np.cos(np.pi * t) * (x[:, 0] + 1) * (1 - x[:, 1] ** 2)
    configs = {
        "atom": TimeMeasure.dirac(0.5, 1.0),
        "two atoms": TimeMeasure(1.0, ((0.2, 1.0), (0.7, -2.0))),
        "lebesgue": TimeMeasure.lebesgue(1.0),
        "mixed": TimeMeasure(1.0, ((0.33, 1.5),), density_from_registry("sine")),
        "polynomial + end atoms": TimeMeasure(1.0, ((0.0, 2.0), (1.0, 1.0)), density_from_registry("polynomial", (1, -1, 2))),
    }
    res = {}
    for name, sigma in configs.items():
        u0 = bump if "atom" in name else (lambda x: np.zeros(len(x)))
        spec = ProblemSpec(1.0, 10.0, 1.0, sigma, curve=curve, f=f, u0=u0)
        res[name] = duality_residual(spec, g, mesh, None, 8)
    worst = max(res.values())
    report(5, worst <= 1e-9, f"max residual {worst:.2e} <= 1e-9 over {len(res)} configurations")


def test_criterion_6_stability(dirac_study):
    spec = default_spec("parabolic_dirac")
    meshes = build_levels(spec, 3)
    rng = np.random.default_rng(7)
    worst_coer, worst_cont = np.inf, -np.inf
    for mesh in meshes:
        d = DofMap.from_mesh(mesh)
        A = assemble_stiffness(mesh, d, spec)
        L = assemble_stiffness(mesh, d, (1.0, 1.0))
        lo, hi = min(spec.beta), max(spec.beta)
        for _ in range(20):
            v, w = rng.normal(size=(2, d.n_free))
            vLv, wLw = v @ (L @ v), w @ (L @ w)
            worst_coer = min(worst_coer, (v @ (A @ v)) / (lo * vLv) - 1)
            worst_cont = max(worst_cont, v @ (A @ w) - hi * math.sqrt(vLv * wLw))
    witness_ok = worst_coer >= -1e-12 and worst_cont <= 1e-12

    table, _ = dirac_study
    ratios = [r.extras["stability_ratio"] for r in table.rows]
    forward_ok = max(ratios) <= 1.0

    g = lambda x, t: (1 + t) * bump(x)
    back = [backward_stability_ratio(g, spec, m, 8 * 4**i) for i, m in enumerate(meshes)]
    backward_ok = max(back) <= 1.5 * min(back)
    report(
        6,
        witness_ok and forward_ok and backward_ok,
        f"coercivity slack {worst_coer:.1e}, continuity excess {worst_cont:.1e}; "
        f"Linf(L2)/data {_fmt(ratios)} <= 1; |psi0|_1/|g| {_fmt(back)} within 1.5x",
    )


def test_criterion_7_invariants():
    curve = InterfaceCurve.circle(0.5)
    meshes = build_levels(default_spec("ritz"), 5)
    checks = {}

    ok = True
    for m in meshes[:3]:
        validate_mesh(m, curve)
        ok &= crossing_edge_pairs(m) == 0
        phi = curve.levelset(m.vertices)
        phi[m.interface] = 0.0
        s = np.sign(phi[m.triangles])
        ok &= not np.any((s.max(axis=1) > 0) & (s.min(axis=1) < 0))
    q = [m.quality().quasi_uniformity_ratio for m in meshes]
    checks["mesh"] = ok and max(q) <= 1.5 * q[0]

    mesh = meshes[1]
    d = DofMap.from_mesh(mesh)
    L = l2_project(bump, mesh, d)
    R = ritz_project(bump, mesh, d, (1.0, 10.0), grad=lambda x: np.pi * np.stack(
        [np.cos(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]), np.sin(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1])], axis=1))
    idem = max(
        np.abs(l2_project(L, mesh, d).coeffs - L.coeffs).max(),
        np.abs(ritz_project(R, mesh, d, (1.0, 10.0)).coeffs - R.coeffs).max(),
    )
    orth = np.abs((assemble_load(mesh, None, bump) - assemble_mass(mesh) @ L.coeffs)[d.free]).max()
    checks["projections"] = idem <= 1e-10 and orth <= 1e-9

    spec = default_spec("parabolic_dirac")
    u = solve_forward(spec, mesh, d, 8)
    checks["causality"] = bool(np.all(u.values[u.times < 0.5] == 0.0) and np.any(u.values[4] != 0.0))

    big = meshes[2]
    db = DofMap.from_mesh(big)
    A, b = apply_dirichlet(assemble_stiffness(big, None, (1.0, 10.0)), assemble_load(big, None, bump), big, db)
    x, _ = cg_solve(A, b)
    checks["cg"] = np.abs(x - np.linalg.solve(A.to_dense(), b)).max() <= 1e-8

    failed = [k for k, v in checks.items() if not v]
    report(7, not failed, "invariants " + ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items())
           + "; full-suite runtime is reported at the end of the session")
