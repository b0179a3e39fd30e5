"""Error norms, convergence tables and refinement studies."""
from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    ORDER4,
    DofMap,
    ProblemSpec,
    apply_dirichlet,
    assemble_load,
    assemble_stiffness,
    quadrature_points,
)
from .errors import GridMismatch, NotConverged
from .functions import KinkSolution, bump, bump_gradient, manufactured_solution, manufactured_source
from .measure import TimeMeasure, total_variation
from .mesh import InterfaceCurve, Mesh, build_interface_mesh, refine_n
from .operators import (
    ERROR_RULE,
    FeFunction,
    h1_error,
    l2_error,
    l2_norm,
    h1_norm,
    l2_project,
    lagrange_interpolate,
    ritz_project,
)
from .solver import Trajectory, solve_backward, solve_forward
from .sparse import cg_solve, csr_from_triplets

STUDY_KINDS = ("interp", "l2proj", "ritz", "elliptic", "parabolic_smooth", "parabolic_dirac")
EXACT_THRESHOLD = 1e-12


# ---------------------------------------------------------------------------
# error norms
# ---------------------------------------------------------------------------


def _time_integrate(times, sq, which):
    if which == "LinfL2":
        return float(np.sqrt(np.max(sq)))
    dt = np.diff(times)
    return float(np.sqrt(np.sum(0.5 * dt * (sq[:-1] + sq[1:]))))


def evaluation_matrix(source: Mesh, points):
    """Sparse matrix mapping vertex values on ``source`` to values at ``points``."""
    tri, bary = source.locate_points(points)
    rows = np.repeat(np.arange(len(points)), 3)
    cols = source.triangles[tri].ravel()
    return csr_from_triplets(len(points), source.n_vertices, (rows, cols, bary.ravel()))


def _cross_mesh_sq_errors(u_h: Trajectory, ref: Trajectory, ref_index, rule):
    """Squared L2 differences at the matched time levels, integrated on the finer mesh."""
    fine, coarse = (ref, u_h) if ref.mesh.n_triangles >= u_h.mesh.n_triangles else (u_h, ref)
    X, W = quadrature_points(fine.mesh, rule)
    E = evaluation_matrix(coarse.mesh, X)
    fine_idx = ref_index if fine is ref else np.arange(len(u_h.times))
    coarse_idx = np.arange(len(u_h.times)) if fine is ref else ref_index
    out = np.empty(len(u_h.times))
    for k, (i_f, i_c) in enumerate(zip(fine_idx, coarse_idx)):
        vf = (fine.values[i_f][fine.mesh.triangles] @ rule.points.T).ravel()
        e = vf - E @ coarse.values[i_c]
        out[k] = W @ (e * e)
    return out


def _match_times(coarse, fine):
    idx = np.searchsorted(fine, coarse)
    idx = np.clip(idx, 0, len(fine) - 1)
    if not np.allclose(fine[idx], coarse, rtol=0, atol=1e-12 * max(1.0, abs(coarse[-1]))):
        raise GridMismatch("reference time grid does not contain the coarse time grid")
    return idx


def error_norms(u_h, reference, which="L2L2", grad=None, t=None, rule=ERROR_RULE, curve=None) -> float:
    """Error of ``u_h`` against an analytic or a (finer) discrete reference.

    ``which`` is one of ``L2L2``, ``LinfL2``, ``L2H1`` (for trajectories)
    and ``L2``, ``H1`` (for a single FE function, or a trajectory at time
    ``t``).  Analytic references are ``reference(points, t)`` for
    trajectories and ``reference(points)`` for FE functions; ``grad`` has the
    same signature and is required for H1 norms.  In time the L2 norm uses
    the trapezoid rule and the Linf norm the maximum over the grid of
    ``u_h``.  Passing the interface ``curve`` resolves kinks of an analytic
    reference inside triangles.
    """
    if isinstance(u_h, Trajectory) and t is not None:
        n = int(np.argmin(np.abs(u_h.times - t)))
        if abs(u_h.times[n] - t) > 1e-12 * max(1.0, abs(t)):
            raise GridMismatch(f"t={t} is not a grid time")
        tn = u_h.times[n]
        u_h = u_h[n]
        if isinstance(reference, Trajectory):
            reference = reference[int(_match_times(np.array([tn]), reference.times)[0])]
        else:
            ref_fn, grad_fn = reference, grad
            reference = lambda x: ref_fn(x, tn)  # noqa: E731
            grad = None if grad_fn is None else (lambda x: grad_fn(x, tn))  # noqa: E731
    if isinstance(u_h, FeFunction):
        if which not in ("L2", "H1"):
            raise ValueError(f"norm {which!r} needs a trajectory")
        if isinstance(reference, FeFunction):
            if reference.mesh is u_h.mesh:
                d = u_h - reference
                return l2_norm(d) if which == "L2" else h1_norm(d)
            if which != "L2":
                raise ValueError("H1 error against an FE function on another mesh is not supported")
            fine, coarse = (reference, u_h) if reference.mesh.n_triangles >= u_h.mesh.n_triangles else (u_h, reference)
            X, W = quadrature_points(fine.mesh, ORDER4)
            e = fine.at_quadrature(ORDER4) - coarse.evaluate(X)
            return float(np.sqrt(W @ (e * e)))
        if which == "L2":
            return l2_error(u_h, reference, rule, curve)
        if grad is None:
            raise ValueError("H1 error needs the reference gradient")
        return h1_error(u_h, reference, grad, rule, curve)

    if which not in ("L2L2", "LinfL2", "L2H1"):
        raise ValueError(f"unknown norm {which!r}")
    times = u_h.times
    if isinstance(reference, Trajectory):
        if which == "L2H1":
            raise ValueError("L2H1 against a discrete reference is not supported")
        idx = _match_times(times, reference.times)
        if reference.mesh is u_h.mesh:
            diff = u_h.values - reference.values[idx]
            sq = np.array([l2_norm(FeFunction(u_h.mesh, d)) ** 2 for d in diff])
        else:
            sq = _cross_mesh_sq_errors(u_h, reference, idx, ORDER4)
        return _time_integrate(times, sq, which)
    sq = np.empty(len(times))
    for n, tn in enumerate(times):
        un = u_h[n]
        if which == "L2H1":
            sq[n] = h1_error(un, lambda x: reference(x, tn), lambda x: grad(x, tn), rule, curve) ** 2
        else:
            sq[n] = l2_error(un, lambda x: reference(x, tn), rule, curve) ** 2
    return _time_integrate(times, sq, which)


# ---------------------------------------------------------------------------
# convergence tables
# ---------------------------------------------------------------------------


def eoc(e_prev, e, h_prev, h):
    if e_prev <= EXACT_THRESHOLD and e <= EXACT_THRESHOLD:
        return "exact"
    if not (e_prev > 0 and e > 0) or math.isnan(e_prev) or math.isnan(e):
        return float("nan")
    return math.log(e_prev / e) / math.log(h_prev / h)


@dataclass
class StudyRow:
    level: int
    h: float
    dt: float
    ndofs: int
    errors: dict
    seconds: float
    status: str = "ok"
    extras: dict = field(default_factory=dict)


@dataclass
class ConvergenceTable:
    kind: str
    norms: list
    rows: list = field(default_factory=list)

    def eocs(self, norm):
        out = [None]
        for prev, row in zip(self.rows, self.rows[1:]):
            out.append(eoc(prev.errors[norm], row.errors[norm], prev.h, row.h))
        return out

    def errors(self, norm):
        return [row.errors[norm] for row in self.rows]

    def to_csv(self, path, timings=True):
        eo = {n: self.eocs(n) for n in self.norms}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["level", "h", "dt", "ndofs", *self.norms, *(f"eoc_{n}" for n in self.norms), "seconds"])
            for i, row in enumerate(self.rows):
                eocs = []
                for n in self.norms:
                    v = eo[n][i]
                    eocs.append("" if v is None else (v if isinstance(v, str) else f"{v:.6f}"))
                w.writerow(
                    [
                        row.level,
                        f"{row.h:.17g}",
                        f"{row.dt:.17g}",
                        row.ndofs,
                        *(f"{row.errors[n]:.17g}" for n in self.norms),
                        *eocs,
                        f"{row.seconds:.3f}" if timings else "0",
                    ]
                )

    def plot_svg(self, out_dir, prefix=None):
        """One log-log SVG per norm with reference slopes h^1 and h^2."""
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        plt.rcParams["svg.hashsalt"] = "pifem"
        prefix = prefix or self.kind
        written = []
        h = np.array([r.h for r in self.rows])
        for norm in self.norms:
            e = np.array(self.errors(norm), dtype=float)
            fig, ax = plt.subplots(figsize=(5, 4))
            ok = np.isfinite(e) & (e > 0)
            ax.loglog(h[ok], e[ok], "o-", label=norm)
            if ok.any():
                i0 = np.nonzero(ok)[0][0]
                for p, style in ((1, "--"), (2, ":")):
                    ax.loglog(h, e[i0] * (h / h[i0]) ** p, style, color="gray", label=f"h^{p}")
            ax.set_xlabel("h")
            ax.set_ylabel(f"{norm} error")
            ax.set_title(f"{self.kind}: {norm}")
            ax.legend()
            path = f"{out_dir}/{prefix}_{norm}.svg"
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            written.append(path)
        return written


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------


def default_spec(kind="parabolic_dirac", beta=(1.0, 10.0), r0=0.5, T=1.0) -> ProblemSpec:
    """Artifact defaults: [-1,1]^2, circle of radius 0.5, beta = (1, 10)."""
    if kind == "parabolic_smooth":
        return ProblemSpec(
            1.0,
            1.0,
            T,
            TimeMeasure.lebesgue(T),
            bounds=(0.0, 1.0, 0.0, 1.0),
            curve=None,
            f=manufactured_source,
        )
    curve = InterfaceCurve.circle(r0)
    if kind == "parabolic_dirac":
        return ProblemSpec(
            beta[0], beta[1], T, TimeMeasure.dirac(T / 2, T), curve=curve, f=lambda x, t: bump(x)
        )
    k = KinkSolution(r0, *beta)
    return ProblemSpec(
        beta[0],
        beta[1],
        T,
        TimeMeasure(T),
        curve=curve,
        u0=k.value,
        f=lambda x, t: k.source(x),
        dirichlet=lambda x, t: k.value(x),
    )


def build_levels(spec: ProblemSpec, levels: int, target_h=0.25):
    base = build_interface_mesh(spec.bounds, spec.curve, target_h)
    return refine_n(base, spec.curve, levels - 1)


def _elliptic_level(kind, mesh, spec, exact):
    value, grad = exact
    dofs = DofMap.from_mesh(mesh)
    if kind == "interp":
        u = lagrange_interpolate(value, mesh)
    elif kind == "l2proj":
        u = l2_project(value, mesh, dofs)
    elif kind == "ritz":
        u = ritz_project(value, mesh, dofs, spec, grad=grad)
    elif kind == "elliptic":
        A = assemble_stiffness(mesh, None, spec)
        b = assemble_load(mesh, None, lambda x: spec.f(x, 0.0))
        g = np.asarray(spec.dirichlet(mesh.vertices[dofs.constrained], 0.0), dtype=float)
        A_ff, rhs = apply_dirichlet(A, b, mesh, dofs, g)
        x, _ = cg_solve(A_ff, rhs, tol=1e-12)
        u = FeFunction(mesh, dofs.extend(x, g))
    else:
        raise ValueError(kind)
    curve = spec.curve
    return {"l2": l2_error(u, value, curve=curve), "h1": h1_error(u, value, grad, curve=curve)}, dofs.n_free, {}


def _run_rows(work, n, threads):
    if threads <= 1:
        return [work(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, range(n)))


def run_study(
    kind,
    levels=4,
    spec: ProblemSpec | None = None,
    *,
    target_h=0.25,
    n_steps0=None,
    time_refine=None,
    exact=None,
    threads=1,
) -> ConvergenceTable:
    """Refinement study of one operator or solver.

    Level ``L`` uses the base mesh refined ``L`` times.  Parabolic kinds use
    ``n_steps0 * time_refine**L`` steps (``time_refine = 4`` keeps
    ``dt ~ h^2``); ``parabolic_smooth`` defaults to ``dt = h^2``.  For
    ``parabolic_dirac`` the reference is the solution on one further level
    with four times as many steps.
    """
    if kind not in STUDY_KINDS:
        raise ValueError(f"unknown study kind {kind!r}")
    if levels < 3:
        raise ValueError("a study needs at least 3 levels")
    spec = spec or default_spec(kind)
    if kind in ("interp", "l2proj", "ritz", "elliptic"):
        if exact is None:
            k = KinkSolution(spec.curve.radii[0] if spec.curve else 0.5, spec.beta1, spec.beta2)
            exact = (k.value, k.gradient)
        meshes = build_levels(spec, levels, target_h)

        def work(i):
            t0 = time.perf_counter()
            try:
                errs, nd, extra = _elliptic_level(kind, meshes[i], spec, exact)
                status = "ok"
            except NotConverged as exc:
                errs, nd, extra, status = {"l2": math.nan, "h1": math.nan}, 0, {}, f"failed: {exc}"
            return StudyRow(i, meshes[i].h_max, 0.0, nd, errs, time.perf_counter() - t0, status, extra)

        table = ConvergenceTable(kind, ["l2", "h1"])
        table.rows = _run_rows(work, levels, threads)
        return table

    if kind == "parabolic_smooth":
        meshes = build_levels(spec, levels, target_h)
        u_exact = exact[0] if exact else manufactured_solution

        def steps(i):
            if n_steps0 is not None:
                return n_steps0 * (time_refine or 4) ** i
            return max(1, round(spec.T / meshes[i].h_max ** 2))

        def work(i):
            t0 = time.perf_counter()
            mesh = meshes[i]
            dofs = DofMap.from_mesh(mesh)
            N = steps(i)
            try:
                traj = solve_forward(spec, mesh, dofs, N)
                errs = {
                    "linfl2": error_norms(traj, u_exact, "LinfL2"),
                    "l2l2": error_norms(traj, u_exact, "L2L2"),
                }
                status = "ok"
            except NotConverged as exc:
                errs, status = {"linfl2": math.nan, "l2l2": math.nan}, f"failed: {exc}"
            return StudyRow(i, mesh.h_max, spec.T / N, dofs.n_free, errs, time.perf_counter() - t0, status)

        table = ConvergenceTable(kind, ["linfl2", "l2l2"])
        table.rows = _run_rows(work, levels, threads)
        return table

    # parabolic_dirac: discrete reference one level finer, dt / 4
    meshes = build_levels(spec, levels + 1, target_h)
    n0 = n_steps0 or 8
    tr = time_refine or 4
    n_ref = n0 * tr ** (levels - 1) * 4
    t0 = time.perf_counter()
    ref = solve_forward(spec, meshes[levels], None, n_ref)
    ref_seconds = time.perf_counter() - t0
    data_norm = _data_norm(spec, meshes[levels])

    def work(i):
        t0 = time.perf_counter()
        mesh = meshes[i]
        dofs = DofMap.from_mesh(mesh)
        N = n0 * tr**i
        try:
            traj = solve_forward(spec, mesh, dofs, N)
            errs = {"l2l2": error_norms(traj, ref, "L2L2"), "linfl2": error_norms(traj, ref, "LinfL2")}
            sup = max(l2_norm(traj[n]) for n in range(N + 1))
            extra = {"linf_l2_norm": sup, "stability_ratio": sup / data_norm}
            status = "ok"
        except NotConverged as exc:
            errs, extra, status = {"l2l2": math.nan, "linfl2": math.nan}, {}, f"failed: {exc}"
        return StudyRow(i, mesh.h_max, spec.T / N, dofs.n_free, errs, time.perf_counter() - t0, status, extra)

    table = ConvergenceTable(kind, ["l2l2", "linfl2"])
    table.rows = _run_rows(work, levels, threads)
    for row in table.rows:
        row.extras["reference_seconds"] = ref_seconds
    return table


def _data_norm(spec: ProblemSpec, mesh: Mesh, n_samples=65):
    """``max_t ||f(t)|| * TV(sigma) + ||u0||`` sampled on ``mesh``."""
    X, W = quadrature_points(mesh, ORDER4)
    ts = np.linspace(0.0, spec.T, n_samples)
    f_sup = max(math.sqrt(W @ np.asarray(spec.f(X, t)) ** 2) for t in ts)
    u0 = math.sqrt(W @ np.asarray(spec.u0(X)) ** 2)
    return f_sup * total_variation(spec.sigma) + u0


def backward_stability_ratio(g, spec: ProblemSpec, mesh: Mesh, n_steps: int):
    """``||psi_h(0)||_1 / ||g||_{L2(L2)}`` for the discrete adjoint problem."""
    psi = solve_backward(g, spec, mesh, None, n_steps)
    X, W = quadrature_points(mesh, ORDER4)
    sq = np.array([W @ np.asarray(g(X, t)) ** 2 for t in psi.times])
    g_norm = _time_integrate(psi.times, sq, "L2L2")
    return h1_norm(psi[0]) / g_norm


def smooth_reference():
    """Exact pair ``(u, grad u)`` of ``sin(pi x) sin(pi y)``."""
    return bump, bump_gradient
