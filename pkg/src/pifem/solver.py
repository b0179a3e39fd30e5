"""Backward Euler in time for the forward problem and its adjoint.

Forward, with ``B = M + dt A`` and ``t_n = n T / N``::

    u^0 = L_h u0
    B u^n = M u^{n-1} + F^n,
    F^n = sum_{t_i in (t_{n-1}, t_n]} w_i b_f(t_i) + m_n b_f(t_n)

where ``b_f(t)`` is the load vector of ``f(., t)`` and ``m_n`` the density
mass of the step.  Backward, with ``psi^N = 0``::

    B psi^{n-1} = M psi^n + dt b_g(t_{n-1})

Because both sweeps use the same symmetric ``B`` they satisfy exactly::

    dt sum_n (b_g(t_{n-1}), u^n) = sum_n (F^n, psi^{n-1}) + (u^0, M psi^0)

which :func:`duality_residual` checks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import (
    ORDER4,
    DofMap,
    ProblemSpec,
    apply_dirichlet,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
)
from .errors import DimensionMismatch, GridMismatch, NotConverged
from .measure import step_mass
from .mesh import Mesh
from .operators import FeFunction, l2_project
from .sparse import cg_solve

SOLVER_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Trajectory:
    """FE coefficient vectors (over all vertices) on a time grid."""

    mesh: Mesh
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(times), self.mesh.n_vertices):
            raise DimensionMismatch(f"values {values.shape} for {len(times)} times and {self.mesh.n_vertices} vertices")
        if len(times) > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("time grid must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def n_steps(self):
        return len(self.times) - 1

    def __getitem__(self, n) -> FeFunction:
        return FeFunction(self.mesh, self.values[n])

    def coeffs_at(self, t):
        """Coefficients linearly interpolated in time."""
        k = int(np.clip(np.searchsorted(self.times, t), 1, len(self.times) - 1))
        t0, t1 = self.times[k - 1], self.times[k]
        s = (t - t0) / (t1 - t0)
        return (1 - s) * self.values[k - 1] + s * self.values[k]

    def evaluate(self, points, t):
        return FeFunction(self.mesh, self.coeffs_at(t)).evaluate(points)

    def write(self, path):
        with open(path, "w") as fh:
            for t, row in zip(self.times, self.values):
                fh.write(" ".join(f"{v:.17g}" for v in (t, *row)) + "\n")

    @classmethod
    def read(cls, path, mesh: Mesh):
        data = np.loadtxt(path, ndmin=2)
        return cls(mesh, data[:, 0], data[:, 1:])


def time_grid(T, n_steps):
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    return np.linspace(0.0, T, n_steps + 1)


def forcing_vectors(spec: ProblemSpec, mesh: Mesh, times):
    """Full-vertex forcing ``F^n`` for every step (index ``n-1`` holds ``F^n``)."""
    out = np.zeros((len(times) - 1, mesh.n_vertices))
    for n in range(1, len(times)):
        atoms, mass = step_mass(spec.sigma, times[n - 1], times[n])
        for t_i, w_i in atoms:
            out[n - 1] += w_i * assemble_load(mesh, None, lambda x, t=t_i: spec.f(x, t), ORDER4)
        if mass != 0.0:
            out[n - 1] += mass * assemble_load(mesh, None, lambda x, t=times[n]: spec.f(x, t), ORDER4)
    return out


class _Stepper:
    """Shared ``M``, ``B = M + dt A`` and their reduced blocks."""

    def __init__(self, spec, mesh, dofs, dt):
        self.mesh, self.dofs = mesh, dofs
        self.M = assemble_mass(mesh)
        self.B = self.M + dt * assemble_stiffness(mesh, None, spec)
        self.B_ff = self.B.submatrix(dofs.free, dofs.free)

    def solve(self, rhs_full, boundary, guess, tol, step):
        _, rhs = apply_dirichlet(self.B, rhs_full, self.mesh, self.dofs, boundary)
        try:
            x, _ = cg_solve(self.B_ff, rhs, tol=tol, x0=guess[self.dofs.free])
        except NotConverged as exc:
            exc.step = step
            raise NotConverged(f"time step {step}: {exc}", exc.x, exc.report, step) from exc
        return self.dofs.extend(x, boundary)


def _dirichlet_at(spec, mesh, dofs, t):
    return np.asarray(spec.dirichlet(mesh.vertices[dofs.constrained], t), dtype=float)


def solve_forward(spec: ProblemSpec, mesh: Mesh, dofs: DofMap | None, n_steps: int, tol=SOLVER_TOL) -> Trajectory:
    dofs = dofs or DofMap.from_mesh(mesh)
    times = time_grid(spec.T, n_steps)
    dt = spec.T / n_steps
    stepper = _Stepper(spec, mesh, dofs, dt)
    F = forcing_vectors(spec, mesh, times)
    values = np.zeros((n_steps + 1, mesh.n_vertices))
    values[0] = l2_project(spec.u0, mesh, dofs, boundary_values=_dirichlet_at(spec, mesh, dofs, 0.0)).coeffs
    for n in range(1, n_steps + 1):
        rhs = stepper.M @ values[n - 1] + F[n - 1]
        values[n] = stepper.solve(rhs, _dirichlet_at(spec, mesh, dofs, times[n]), values[n - 1], tol, n)
    return Trajectory(mesh, times, values)


def solve_backward(g, spec: ProblemSpec, mesh: Mesh, dofs: DofMap | None, n_steps: int, tol=SOLVER_TOL) -> Trajectory:
    """Adjoint sweep from ``psi(T) = 0`` with source ``g(points, t)``; zero boundary data."""
    dofs = dofs or DofMap.from_mesh(mesh)
    times = time_grid(spec.T, n_steps)
    dt = spec.T / n_steps
    stepper = _Stepper(spec, mesh, dofs, dt)
    zero_bc = np.zeros(len(dofs.constrained))
    values = np.zeros((n_steps + 1, mesh.n_vertices))
    for n in range(n_steps, 0, -1):
        b = assemble_load(mesh, None, lambda x, t=times[n - 1]: g(x, t), ORDER4)
        rhs = stepper.M @ values[n] + dt * b
        values[n - 1] = stepper.solve(rhs, zero_bc, values[n], tol, n - 1)
    return Trajectory(mesh, times, values)


def duality_terms(spec: ProblemSpec, g, u: Trajectory, psi: Trajectory):
    """``((g, u_h), <mu, psi_h>, (L_h u0, psi_h(0)))`` in their discrete forms."""
    if u.mesh is not psi.mesh:
        raise GridMismatch("forward and backward trajectories live on different meshes")
    if u.times.shape != psi.times.shape or not np.allclose(u.times, psi.times, rtol=0, atol=1e-14 * spec.T):
        raise GridMismatch("forward and backward time grids differ")
    mesh = u.mesh
    times = u.times
    dt = times[1] - times[0]
    g_u = 0.0
    for n in range(1, len(times)):
        b = assemble_load(mesh, None, lambda x, t=times[n - 1]: g(x, t), ORDER4)
        g_u += dt * (b @ u.values[n])
    F = forcing_vectors(spec, mesh, times)
    mu_psi = float(np.einsum("nv,nv->", F, psi.values[:-1]))
    init = float(u.values[0] @ (assemble_mass(mesh) @ psi.values[0]))
    return float(g_u), mu_psi, init


def duality_residual(spec: ProblemSpec, g, mesh: Mesh, dofs: DofMap | None, n_steps: int, tol=1e-13) -> float:
    """Relative defect of the discrete transposition identity."""
    dofs = dofs or DofMap.from_mesh(mesh)
    u = solve_forward(spec, mesh, dofs, n_steps, tol=tol)
    psi = solve_backward(g, spec, mesh, dofs, n_steps, tol=tol)
    g_u, mu_psi, init = duality_terms(spec, g, u, psi)
    return abs(g_u - mu_psi - init) / max(1.0, abs(g_u))
