"""Lagrange interpolation, L2 projection and Ritz projection onto P1.

All three keep the nodal values of the target function on constrained
(boundary) vertices, so for functions vanishing on the boundary they are
the usual operators onto the H^1_0-conforming space.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import (
    ORDER4,
    DofMap,
    QuadratureRule,
    apply_dirichlet,
    assemble_flux_load,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    gradients,
    quadrature_points,
    subdivided,
)
from .errors import DimensionMismatch, MissingGradient
from .mesh import Mesh
from .sparse import cg_solve

PROJECTION_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class FeFunction:
    """Piecewise linear function given by its values at every mesh vertex."""

    mesh: Mesh
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.mesh.n_vertices,):
            raise DimensionMismatch(f"{c.shape} coefficients for {self.mesh.n_vertices} vertices")
        object.__setattr__(self, "coeffs", c)

    def __call__(self, points):
        return self.evaluate(points)

    def evaluate(self, points):
        tri, bary = self.mesh.locate_points(points)
        return np.einsum("nk,nk->n", bary, self.coeffs[self.mesh.triangles[tri]])

    def cell_gradients(self):
        """Gradient on each triangle, shape (m, 2)."""
        return np.einsum("mi,mid->md", self.coeffs[self.mesh.triangles], gradients(self.mesh))

    def gradient(self, points):
        tri, _ = self.mesh.locate_points(points)
        return self.cell_gradients()[tri]

    def at_quadrature(self, rule: QuadratureRule = ORDER4):
        """Values at the physical quadrature points of its own mesh."""
        return (self.coeffs[self.mesh.triangles] @ rule.points.T).ravel()

    def __sub__(self, other):
        if other.mesh is not self.mesh:
            raise DimensionMismatch("FE functions live on different meshes")
        return FeFunction(self.mesh, self.coeffs - other.coeffs)


def lagrange_interpolate(w, mesh: Mesh) -> FeFunction:
    if isinstance(w, FeFunction) and w.mesh is mesh:
        return FeFunction(mesh, w.coeffs.copy())
    return FeFunction(mesh, np.asarray(w(mesh.vertices), dtype=float))


def _solve_constrained(A_full, b_full, mesh, dofs, boundary, tol):
    A, rhs = apply_dirichlet(A_full, b_full, mesh, dofs, boundary)
    x, _ = cg_solve(A, rhs, tol=tol)
    return FeFunction(mesh, dofs.extend(x, boundary))


def l2_project(w, mesh: Mesh, dofs: DofMap | None = None, tol=PROJECTION_TOL, boundary_values=None) -> FeFunction:
    """Solve ``(L_h w, v) = (w, v)`` for all free ``v``.

    Constrained vertices take ``boundary_values`` if given, else the nodal
    values of ``w``.
    """
    dofs = dofs or DofMap.from_mesh(mesh)
    M = assemble_mass(mesh)
    if isinstance(w, FeFunction) and w.mesh is mesh:
        b = M @ w.coeffs
    else:
        b = assemble_load(mesh, None, w, ORDER4)
    if boundary_values is None:
        boundary_values = w(mesh.vertices[dofs.constrained])
    return _solve_constrained(M, b, mesh, dofs, np.asarray(boundary_values, dtype=float), tol)


def ritz_project(w, mesh: Mesh, dofs: DofMap | None = None, spec=None, grad=None, tol=PROJECTION_TOL) -> FeFunction:
    """Solve ``a(R_h w, v) = a(w, v)`` for all free ``v``.

    ``grad(points)`` supplies the analytic gradient of ``w``.  Without it
    ``w`` must be a :class:`FeFunction`; on a different mesh the weak load is
    integrated with a composite rule and point location.
    """
    dofs = dofs or DofMap.from_mesh(mesh)
    A = assemble_stiffness(mesh, None, spec)
    beta = (1.0, 1.0) if spec is None else (spec.beta if hasattr(spec, "beta") else tuple(spec))
    if grad is not None:
        def flux(x, tags):
            g = np.asarray(grad(x), dtype=float)
            return np.where(tags == 1, beta[0], beta[1])[:, None] * g

        b = assemble_flux_load(mesh, None, flux, ORDER4)
    elif isinstance(w, FeFunction):
        if w.mesh is mesh:
            b = A @ w.coeffs
        else:
            def flux(x, tags):
                return np.where(tags == 1, beta[0], beta[1])[:, None] * w.gradient(x)

            b = assemble_flux_load(mesh, None, flux, subdivided(ORDER4, 2))
    else:
        raise MissingGradient("ritz_project needs an analytic gradient or an FE function")
    boundary = np.asarray(w(mesh.vertices[dofs.constrained]), dtype=float)
    return _solve_constrained(A, b, mesh, dofs, boundary, tol)


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

ERROR_RULE = subdivided(ORDER4, 2)
_LEAF_RULES = {1: subdivided(ORDER4, 1), 2: ORDER4}
CURVE_DEPTH = 8

# barycentric sample points used to detect sub-triangles cut by the curve
_PROBE = np.array(
    [[1, 0, 0], [0, 1, 0], [0, 0, 1], [0.5, 0.5, 0], [0, 0.5, 0.5], [0.5, 0, 0.5], [1 / 3, 1 / 3, 1 / 3]]
)
_CHILDREN = np.array(
    [
        [[1, 0, 0], [0.5, 0.5, 0], [0.5, 0, 0.5]],
        [[0.5, 0.5, 0], [0, 1, 0], [0, 0.5, 0.5]],
        [[0.5, 0, 0.5], [0, 0.5, 0.5], [0, 0, 1]],
        [[0.5, 0.5, 0], [0, 0.5, 0.5], [0.5, 0, 0.5]],
    ]
)


def error_quadrature(mesh: Mesh, rule: QuadratureRule = ERROR_RULE, curve=None, depth=CURVE_DEPTH):
    """Quadrature for errors against functions that kink across ``curve``.

    Returns ``(tri, bary, X, W)``: owning triangle, barycentric coordinates
    in it, physical points and weights.  Without a curve this is ``rule`` on
    every triangle.  With one, sub-triangles that the curve may pass through
    (sign change of the level set at probe points, or a centroid value
    small against the sub-triangle size) are split recursively up to
    ``depth`` times, so the chord/arc slivers of a fitted mesh are resolved.
    Pieces that are not split further are integrated at the resolution of
    :data:`ERROR_RULE`.
    """
    P = mesh.vertices[mesh.triangles]
    area = mesh.signed_areas
    tri_parts, bary_parts, w_parts = [], [], []

    def emit(owner, sub, scale, r=rule):
        # sub: (k, 3, 3) barycentric vertices of sub-triangles in their owner
        b = (r.points @ sub).reshape(-1, 3)
        tri_parts.append(np.repeat(owner, len(r.weights)))
        bary_parts.append(b)
        w_parts.append((area[owner][:, None] * r.weights[None, :] * scale).ravel())

    owner = np.arange(mesh.n_triangles)
    sub = np.broadcast_to(np.eye(3), (mesh.n_triangles, 3, 3))
    if curve is None:
        emit(owner, sub, 1.0)
    else:
        eps = 1e-13 * mesh.diam
        for level in range(depth + 1):
            probe = _PROBE @ sub @ P[owner]
            phi = curve.levelset(probe.reshape(-1, 2)).reshape(len(owner), -1)
            radius = np.linalg.norm(probe[:, :3] - probe[:, 6:], axis=2).max(axis=1)
            cut = (phi.max(axis=1) > eps) & (phi.min(axis=1) < -eps)
            # the level sets are distance-like, so a curve passing through
            # without a sign change at the probes is still caught here
            cut |= np.abs(phi[:, 6]) <= 2.0 * radius
            if level == depth:
                cut[:] = False
            # split pieces keep the resolution of the base rule
            emit(owner[~cut], sub[~cut], 4.0**-level, rule if level == 0 else _LEAF_RULES[min(level, 2)])
            owner = np.repeat(owner[cut], 4)
            sub = (_CHILDREN @ sub[cut][:, None]).reshape(-1, 3, 3)
            if not len(owner):
                break
    tri = np.concatenate(tri_parts)
    bary = np.concatenate(bary_parts)
    X = (bary[:, None, :] @ P[tri])[:, 0]
    return tri, bary, X, np.concatenate(w_parts)


def _values(u: FeFunction, tri, bary):
    return (bary * u.coeffs[u.mesh.triangles[tri]]).sum(axis=1)


def l2_norm(u: FeFunction) -> float:
    return float(np.sqrt(max(u.coeffs @ (assemble_mass(u.mesh) @ u.coeffs), 0.0)))


def h1_seminorm(u: FeFunction, spec=None) -> float:
    """``sqrt(a(u, u))``; with ``spec=None`` the plain Dirichlet seminorm."""
    return float(np.sqrt(max(u.coeffs @ (assemble_stiffness(u.mesh, None, spec) @ u.coeffs), 0.0)))


def h1_norm(u: FeFunction) -> float:
    return float(np.hypot(l2_norm(u), h1_seminorm(u)))


def l2_error(u: FeFunction, w, rule: QuadratureRule = ERROR_RULE, curve=None) -> float:
    """``||u - w||_{L2}`` against an analytic ``w(points)``.

    Pass the interface ``curve`` when ``w`` is only piecewise smooth.
    """
    tri, bary, X, W = error_quadrature(u.mesh, rule, curve)
    e = _values(u, tri, bary) - np.asarray(w(X), dtype=float)
    return float(np.sqrt(W @ (e * e)))


def h1_semi_error(u: FeFunction, grad, rule: QuadratureRule = ERROR_RULE, curve=None) -> float:
    tri, _, X, W = error_quadrature(u.mesh, rule, curve)
    e = u.cell_gradients()[tri] - np.asarray(grad(X), dtype=float)
    return float(np.sqrt(W @ (e * e).sum(axis=1)))


def h1_error(u: FeFunction, w, grad, rule: QuadratureRule = ERROR_RULE, curve=None) -> float:
    tri, bary, X, W = error_quadrature(u.mesh, rule, curve)
    e0 = _values(u, tri, bary) - np.asarray(w(X), dtype=float)
    e1 = u.cell_gradients()[tri] - np.asarray(grad(X), dtype=float)
    return float(np.sqrt(W @ (e0 * e0 + (e1 * e1).sum(axis=1))))


def analytic_l2_norm(mesh: Mesh, w, rule: QuadratureRule = ERROR_RULE, curve=None) -> float:
    _, _, X, W = error_quadrature(mesh, rule, curve)
    v = np.asarray(w(X), dtype=float)
    return float(np.sqrt(W @ (v * v)))


def analytic_h1_norm(mesh: Mesh, w, grad, rule: QuadratureRule = ERROR_RULE, curve=None) -> float:
    _, _, X, W = error_quadrature(mesh, rule, curve)
    v = np.asarray(w(X), dtype=float)
    g = np.asarray(grad(X), dtype=float)
    return float(np.sqrt(W @ (v * v + (g * g).sum(axis=1))))
