"""Continuous P1 elements on a fitted mesh.

Matrices are assembled over *all* vertices; :func:`apply_dirichlet` then
eliminates the constrained (boundary) vertices.  The diffusion coefficient
is constant per triangle and read from the subdomain tag.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionMismatch
from .measure import TimeMeasure
from .mesh import InterfaceCurve, Mesh
from .sparse import CsrMatrix, csr_from_triplets


def _zero_space_time(x, t=0.0):
    return np.zeros(len(x))


@dataclass(frozen=True)
class ProblemSpec:
    """Data of the parabolic interface problem.

    ``u0(x)``, ``f(x, t)`` and ``dirichlet(x, t)`` take an ``(n, 2)`` array of
    points.  Nonzero ``dirichlet`` data is an extension used for
    manufactured solutions; the model problem has homogeneous data.
    """

    beta1: float
    beta2: float
    T: float
    sigma: TimeMeasure
    bounds: tuple[float, float, float, float] = (-1.0, 1.0, -1.0, 1.0)
    curve: InterfaceCurve | None = None
    u0: Callable = _zero_space_time
    f: Callable = _zero_space_time
    dirichlet: Callable = _zero_space_time

    def __post_init__(self):
        if not (self.beta1 > 0 and self.beta2 > 0):
            raise ValueError("diffusion coefficients must be positive")
        if not self.T > 0:
            raise ValueError("final time must be positive")

    @property
    def beta(self):
        return (self.beta1, self.beta2)


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # barycentric, shape (q, 3)
    weights: np.ndarray  # sum to one
    order: int


def _sym_orbit(a):
    return [(a, a, 1 - 2 * a), (a, 1 - 2 * a, a), (1 - 2 * a, a, a)]


CENTROID = QuadratureRule(np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0]), 1)
ORDER2 = QuadratureRule(np.array(_sym_orbit(1 / 6)), np.full(3, 1 / 3), 2)
# symmetric 6-point rule, exact for degree 4
_A1, _W1 = 0.44594849091596488632, 0.22338158967801146570
_A2, _W2 = 0.091576213509770743460, 0.10995174365532186764
ORDER4 = QuadratureRule(
    np.array(_sym_orbit(_A1) + _sym_orbit(_A2)),
    np.array([_W1] * 3 + [_W2] * 3),
    4,
)


def subdivided(rule: QuadratureRule, levels: int) -> QuadratureRule:
    """Composite rule on the ``4**levels`` red-refined sub-triangles."""
    tris = [np.eye(3)]
    for _ in range(levels):
        nxt = []
        for T in tris:
            a, b, c = T
            ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
            nxt += [np.array(v) for v in ([a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca])]
        tris = nxt
    pts = np.concatenate([rule.points @ T for T in tris])
    w = np.tile(rule.weights, len(tris)) / len(tris)
    return QuadratureRule(pts, w, rule.order)


@dataclass(frozen=True)
class DofMap:
    free: np.ndarray
    constrained: np.ndarray
    vertex_to_dof: np.ndarray
    n_vertices: int = field(default=0)

    @property
    def n_free(self):
        return len(self.free)

    @classmethod
    def from_mesh(cls, mesh: Mesh, constrain_boundary=True):
        mask = mesh.boundary if constrain_boundary else np.zeros(mesh.n_vertices, bool)
        free = np.nonzero(~mask)[0]
        v2d = np.full(mesh.n_vertices, -1, dtype=np.int64)
        v2d[free] = np.arange(len(free))
        return cls(free, np.nonzero(mask)[0], v2d, mesh.n_vertices)

    def extend(self, x_free, constrained_values=None):
        """Full vertex vector from free values plus constrained values (default 0)."""
        out = np.zeros(self.n_vertices)
        out[self.free] = x_free
        if constrained_values is not None:
            out[self.constrained] = constrained_values
        return out


def gradients(mesh: Mesh):
    """Constant gradients of the three barycentric basis functions, shape (m, 3, 2)."""
    p = mesh.vertices[mesh.triangles]
    area2 = 2.0 * mesh.signed_areas
    g = np.empty((mesh.n_triangles, 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        g[:, i, 0] = (p[:, j, 1] - p[:, k, 1]) / area2
        g[:, i, 1] = (p[:, k, 0] - p[:, j, 0]) / area2
    return g


def quadrature_points(mesh: Mesh, rule: QuadratureRule = ORDER4):
    """Physical quadrature points (flattened, triangle-major) and their weights."""
    p = mesh.vertices[mesh.triangles]
    X = np.einsum("qk,mkd->mqd", rule.points, p).reshape(-1, 2)
    W = (mesh.signed_areas[:, None] * rule.weights[None, :]).ravel()
    return X, W


def _assemble(mesh: Mesh, local: np.ndarray) -> CsrMatrix:
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    return csr_from_triplets(mesh.n_vertices, mesh.n_vertices, (rows, cols, local.ravel()))


def triangle_beta(mesh: Mesh, beta) -> np.ndarray:
    b1, b2 = beta
    return np.where(mesh.tags == 1, b1, b2).astype(float)


def local_stiffness(mesh: Mesh, beta=(1.0, 1.0)):
    g = gradients(mesh)
    coef = triangle_beta(mesh, beta) * mesh.signed_areas
    return coef[:, None, None] * np.einsum("mid,mjd->mij", g, g)


def local_mass(mesh: Mesh):
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return mesh.signed_areas[:, None, None] * base[None]


def _beta_of(spec):
    if spec is None:
        return (1.0, 1.0)
    if isinstance(spec, ProblemSpec):
        return spec.beta
    return tuple(spec)


def assemble_stiffness(mesh: Mesh, dofs: DofMap | None = None, spec=None) -> CsrMatrix:
    """Stiffness matrix of ``a(v, w) = int beta grad v . grad w``.

    ``spec`` is a :class:`ProblemSpec` or a ``(beta1, beta2)`` pair.  With
    ``dofs`` the free-free block is returned, otherwise the full matrix.
    """
    A = _assemble(mesh, local_stiffness(mesh, _beta_of(spec)))
    return A if dofs is None else A.submatrix(dofs.free, dofs.free)


def assemble_mass(mesh: Mesh, dofs: DofMap | None = None) -> CsrMatrix:
    M = _assemble(mesh, local_mass(mesh))
    return M if dofs is None else M.submatrix(dofs.free, dofs.free)


def assemble_load(mesh: Mesh, dofs: DofMap | None, g, rule: QuadratureRule = ORDER4) -> np.ndarray:
    """``b_i = int g phi_i`` by ``rule``; ``g`` maps an (n, 2) point array to values."""
    X, W = quadrature_points(mesh, rule)
    vals = np.asarray(g(X), dtype=float).reshape(mesh.n_triangles, -1)
    contrib = mesh.signed_areas[:, None] * np.einsum("mq,q,qk->mk", vals, rule.weights, rule.points)
    b = np.bincount(mesh.triangles.ravel(), weights=contrib.ravel(), minlength=mesh.n_vertices)
    return b if dofs is None else b[dofs.free]


def assemble_flux_load(mesh: Mesh, dofs: DofMap | None, flux, rule: QuadratureRule = ORDER4) -> np.ndarray:
    """``b_i = int flux . grad phi_i``; ``flux(points, tags)`` returns (n, 2) vectors."""
    X, W = quadrature_points(mesh, rule)
    tags = np.repeat(mesh.tags, len(rule.weights))
    F = np.asarray(flux(X, tags), dtype=float).reshape(mesh.n_triangles, -1, 2)
    mean_flux = np.einsum("mqd,q->md", F, rule.weights) * mesh.signed_areas[:, None]
    contrib = np.einsum("md,mid->mi", mean_flux, gradients(mesh))
    b = np.bincount(mesh.triangles.ravel(), weights=contrib.ravel(), minlength=mesh.n_vertices)
    return b if dofs is None else b[dofs.free]


def apply_dirichlet(A: CsrMatrix, b, mesh: Mesh, dofs: DofMap, values=None):
    """Eliminate constrained vertices: returns ``(A_ff, b_f - A_fc g_c)``.

    ``values`` holds the boundary data on ``dofs.constrained`` (or on all
    vertices); ``None`` means homogeneous data.
    """
    b = np.asarray(b, dtype=float)
    if A.shape != (mesh.n_vertices, mesh.n_vertices) or b.shape != (mesh.n_vertices,):
        raise DimensionMismatch(f"expected a full {mesh.n_vertices}-vertex system, got {A.shape} and {b.shape}")
    A_ff = A.submatrix(dofs.free, dofs.free)
    rhs = b[dofs.free].copy()
    if values is not None and len(dofs.constrained):
        values = np.asarray(values, dtype=float)
        if values.shape == (mesh.n_vertices,):
            values = values[dofs.constrained]
        if values.shape != (len(dofs.constrained),):
            raise DimensionMismatch("boundary data does not match the constrained vertices")
        if np.any(values != 0.0):
            rhs -= A.submatrix(dofs.free, dofs.constrained) @ values
    return A_ff, rhs


def boundary_values(mesh: Mesh, dofs: DofMap, g, t=None):
    x = mesh.vertices[dofs.constrained]
    return np.asarray(g(x) if t is None else g(x, t), dtype=float)


def integrate(mesh: Mesh, fn, rule: QuadratureRule = ORDER4) -> float:
    X, W = quadrature_points(mesh, rule)
    return float(W @ np.asarray(fn(X), dtype=float))
