"""Interface-fitted triangulations of a rectangle.

A mesh is generated from a structured point lattice on the rectangle.
Lattice points closer than half a mesh size to the interface curve are
dropped and replaced by points sampled on the curve with roughly uniform
arc length, and the point cloud is Delaunay-triangulated.  The curve
samples are dense enough that every chord between consecutive samples is
a Gabriel edge, so the chord polygon is made of mesh edges and no
triangle straddles it.

Refinement is the regular red split (every triangle into four through its
edge midpoints), with midpoints of interface edges pushed back onto the
curve.  Consequently successive meshes are nested away from the interface
only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.spatial import Delaunay

from .errors import CurveTouchesBoundary, DegenerateMesh, PointOutsideDomain

BOUNDARY_FLAG = 1
INTERFACE_FLAG = 2


# ---------------------------------------------------------------------------
# Interface curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InterfaceCurve:
    """Closed C^2 curve bounding the inner subdomain (levelset < 0 inside).

    ``kind`` is ``"circle"``, ``"ellipse"`` or ``"custom"``.  Custom curves
    need a vectorised ``levelset`` and a periodic parameterisation
    ``param(s)`` for ``s`` in ``[0, 1)``.
    """

    kind: str
    center: tuple[float, float] = (0.0, 0.0)
    radii: tuple[float, ...] = (0.5,)
    custom_levelset: Callable[[np.ndarray], np.ndarray] | None = None
    custom_param: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in ("circle", "ellipse", "custom"):
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if self.kind == "custom":
            if self.custom_levelset is None or self.custom_param is None:
                raise ValueError("custom curves need custom_levelset and custom_param")
        elif any(r <= 0 for r in self.radii):
            raise ValueError("radii must be positive")

    @classmethod
    def circle(cls, radius, center=(0.0, 0.0)):
        return cls("circle", tuple(map(float, center)), (float(radius),))

    @classmethod
    def ellipse(cls, a, b, center=(0.0, 0.0)):
        return cls("ellipse", tuple(map(float, center)), (float(a), float(b)))

    @classmethod
    def custom(cls, levelset, param):
        return cls("custom", custom_levelset=levelset, custom_param=param)

    @property
    def _ab(self):
        return (self.radii[0], self.radii[0]) if self.kind == "circle" else self.radii[:2]

    def levelset(self, p):
        """Signed value, negative inside; the signed distance for circles."""
        p = np.asarray(p, dtype=float)
        if self.kind == "custom":
            return np.asarray(self.custom_levelset(p), dtype=float)
        d = p - np.asarray(self.center)
        if self.kind == "circle":
            return np.hypot(d[..., 0], d[..., 1]) - self.radii[0]
        a, b = self._ab
        # scaled so that it approximates the signed distance near the curve
        return 0.5 * min(a, b) * ((d[..., 0] / a) ** 2 + (d[..., 1] / b) ** 2 - 1.0)

    def param(self, s):
        """Point on the curve at parameter ``s`` (period 1)."""
        s = np.asarray(s, dtype=float)
        if self.kind == "custom":
            return np.asarray(self.custom_param(s), dtype=float)
        a, b = self._ab
        th = 2.0 * np.pi * s
        return np.stack([self.center[0] + a * np.cos(th), self.center[1] + b * np.sin(th)], axis=-1)

    def project(self, p):
        """Nearest point on the curve for each row of ``p``."""
        p = np.atleast_2d(np.asarray(p, dtype=float))
        if self.kind == "circle":
            d = p - np.asarray(self.center)
            r = np.hypot(d[:, 0], d[:, 1])
            r = np.where(r == 0.0, 1.0, r)
            th = np.arctan2(d[:, 1], d[:, 0])
            out = np.empty_like(p)
            out[:, 0] = self.center[0] + self.radii[0] * np.cos(th)
            out[:, 1] = self.center[1] + self.radii[0] * np.sin(th)
            return out
        s = self._nearest_param(p)
        return self.param(s)

    def _nearest_param(self, p):
        n_coarse = 512
        grid = np.arange(n_coarse) / n_coarse
        samples = self.param(grid)
        d2 = ((p[:, None, :] - samples[None, :, :]) ** 2).sum(axis=2)
        s = grid[np.argmin(d2, axis=1)]
        eps = 1e-6
        # Newton on the squared distance with central-difference derivatives
        for _ in range(30):
            q = self.param(s)
            dq = (self.param(s + eps) - self.param(s - eps)) / (2 * eps)
            ddq = (self.param(s + eps) - 2 * q + self.param(s - eps)) / eps**2
            r = q - p
            g = (r * dq).sum(axis=1)
            hss = (dq * dq).sum(axis=1) + (r * ddq).sum(axis=1)
            hss = np.where(hss > 0, hss, (dq * dq).sum(axis=1))
            step = np.clip(g / hss, -0.5 / n_coarse, 0.5 / n_coarse)
            s = s - step
            if np.all(np.abs(step) < 1e-15):
                break
        return np.mod(s, 1.0)

    def dense_samples(self, n=4096):
        return self.param(np.arange(n) / n)

    @cached_property
    def perimeter(self):
        pts = self.dense_samples()
        return float(np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1).sum())

    @cached_property
    def min_curvature_radius(self):
        if self.kind == "circle":
            return self.radii[0]
        if self.kind == "ellipse":
            a, b = self._ab
            return min(a, b) ** 2 / max(a, b)
        n = 4096
        s = np.arange(n) / n
        h = 1.0 / n
        d1 = (self.param(s + h) - self.param(s - h)) / (2 * h)
        d2 = (self.param(s + h) - 2 * self.param(s) + self.param(s - h)) / h**2
        cross = np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        speed = np.hypot(d1[:, 0], d1[:, 1])
        kappa = cross / speed**3
        return float(1.0 / kappa.max())

    def sample_by_arclength(self, n):
        """``n`` points on the curve, equally spaced in arc length."""
        m = max(4096, 16 * n)
        s = np.arange(m + 1) / m
        pts = self.param(s)
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        target = np.arange(n) / n * cum[-1]
        s_t = np.interp(target, cum, s)
        return self.param(s_t)


# ---------------------------------------------------------------------------
# Mesh container
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QualityReport:
    h_max: float
    h_min: float
    min_angle: float
    quasi_uniformity_ratio: float
    n_vertices: int
    n_triangles: int
    n_interface_edges: int


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation with subdomain tags (1 inside, 2 outside)."""

    vertices: np.ndarray
    triangles: np.ndarray
    tags: np.ndarray
    boundary: np.ndarray
    interface: np.ndarray
    bounds: tuple[float, float, float, float]

    def __post_init__(self):
        for name in ("vertices", "triangles", "tags", "boundary", "interface"):
            getattr(self, name).setflags(write=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def diam(self):
        x0, x1, y0, y1 = self.bounds
        return math.hypot(x1 - x0, y1 - y0)

    @property
    def domain_area(self):
        x0, x1, y0, y1 = self.bounds
        return (x1 - x0) * (y1 - y0)

    @cached_property
    def signed_areas(self):
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def edge_lengths(self):
        p = self.vertices[self.triangles]
        return np.stack(
            [np.linalg.norm(p[:, (k + 1) % 3] - p[:, k], axis=1) for k in range(3)], axis=1
        )

    @cached_property
    def h_max(self):
        return float(self.edge_lengths.max())

    @cached_property
    def edges(self):
        """Unique edges (sorted vertex pairs) and the map triangle -> 3 edge ids.

        Local edge k of a triangle joins local vertices k and k+1.
        """
        t = self.triangles
        all_e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        all_e.sort(axis=1)
        uniq, inv = np.unique(all_e, axis=0, return_inverse=True)
        tri_edges = inv.reshape(3, -1).T
        return uniq, tri_edges

    @cached_property
    def edge_triangle_count(self):
        uniq, tri_edges = self.edges
        return np.bincount(tri_edges.ravel(), minlength=len(uniq))

    @cached_property
    def interface_edges(self):
        """Edges shared by one triangle of each subdomain (the chord polygon)."""
        uniq, tri_edges = self.edges
        n = len(uniq)
        has1 = np.zeros(n, bool)
        has2 = np.zeros(n, bool)
        for k in range(3):
            has1[tri_edges[self.tags == 1, k]] = True
            has2[tri_edges[self.tags == 2, k]] = True
        return uniq[has1 & has2]

    @cached_property
    def interface_edge_mask(self):
        uniq, _ = self.edges
        mask = np.zeros(len(uniq), bool)
        if len(self.interface_edges):
            key = uniq[:, 0].astype(np.int64) * self.n_vertices + uniq[:, 1]
            ikey = self.interface_edges[:, 0].astype(np.int64) * self.n_vertices + self.interface_edges[:, 1]
            mask = np.isin(key, ikey)
        return mask

    def quality(self):
        lengths = self.edge_lengths
        area = self.signed_areas
        h_k = lengths.max(axis=1)
        inscribed = 4.0 * area / lengths.sum(axis=1)
        a, b, c = lengths[:, 0], lengths[:, 1], lengths[:, 2]
        # angle opposite each edge by the law of cosines
        angles = np.arccos(
            np.clip(
                np.stack(
                    [
                        (b**2 + c**2 - a**2) / (2 * b * c),
                        (a**2 + c**2 - b**2) / (2 * a * c),
                        (a**2 + b**2 - c**2) / (2 * a * b),
                    ]
                ),
                -1.0,
                1.0,
            )
        )
        return QualityReport(
            h_max=float(h_k.max()),
            h_min=float(h_k.min()),
            min_angle=float(angles.min()),
            quasi_uniformity_ratio=float(h_k.max() / inscribed.min()),
            n_vertices=self.n_vertices,
            n_triangles=self.n_triangles,
            n_interface_edges=len(self.interface_edges),
        )

    @cached_property
    def _locator(self):
        return _PointLocator(self)

    def locate_points(self, points):
        """Vectorised :func:`locate_point`; returns (triangle ids, barycentrics)."""
        return self._locator.locate(np.atleast_2d(np.asarray(points, dtype=float)))


def locate_point(mesh: Mesh, p):
    """Triangle containing ``p`` and the barycentric coordinates of ``p`` in it."""
    tri, bary = mesh.locate_points(np.asarray(p, dtype=float).reshape(1, 2))
    return int(tri[0]), bary[0]


class _PointLocator:
    """Bucket grid over triangle bounding boxes."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        p = mesh.vertices[mesh.triangles]
        x0, x1, y0, y1 = mesh.bounds
        nb = max(1, int(math.sqrt(mesh.n_triangles / 2.0)))
        self.nb = nb
        self.origin = np.array([x0, y0])
        self.cell = np.array([(x1 - x0) / nb, (y1 - y0) / nb])
        lo = np.floor((p.min(axis=1) - self.origin) / self.cell).astype(int).clip(0, nb - 1)
        hi = np.floor((p.max(axis=1) - self.origin) / self.cell).astype(int).clip(0, nb - 1)
        span = (hi - lo).max(axis=0)
        tris, bins = [], []
        for dx in range(span[0] + 1):
            for dy in range(span[1] + 1):
                ix = lo[:, 0] + dx
                iy = lo[:, 1] + dy
                ok = (ix <= hi[:, 0]) & (iy <= hi[:, 1])
                tris.append(np.nonzero(ok)[0])
                bins.append(ix[ok] * nb + iy[ok])
        tris = np.concatenate(tris)
        bins = np.concatenate(bins)
        order = np.lexsort((tris, bins))
        self.bin_tris = tris[order]
        self.bin_offsets = np.searchsorted(bins[order], np.arange(nb * nb + 1))
        # affine map x -> barycentric (lambda_1, lambda_2)
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        self.inv = np.stack(
            [np.stack([e2[:, 1], -e2[:, 0]], -1), np.stack([-e1[:, 1], e1[:, 0]], -1)], 1
        ) / det[:, None, None]
        self.p0 = p[:, 0]

    def bary(self, tri, pts):
        d = pts - self.p0[tri]
        l12 = np.einsum("nij,nj->ni", self.inv[tri], d)
        return np.column_stack([1.0 - l12.sum(axis=1), l12])

    def locate(self, pts):
        mesh = self.mesh
        x0, x1, y0, y1 = mesh.bounds
        tol = 1e-12 * mesh.diam
        outside = (pts[:, 0] < x0 - tol) | (pts[:, 0] > x1 + tol) | (pts[:, 1] < y0 - tol) | (pts[:, 1] > y1 + tol)
        if outside.any():
            raise PointOutsideDomain(f"point {pts[np.argmax(outside)]} lies outside the domain")
        cell = np.floor((pts - self.origin) / self.cell).astype(int).clip(0, self.nb - 1)
        b = cell[:, 0] * self.nb + cell[:, 1]
        start = self.bin_offsets[b]
        count = self.bin_offsets[b + 1] - start
        n = len(pts)
        best_tri = np.full(n, -1)
        best_val = np.full(n, -np.inf)
        best_bary = np.zeros((n, 3))
        for k in range(int(count.max(initial=0))):
            idx = np.nonzero(count > k)[0]
            idx = idx[best_val[idx] < 0.0]
            if len(idx) == 0:
                break
            tri = self.bin_tris[start[idx] + k]
            lam = self.bary(tri, pts[idx])
            val = lam.min(axis=1)
            better = val > best_val[idx]
            sel = idx[better]
            best_val[sel] = val[better]
            best_tri[sel] = tri[better]
            best_bary[sel] = lam[better]
        if (best_val < -1e-9).any():
            bad = np.argmin(best_val)
            raise PointOutsideDomain(f"no triangle contains point {pts[bad]}")
        return best_tri, best_bary


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------


def _make_mesh(vertices, triangles, tags, bounds, interface):
    x0, x1, y0, y1 = bounds
    tol = 1e-12 * math.hypot(x1 - x0, y1 - y0)
    v = vertices
    boundary = (
        (np.abs(v[:, 0] - x0) <= tol)
        | (np.abs(v[:, 0] - x1) <= tol)
        | (np.abs(v[:, 1] - y0) <= tol)
        | (np.abs(v[:, 1] - y1) <= tol)
    )
    return Mesh(
        np.ascontiguousarray(vertices, dtype=float),
        np.ascontiguousarray(triangles, dtype=np.int64),
        np.ascontiguousarray(tags, dtype=np.int64),
        boundary,
        np.ascontiguousarray(interface, dtype=bool),
        tuple(float(b) for b in bounds),
    )


def _structured(bounds, target_h):
    x0, x1, y0, y1 = bounds
    nx = max(1, math.ceil((x1 - x0) / target_h - 1e-9))
    ny = max(1, math.ceil((y1 - y0) / target_h - 1e-9))
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()]), nx, ny


def structured_mesh(bounds, target_h):
    """Uniform right-triangle mesh of the rectangle, every triangle tagged 1."""
    pts, nx, ny = _structured(bounds, target_h)
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    i, j = i.ravel(), j.ravel()
    v00 = i * (ny + 1) + j
    v10 = v00 + ny + 1
    v01 = v00 + 1
    v11 = v10 + 1
    tris = np.concatenate([np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])])
    return _make_mesh(pts, tris, np.ones(len(tris), int), bounds, np.zeros(len(pts), bool))


def _boundary_distance(curve, bounds):
    pts = curve.dense_samples()
    x0, x1, y0, y1 = bounds
    inside = (pts[:, 0] > x0) & (pts[:, 0] < x1) & (pts[:, 1] > y0) & (pts[:, 1] < y1)
    if not inside.all():
        return -1.0
    return float(
        np.min(np.stack([pts[:, 0] - x0, x1 - pts[:, 0], pts[:, 1] - y0, y1 - pts[:, 1]]))
    )


def build_interface_mesh(bounds, curve: InterfaceCurve | None, target_h: float) -> Mesh:
    """Fitted triangulation of ``bounds = (xmin, xmax, ymin, ymax)``.

    With ``curve=None`` a plain structured mesh without interface is returned.
    """
    if target_h <= 0:
        raise ValueError("target_h must be positive")
    x0, x1, y0, y1 = map(float, bounds)
    bounds = (x0, x1, y0, y1)
    if not (x1 > x0 and y1 > y0):
        raise ValueError("empty domain")
    if curve is None:
        return structured_mesh(bounds, target_h)

    if _boundary_distance(curve, bounds) < 2.0 * target_h:
        raise CurveTouchesBoundary(
            f"interface comes within 2*target_h = {2 * target_h:g} of the domain boundary"
        )
    if target_h > 0.5 * curve.min_curvature_radius * (1 + 1e-5):
        raise ValueError(
            f"target_h={target_h:g} does not resolve the interface curvature "
            f"(need target_h <= {0.5 * curve.min_curvature_radius:g})"
        )

    grid, _, _ = _structured(bounds, target_h)
    # distance to the curve, via projection
    near = np.abs(curve.levelset(grid)) < 2.0 * target_h
    dist = np.full(len(grid), np.inf)
    if near.any():
        dist[near] = np.linalg.norm(grid[near] - curve.project(grid[near]), axis=1)
    keep = dist >= 0.5 * target_h
    n_gamma = max(8, math.ceil(curve.perimeter / (0.8 * target_h)))
    gamma = curve.project(curve.sample_by_arclength(n_gamma))
    pts = np.concatenate([grid[keep], gamma])
    interface = np.zeros(len(pts), bool)
    interface[keep.sum():] = True

    tri = np.asarray(Delaunay(pts).simplices, dtype=np.int64)
    p = pts[tri]
    area = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    flip = area < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    area = np.abs(area)
    if (area <= 1e-14 * target_h**2).any():
        raise DegenerateMesh("Delaunay triangulation produced a zero-area triangle")
    bary = pts[tri].mean(axis=1)
    tags = np.where(curve.levelset(bary) < 0, 1, 2)
    mesh = _make_mesh(pts, tri, tags, bounds, interface)

    # the chord polygon must consist of mesh edges between consecutive samples
    ie = mesh.interface_edges
    first = keep.sum()
    if len(ie) != n_gamma or not np.all(interface[ie]):
        raise DegenerateMesh("interface polygon is not resolved by mesh edges")
    k = np.sort(ie - first, axis=1)
    consecutive = (k[:, 1] - k[:, 0] == 1) | ((k[:, 0] == 0) & (k[:, 1] == n_gamma - 1))
    if not consecutive.all():
        raise DegenerateMesh("interface polygon is not resolved by mesh edges")
    validate_mesh(mesh, curve)
    if mesh.h_max > 2.0 * target_h:
        raise DegenerateMesh(f"h_max={mesh.h_max:g} exceeds 2*target_h")
    return mesh


def refine(mesh: Mesh, curve: InterfaceCurve | None) -> Mesh:
    """Regular 1:4 subdivision; interface-edge midpoints are projected onto the curve."""
    edges, tri_edges = mesh.edges
    nv = mesh.n_vertices
    mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    on_iface = mesh.interface_edge_mask
    if curve is not None and on_iface.any():
        mid[on_iface] = curve.project(mid[on_iface])
    vertices = np.concatenate([mesh.vertices, mid])
    interface = np.concatenate([mesh.interface, on_iface])
    t = mesh.triangles
    m = tri_edges + nv  # m[:, k] is the midpoint of edge (v_k, v_{k+1})
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    mab, mbc, mca = m[:, 0], m[:, 1], m[:, 2]
    children = np.concatenate(
        [
            np.column_stack([a, mab, mca]),
            np.column_stack([mab, b, mbc]),
            np.column_stack([mca, mbc, c]),
            np.column_stack([mab, mbc, mca]),
        ]
    )
    tags = np.tile(mesh.tags, 4)
    new = _make_mesh(vertices, children, tags, mesh.bounds, interface)
    if (new.signed_areas <= 0).any():
        raise DegenerateMesh("projection of interface midpoints inverted a triangle")
    validate_mesh(new, curve)
    return new


def refine_n(mesh: Mesh, curve, times: int) -> list[Mesh]:
    """``[mesh, refine(mesh), ...]`` with ``times + 1`` entries."""
    out = [mesh]
    for _ in range(times):
        out.append(refine(out[-1], curve))
    return out


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------


def validate_mesh(mesh: Mesh, curve: InterfaceCurve | None = None):
    """Raise :class:`DegenerateMesh` unless every structural invariant holds."""
    if (mesh.signed_areas <= 0).any():
        raise DegenerateMesh("triangle with non-positive signed area")
    if not np.isclose(mesh.signed_areas.sum(), mesh.domain_area, rtol=0, atol=1e-10):
        raise DegenerateMesh("triangle areas do not sum to the domain area")
    edges, _ = mesh.edges
    cnt = mesh.edge_triangle_count
    if (cnt > 2).any():
        raise DegenerateMesh("edge shared by more than two triangles")
    single = edges[cnt == 1]
    if not (mesh.boundary[single[:, 0]] & mesh.boundary[single[:, 1]]).all():
        raise DegenerateMesh("free edge away from the domain boundary (hanging vertex)")
    if curve is None:
        return
    tol = 1e-12 * mesh.diam
    if np.any(np.abs(curve.levelset(mesh.vertices[mesh.interface])) > tol):
        raise DegenerateMesh("interface vertex off the curve")
    ls = curve.levelset(mesh.vertices)
    sign = np.where(np.abs(ls) <= tol, 0, np.sign(ls))
    st = sign[mesh.triangles]
    if ((st.max(axis=1) > 0) & (st.min(axis=1) < 0)).any():
        raise DegenerateMesh("triangle straddles the interface")
    if (mesh.tags == 1).any() and (mesh.tags == 2).any():
        wrong = ((mesh.tags == 1) & (st.max(axis=1) > 0)) | ((mesh.tags == 2) & (st.min(axis=1) < 0))
        if wrong.any():
            raise DegenerateMesh("subdomain tag disagrees with vertex signs")
    _, tri_edges = mesh.edges
    if (mesh.interface_edge_mask[tri_edges].sum(axis=1) > 1).any():
        raise DegenerateMesh("triangle meets the interface polygon in more than one edge")


def crossing_edge_pairs(mesh: Mesh, chunk: int = 512) -> int:
    """Count pairs of distinct edges whose interiors cross (exhaustive, O(E^2))."""
    edges, _ = mesh.edges
    P = mesh.vertices[edges[:, 0]]
    Q = mesh.vertices[edges[:, 1]]
    n = len(edges)
    eps = 1e-12 * mesh.diam**2

    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])

    total = 0
    for s in range(0, n, chunk):
        p1 = P[s : s + chunk, None, :]
        q1 = Q[s : s + chunk, None, :]
        p2 = P[None, :, :]
        q2 = Q[None, :, :]
        d1 = orient(p1, q1, p2)
        d2 = orient(p1, q1, q2)
        d3 = orient(p2, q2, p1)
        d4 = orient(p2, q2, q1)
        proper = (d1 * d2 < -eps * eps) & (d3 * d4 < -eps * eps)
        # collinear overlap of two edges also violates conformity
        col = (np.abs(d1) <= eps) & (np.abs(d2) <= eps)
        if col.any():
            d = Q[s : s + chunk, None, :] - P[s : s + chunk, None, :]
            L2 = (d**2).sum(-1)
            t1 = ((p2 - p1) * d).sum(-1) / L2
            t2 = ((q2 - p1) * d).sum(-1) / L2
            lo = np.minimum(t1, t2)
            hi = np.maximum(t1, t2)
            overlap = col & (np.minimum(hi, 1.0) - np.maximum(lo, 0.0) > 1e-9)
            idx = np.arange(s, min(s + chunk, n))[:, None] != np.arange(n)[None, :]
            proper |= overlap & idx
        total += int(proper.sum())
    return total // 2


# ---------------------------------------------------------------------------
# Text I/O
# ---------------------------------------------------------------------------


def write_mesh(mesh: Mesh, path):
    lines = [f"vertices {mesh.n_vertices} triangles {mesh.n_triangles}"]
    flags = mesh.boundary * BOUNDARY_FLAG + mesh.interface * INTERFACE_FLAG
    for (x, y), f in zip(mesh.vertices, flags):
        lines.append(f"{x:.17g} {y:.17g} {int(f)}")
    for (i, j, k), tag in zip(mesh.triangles, mesh.tags):
        lines.append(f"{i} {j} {k} {tag}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path, bounds=None) -> Mesh:
    """Inverse of :func:`write_mesh`.  Bounds default to the vertex bounding box."""
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 4 or head[0] != "vertices" or head[2] != "triangles":
            raise ValueError(f"{path}: bad mesh header")
        nv, nt = int(head[1]), int(head[3])
        vdata = np.loadtxt(fh, max_rows=nv, ndmin=2)
        tdata = np.loadtxt(fh, max_rows=nt, dtype=np.int64, ndmin=2)
    verts = vdata[:, :2]
    flags = vdata[:, 2].astype(int)
    if bounds is None:
        bounds = (verts[:, 0].min(), verts[:, 0].max(), verts[:, 1].min(), verts[:, 1].max())
    mesh = Mesh(
        np.ascontiguousarray(verts),
        np.ascontiguousarray(tdata[:, :3]),
        np.ascontiguousarray(tdata[:, 3]),
        (flags & BOUNDARY_FLAG).astype(bool),
        (flags & INTERFACE_FLAG).astype(bool),
        tuple(float(b) for b in bounds),
    )
    return mesh
