"""Compressed-sparse-row matrices and a Jacobi-preconditioned CG solver."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange, NotConverged, NotSymmetric


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    column_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        for a in (self.row_offsets, self.column_indices, self.values):
            a.setflags(write=False)

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return len(self.values)

    @cached_property
    def row_ids(self):
        return np.repeat(np.arange(self.n_rows), np.diff(self.row_offsets))

    def __matmul__(self, x):
        return spmv(self, x)

    def __mul__(self, alpha):
        return CsrMatrix(self.n_rows, self.n_cols, self.row_offsets, self.column_indices, alpha * self.values)

    __rmul__ = __mul__

    def __add__(self, other):
        if self.shape != other.shape:
            raise DimensionMismatch(f"cannot add {self.shape} and {other.shape}")
        return csr_from_triplets(
            self.n_rows,
            self.n_cols,
            (
                np.concatenate([self.row_ids, other.row_ids]),
                np.concatenate([self.column_indices, other.column_indices]),
                np.concatenate([self.values, other.values]),
            ),
        )

    def diagonal(self):
        d = np.zeros(min(self.shape))
        on = self.row_ids == self.column_indices
        d[self.row_ids[on]] = self.values[on]
        return d

    def transpose(self):
        return csr_from_triplets(self.n_cols, self.n_rows, (self.column_indices, self.row_ids, self.values))

    @property
    def T(self):
        return self.transpose()

    def to_dense(self):
        out = np.zeros(self.shape)
        np.add.at(out, (self.row_ids, self.column_indices), self.values)
        return out

    @cached_property
    def is_symmetric(self):
        """Entrywise symmetry to 1e-12 relative to the largest entry."""
        if self.n_rows != self.n_cols:
            return False
        t = self.transpose()
        if not (np.array_equal(t.row_offsets, self.row_offsets) and np.array_equal(t.column_indices, self.column_indices)):
            # patterns may differ by explicit zeros; compare densely per entry
            diff = self + (-1.0) * t
            vals = diff.values
        else:
            vals = self.values - t.values
        scale = max(np.abs(self.values).max(initial=0.0), np.finfo(float).tiny)
        return bool(np.all(np.abs(vals) <= 1e-12 * scale))

    def submatrix(self, rows, cols):
        """Rows ``rows`` and columns ``cols`` (index arrays), renumbered in the given order."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        col_map = np.full(self.n_cols, -1, dtype=np.int64)
        col_map[cols] = np.arange(len(cols))
        row_map = np.full(self.n_rows, -1, dtype=np.int64)
        row_map[rows] = np.arange(len(rows))
        r = row_map[self.row_ids]
        c = col_map[self.column_indices]
        keep = (r >= 0) & (c >= 0)
        return csr_from_triplets(len(rows), len(cols), (r[keep], c[keep], self.values[keep]))

    def write_coo(self, path):
        """Debug dump, one ``row col value`` per line."""
        with open(path, "w") as fh:
            for i, j, v in zip(self.row_ids, self.column_indices, self.values):
                fh.write(f"{i} {j} {v:.17g}\n")


def csr_from_triplets(n_rows, n_cols, triplets) -> CsrMatrix:
    """Build a CSR matrix, summing duplicates.

    ``triplets`` is a sequence of ``(row, col, value)`` or a tuple of three
    equally long arrays ``(rows, cols, values)``.
    """
    if isinstance(triplets, tuple) and len(triplets) == 3 and np.ndim(triplets[0]) == 1:
        rows, cols, vals = (np.asarray(a) for a in triplets)
    else:
        arr = list(triplets)
        rows = np.array([t[0] for t in arr], dtype=np.int64)
        cols = np.array([t[1] for t in arr], dtype=np.int64)
        vals = np.array([t[2] for t in arr], dtype=float)
    rows = rows.astype(np.int64, copy=False)
    cols = cols.astype(np.int64, copy=False)
    vals = vals.astype(float, copy=False)
    if len(rows):
        if rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols:
            raise IndexOutOfRange(f"triplet index outside {n_rows}x{n_cols}")
    # stable sort so duplicates are summed in input order
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if len(rows):
        new = np.empty(len(rows), bool)
        new[0] = True
        new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        group = np.cumsum(new) - 1
        summed = np.zeros(group[-1] + 1)
        np.add.at(summed, group, vals)
        rows, cols, vals = rows[new], cols[new], summed
    offsets = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=offsets[1:])
    return CsrMatrix(int(n_rows), int(n_cols), offsets, cols, vals)


def spmv(A: CsrMatrix, x) -> np.ndarray:
    """``y = A x``; each row is accumulated left to right over its stored entries."""
    x = np.asarray(x, dtype=float)
    if x.shape != (A.n_cols,):
        raise DimensionMismatch(f"matrix has {A.n_cols} columns, vector has shape {x.shape}")
    return np.bincount(A.row_ids, weights=A.values * x[A.column_indices], minlength=A.n_rows)


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float
    converged: bool


def cg_solve(A: CsrMatrix, b, tol=1e-10, max_iter=None, x0=None, callback=None):
    """Jacobi-preconditioned conjugate gradients.

    Stops once ``||b - A x||_2 <= tol * ||b||_2``.  Returns ``(x, report)``;
    raises :class:`NotConverged` (carrying the best iterate) otherwise.
    ``callback(k, x)`` is called after every iteration.
    """
    b = np.asarray(b, dtype=float)
    n = A.n_rows
    if A.n_cols != n or b.shape != (n,):
        raise DimensionMismatch(f"system {A.shape} with right-hand side {b.shape}")
    if n == 0:
        return np.zeros(0), SolveReport(0, 0.0, True)
    if not A.is_symmetric:
        raise NotSymmetric("CG needs a symmetric matrix")
    diag = A.diagonal()
    if (diag <= 0).any():
        raise NotSymmetric("CG needs a positive diagonal")
    if max_iter is None:
        max_iter = 20 * n
    inv_d = 1.0 / diag
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True)
    r = b - spmv(A, x)
    rnorm = np.linalg.norm(r)
    best_x, best_res = x.copy(), rnorm / bnorm
    k = 0
    if rnorm <= tol * bnorm:
        return x, SolveReport(0, rnorm / bnorm, True)
    z = inv_d * r
    p = z.copy()
    rz = r @ z
    while k < max_iter:
        Ap = spmv(A, p)
        pAp = p @ Ap
        if pAp <= 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        k += 1
        if callback is not None:
            callback(k, x)
        rnorm = np.linalg.norm(r)
        if rnorm / bnorm < best_res:
            best_x, best_res = x.copy(), rnorm / bnorm
        if rnorm <= tol * bnorm:
            # guard against drift of the recursive residual
            true_res = np.linalg.norm(b - spmv(A, x)) / bnorm
            if true_res <= tol:
                return x, SolveReport(k, true_res, True)
            r = b - spmv(A, x)
        z = inv_d * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    report = SolveReport(k, float(best_res), False)
    raise NotConverged(f"CG stopped after {k} iterations at relative residual {best_res:.3e}", best_x, report)
