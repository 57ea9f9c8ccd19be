"""Compressed sparse row storage and the kernels the rest of the package uses.

Every kernel accumulates strictly row-major with increasing column index, so
results are bitwise reproducible no matter how many threads call them.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator

import numpy as np
from numba import njit


class ConstructionError(ValueError):
    pass


@njit(cache=True, nogil=True)
def csr_matvec(indptr, indices, data, x, out):
    for r in range(indptr.shape[0] - 1):
        s = 0.0
        for p in range(indptr[r], indptr[r + 1]):
            s += data[p] * x[indices[p]]
        out[r] = s


@njit(cache=True, nogil=True)
def csr_matvec_transpose(indptr, indices, data, x, out):
    out[:] = 0.0
    for r in range(indptr.shape[0] - 1):
        xr = x[r]
        for p in range(indptr[r], indptr[r + 1]):
            out[indices[p]] += data[p] * xr


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """CSR matrix with float64 values.

    Build instances with :func:`from_triplets`; the constructor trusts its
    arguments (call :meth:`check` to validate the invariants).
    """

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_rows, self.n_cols

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1])

    def check(self) -> None:
        ptr, idx, val = self.row_offsets, self.col_indices, self.values
        if ptr.shape != (self.n_rows + 1,) or ptr[0] != 0 or ptr[-1] != len(idx):
            raise ConstructionError("row_offsets inconsistent with entry count")
        if len(idx) != len(val):
            raise ConstructionError("col_indices and values differ in length")
        if np.any(np.diff(ptr) < 0):
            raise ConstructionError("row_offsets must be non-decreasing")
        if len(idx) and (idx.min() < 0 or idx.max() >= self.n_cols):
            raise ConstructionError("column index out of range")
        # strictly increasing within a row: every step inside a row is positive
        steps = np.diff(idx)
        row_starts = np.zeros(len(idx), dtype=bool)
        row_starts[ptr[1:-1][ptr[1:-1] < len(idx)]] = True
        if np.any((steps <= 0) & ~row_starts[1:]):
            raise ConstructionError("column indices must increase strictly within each row")
        if not np.all(np.isfinite(val)):
            raise ConstructionError("values must be finite")

    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(self.row_offsets))

    def iter_triplets(self) -> Iterator[tuple[int, int, float]]:
        for r, c, v in zip(self.row_ids(), self.col_indices, self.values):
            yield int(r), int(c), float(v)

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
        return self.col_indices[lo:hi], self.values[lo:hi]

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.row_ids(), weights=self.values, minlength=self.n_rows)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row_ids(), self.col_indices] = self.values
        return out

    @cached_property
    def T(self) -> SparseMatrix:
        """Materialized transpose, computed once and kept (memory 2 nnz)."""
        return transpose(self)

    def __repr__(self) -> str:
        return f"SparseMatrix({self.n_rows}x{self.n_cols}, nnz={self.nnz})"


def _csr_from_sorted(n_rows, n_cols, rows, cols, vals) -> SparseMatrix:
    counts = np.bincount(rows, minlength=n_rows)
    ptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    return SparseMatrix(
        n_rows,
        n_cols,
        ptr,
        np.ascontiguousarray(cols, dtype=np.int64),
        np.ascontiguousarray(vals, dtype=np.float64),
    )


def from_arrays(rows, cols, vals, n_rows: int, n_cols: int) -> SparseMatrix:
    """Vectorized :func:`from_triplets` taking parallel arrays."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=np.float64).ravel()
    if not (len(rows) == len(cols) == len(vals)):
        raise ConstructionError("row, column and value arrays differ in length")
    for name, idx, bound in (("row", rows, n_rows), ("column", cols, n_cols)):
        bad = np.flatnonzero((idx < 0) | (idx >= bound))
        if len(bad):
            j = bad[0]
            raise ConstructionError(
                f"{name} index {idx[j]} ≥ {bound} in triplet "
                f"({rows[j]}, {cols[j]}, {vals[j]})"
                if idx[j] >= 0
                else f"{name} index {idx[j]} < 0 in triplet ({rows[j]}, {cols[j]}, {vals[j]})"
            )
    bad = np.flatnonzero(~np.isfinite(vals))
    if len(bad):
        j = bad[0]
        raise ConstructionError(f"non-finite value in triplet ({rows[j]}, {cols[j]}, {vals[j]})")

    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if len(rows) > 1:
        first = np.ones(len(rows), dtype=bool)
        first[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        if not first.all():
            starts = np.flatnonzero(first)
            vals = np.add.reduceat(vals, starts)
            rows, cols = rows[starts], cols[starts]
    return _csr_from_sorted(n_rows, n_cols, rows, cols, vals)


def from_triplets(entries: Iterable[tuple[int, int, float]], n_rows: int, n_cols: int) -> SparseMatrix:
    """Build a canonical CSR matrix; duplicate (row, col) pairs are summed."""
    entries = list(entries)
    if not entries:
        return from_arrays([], [], [], n_rows, n_cols)
    rows, cols, vals = zip(*entries)
    return from_arrays(rows, cols, vals, n_rows, n_cols)


def from_dense(a) -> SparseMatrix:
    a = np.asarray(a, dtype=np.float64)
    r, c = np.nonzero(a)
    return from_arrays(r, c, a[r, c], *a.shape)


def transpose(a: SparseMatrix) -> SparseMatrix:
    rows = a.row_ids()
    # stable sort keeps rows ascending within each output row
    order = np.argsort(a.col_indices, kind="stable")
    return _csr_from_sorted(a.n_cols, a.n_rows, a.col_indices[order], rows[order], a.values[order])


def identity(n: int) -> SparseMatrix:
    i = np.arange(n)
    return from_arrays(i, i, np.ones(n), n, n)


def _as_vector(x, length: int, what: str) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != length:
        raise ValueError(f"{what}: expected vector of length {length}, got shape {x.shape}")
    return x


def spmv(a: SparseMatrix, x) -> np.ndarray:
    """y = A x."""
    x = _as_vector(x, a.n_cols, "spmv")
    out = np.empty(a.n_rows)
    csr_matvec(a.row_offsets, a.col_indices, a.values, x, out)
    return out


def spmv_transpose(a: SparseMatrix, x) -> np.ndarray:
    """y = A^T x without materializing the transpose."""
    x = _as_vector(x, a.n_rows, "spmv_transpose")
    out = np.empty(a.n_cols)
    csr_matvec_transpose(a.row_offsets, a.col_indices, a.values, x, out)
    return out


def row_normalize(g: SparseMatrix) -> SparseMatrix:
    """Scale every row to sum to one.

    Rows summing to zero (dangling nodes) are replaced by a unit self-loop so
    the result stays row-stochastic.
    """
    if np.any(g.values < 0):
        r, c, v = next((r, c, v) for r, c, v in g.iter_triplets() if v < 0)
        raise ValueError(f"negative weight {v} at ({r}, {c}); graph weights must be non-negative")
    sums = g.row_sums()
    dangling = np.flatnonzero(sums == 0)
    if len(dangling) == 0:
        vals = g.values / np.repeat(sums, np.diff(g.row_offsets))
        return SparseMatrix(g.n_rows, g.n_cols, g.row_offsets.copy(), g.col_indices.copy(), vals)
    if g.n_rows != g.n_cols:
        raise ValueError("zero rows can only receive a self-loop in a square matrix")
    rows = g.row_ids()
    keep = sums[rows] > 0
    kept = rows[keep]
    return from_arrays(
        np.concatenate([kept, dangling]),
        np.concatenate([g.col_indices[keep], dangling]),
        np.concatenate([g.values[keep] / sums[kept], np.ones(len(dangling))]),
        g.n_rows,
        g.n_cols,
    )


def spectral_norm(a: SparseMatrix, iters: int = 1000, tol: float = 1e-13, seed: int = 0) -> float:
    """Largest singular value by power iteration on A^T A."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.5, 1.0, a.n_cols)
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(iters):
        y = spmv_transpose(a, spmv(a, x))
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return 0.0
        x = y / nrm
        new = np.sqrt(nrm)
        if abs(new - sigma) <= tol * new:
            return float(new)
        sigma = new
    return float(sigma)
