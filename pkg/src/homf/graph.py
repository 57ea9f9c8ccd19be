"""Joint user/item graph construction and its transition matrix.

Row entities occupy nodes ``0..m-1`` and column entities ``m..m+n-1``. The
adjacency is laid out in blocks::

    [[ alpha * g1(Gr),         (1 - alpha) * g2(R) ],
     [ (1 - alpha) * g2(R)^T,   alpha * g3(Gc)     ]]

with the weighting functions applied to stored entries only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .sparse import SparseMatrix, from_arrays, row_normalize

EXP_LIMIT = 700.0


@dataclass(frozen=True)
class WeightFn:
    """Non-negative, non-decreasing map from a rating or edge weight to an edge weight."""

    kind: str = "exponential"
    c: float = 1.0

    KINDS = ("exponential", "linear", "step")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown weighting function {self.kind!r}; choose from {self.KINDS}")
        if self.kind == "linear" and self.c < 0:
            raise ValueError("linear weighting needs c >= 0 to stay non-negative")

    @classmethod
    def parse(cls, text: str, c: float = 1.0) -> WeightFn:
        return cls(text.strip().lower(), c)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "exponential":
            if x.size and np.max(np.abs(x)) > EXP_LIMIT:
                raise OverflowError(
                    f"exponential weighting input {np.max(np.abs(x))} exceeds |x| <= {EXP_LIMIT}"
                )
            return np.exp(x)
        if self.kind == "linear":
            if x.size and np.min(x) < 0:
                raise ValueError("linear weighting of a negative value gives a negative edge weight")
            return self.c * x
        return (x > 0).astype(np.float64)

    def __str__(self) -> str:
        return f"linear({self.c:g})" if self.kind == "linear" else self.kind


@dataclass(frozen=True)
class GraphSpec:
    m: int
    n: int
    alpha: float = 0.0
    g1: WeightFn = field(default_factory=WeightFn)
    g2: WeightFn = field(default_factory=WeightFn)
    g3: Optional[WeightFn] = None  # None means "same as g1"

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")

    @property
    def col_weight(self) -> WeightFn:
        return self.g1 if self.g3 is None else self.g3


def _weighted(mat: SparseMatrix, g: WeightFn):
    rows = mat.row_ids()
    cols = mat.col_indices
    w = g(mat.values)
    if g.kind == "step":
        keep = w > 0
        rows, cols, w = rows[keep], cols[keep], w[keep]
    return rows, cols, w


def _check_side(mat: Optional[SparseMatrix], size: int, name: str):
    if mat is None:
        return
    if mat.shape != (size, size):
        raise ValueError(f"{name} must be {size}x{size}, got {mat.n_rows}x{mat.n_cols}")
    t = mat.T
    symmetric = (
        np.array_equal(mat.row_offsets, t.row_offsets)
        and np.array_equal(mat.col_indices, t.col_indices)
        and np.array_equal(mat.values, t.values)
    )
    if not symmetric:
        raise ValueError(f"side graph {name} must be symmetric")


def build_adjacency(
    R: SparseMatrix,
    Gr: Optional[SparseMatrix],
    Gc: Optional[SparseMatrix],
    spec: GraphSpec,
) -> SparseMatrix:
    m, n = spec.m, spec.n
    if R.shape != (m, n):
        raise ValueError(f"rating matrix is {R.n_rows}x{R.n_cols}, spec says {m}x{n}")
    _check_side(Gr, m, "Gr")
    _check_side(Gc, n, "Gc")
    if spec.alpha > 0 and Gr is None and Gc is None:
        raise ValueError("alpha > 0 requires at least one side graph")
    alpha = spec.alpha

    rr, rc, rw = _weighted(R, spec.g2)
    rw = (1.0 - alpha) * rw
    parts = [(rr, rc + m, rw), (rc + m, rr, rw)]
    if alpha > 0 and Gr is not None:
        r, c, w = _weighted(Gr, spec.g1)
        parts.append((r, c, alpha * w))
    if alpha > 0 and Gc is not None:
        r, c, w = _weighted(Gc, spec.col_weight)
        parts.append((r + m, c + m, alpha * w))
    rows, cols, vals = (np.concatenate(p) for p in zip(*parts))
    return from_arrays(rows, cols, vals, m + n, m + n)


def build_tpm(
    R: SparseMatrix,
    Gr: Optional[SparseMatrix],
    Gc: Optional[SparseMatrix],
    spec: GraphSpec,
) -> SparseMatrix:
    """Row-stochastic transition matrix of the joint graph."""
    return row_normalize(build_adjacency(R, Gr, Gc, spec))
