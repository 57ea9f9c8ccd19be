"""Columns and rows of the averaged walk polynomial (A + A^2 + ... + A^T) / T.

Only matrix-vector products against the sparse transition matrix are used;
no power of A is ever formed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .sparse import SparseMatrix


@dataclass(frozen=True)
class WalkConfig:
    T: int = 4
    support_epsilon: float = 0.0

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 1:
            raise ValueError(f"walk length T must be a positive integer, got {self.T}")
        if self.support_epsilon < 0:
            raise ValueError("support_epsilon must be >= 0")


@dataclass
class WorkCounter:
    """Instrumentation for tests and benchmarks."""

    matvecs: int = 0
    v_passes: int = 0
    u_passes: int = 0


@njit(cache=True, nogil=True)
def walk_kernel(ptr, idx, val, sptr, sidx, sval, i, T, a1, a, nxt, out):
    """Write row ``i`` of f_T(M) into ``out`` where M is (ptr, idx, val)^T.

    ``(sptr, sidx, sval)`` must be the CSR of the matrix whose row ``i`` is the
    first walk step. For a column of A pass A as the recursion matrix and A^T
    as the start matrix; for a row of A swap them. Returns the number of
    matrix-vector products performed.
    """
    n = ptr.shape[0] - 1
    a1[:] = 0.0
    for p in range(sptr[i], sptr[i + 1]):
        a1[sidx[p]] = sval[p]
    a[:] = a1
    for _ in range(1, T):
        for r in range(n):
            s = 0.0
            for p in range(ptr[r], ptr[r + 1]):
                s += val[p] * a[idx[p]]
            nxt[r] = a1[r] + s
        a, nxt = nxt, a
    for r in range(n):
        out[r] = a[r] / T
    return T - 1


def _walk(rec: SparseMatrix, start: SparseMatrix, i: int, cfg: WalkConfig, counter) -> np.ndarray:
    n = rec.n_rows
    if not 0 <= i < n:
        raise IndexError(f"node index {i} out of range for {n} nodes")
    a1, a, nxt, out = (np.empty(n) for _ in range(4))
    count = walk_kernel(
        rec.row_offsets, rec.col_indices, rec.values,
        start.row_offsets, start.col_indices, start.values,
        i, int(cfg.T), a1, a, nxt, out,
    )
    if counter is not None:
        counter.matvecs += count
    return out


def sample_column(A: SparseMatrix, i: int, cfg: WalkConfig, counter: WorkCounter | None = None) -> np.ndarray:
    """Column ``i`` of f_T(A) via a_1 = A e_i, a_t = a_1 + A a_{t-1}, result a_T / T."""
    return _walk(A, A.T, i, cfg, counter)


def sample_row(A: SparseMatrix, i: int, cfg: WalkConfig, counter: WorkCounter | None = None) -> np.ndarray:
    """Row ``i`` of f_T(A), i.e. column ``i`` of f_T(A^T)."""
    return _walk(A.T, A, i, cfg, counter)


def support(v, cfg: WalkConfig) -> np.ndarray:
    return np.flatnonzero(np.abs(np.asarray(v)) > cfg.support_epsilon)


def power_column(A: SparseMatrix, i: int, t: int) -> np.ndarray:
    """Column ``i`` of A^t (a single power, for sparsity diagnostics)."""
    from .sparse import spmv

    x = np.zeros(A.n_cols)
    x[i] = 1.0
    for _ in range(t):
        x = spmv(A, x)
    return x


def column_density(A: SparseMatrix, nodes, cfg: WalkConfig, single_power: bool = False) -> float:
    """Mean fraction of nonzero entries over the sampled columns.

    With ``single_power`` the columns of A^T are measured instead of f_T(A).
    """
    fractions = []
    for i in nodes:
        col = power_column(A, i, cfg.T) if single_power else sample_column(A, i, cfg)
        fractions.append(len(support(col, cfg)) / A.n_rows)
    return float(np.mean(fractions))


def eigen_map(lam, T: int):
    """Eigenvalue of f_T(A) belonging to eigenvalue ``lam`` of A.

    Uses lam (1 - lam^T) / ((1 - lam) T); near lam = 1 the closed form
    cancels badly, so the power sum is evaluated directly there.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    lam = np.asarray(lam, dtype=np.complex128 if np.iscomplexobj(lam) else np.float64)
    near_one = np.abs(1.0 - lam) < 1e-3
    with np.errstate(divide="ignore", invalid="ignore"):
        closed = lam * (1.0 - lam**T) / ((1.0 - lam) * T)
    direct = np.zeros_like(lam)
    p = np.ones_like(lam)
    for _ in range(T):
        p = p * lam
        direct = direct + p
    direct = direct / T
    out = np.where(near_one, direct, closed)
    out = np.where(lam == 1.0, 1.0, out)
    return out.item() if out.ndim == 0 else out


def tpm_eigenvalues(A: SparseMatrix) -> np.ndarray:
    """Eigenvalues of a dense copy of A, sorted by decreasing real part."""
    ev = np.linalg.eigvals(A.to_dense())
    if np.all(np.abs(ev.imag) < 1e-10):
        ev = ev.real
    return ev[np.argsort(-np.real(ev), kind="stable")]


def spectrum_table(eigenvalues, T_values) -> list[tuple[int, np.ndarray]]:
    """h(lambda, T) for each T, magnitudes sorted descending."""
    return [(T, np.sort(np.abs(eigen_map(eigenvalues, T)))[::-1]) for T in T_values]
