"""Alternating block coordinate descent for the walk-polynomial factorization.

Minimizes

    1/2 || P_Omega(f_T(A) - U V^T) ||_F^2 + lam (||U||_F^2 + ||V||_F^2)

where Omega is the nonzero set of f_T(A). Each row of V (resp. U) is the
solution of a k-dimensional ridge problem built from one column (resp. row)
of f_T(A), which is sampled on the fly and discarded.
"""
from __future__ import annotations

import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numba import njit

from .sparse import SparseMatrix
from .util import atomic_write, resolve_workers
from .walks import WalkConfig, WorkCounter, sample_column, support, walk_kernel

log = logging.getLogger(__name__)

MAGIC = b"HOMF1"


@dataclass
class EmbeddingPair:
    U: np.ndarray
    V: np.ndarray
    m: int
    n: int

    def __post_init__(self):
        N = self.m + self.n
        if self.U.ndim != 2 or self.U.shape != self.V.shape or self.U.shape[0] != N:
            raise ValueError(f"U {self.U.shape} and V {self.V.shape} must both be ({N}, k)")
        if self.U.shape[1] < 1:
            raise ValueError("rank k must be >= 1")
        if not (np.all(np.isfinite(self.U)) and np.all(np.isfinite(self.V))):
            raise ValueError("embeddings contain NaN or Inf")

    @property
    def k(self) -> int:
        return self.U.shape[1]


@dataclass(frozen=True)
class FitConfig:
    k: int = 10
    lam: float = 0.1
    walk: WalkConfig = field(default_factory=WalkConfig)
    outer_sweeps: int = 20
    cg_tol: float = 1e-8
    cg_max_iter: int = 100
    seed: int = 0
    workers: int | None = None
    update_order: str = "VU"
    rel_tol: float = 1e-4
    objective_sample: int = 1000

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.lam <= 0:
            raise ValueError("lambda must be > 0")
        if self.cg_tol <= 0:
            raise ValueError("cg_tol must be > 0")
        if self.outer_sweeps < 1:
            raise ValueError("outer_sweeps must be >= 1")
        if sorted(self.update_order) != ["U", "V"]:
            raise ValueError("update_order must be 'VU' or 'UV'")


@dataclass
class ObjectiveTrace:
    initial: float = float("nan")
    values: list[float] = field(default_factory=list)
    converged: bool = False


def init_embeddings(m: int, n: int, k: int, seed: int) -> EmbeddingPair:
    """Every entry i.i.d. uniform on [0, 1]; U is drawn before V."""
    if m < 1 or n < 0 or k < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    U = rng.uniform(0.0, 1.0, (m + n, k))
    V = rng.uniform(0.0, 1.0, (m + n, k))
    return EmbeddingPair(U, V, m, n)


# ---------------------------------------------------------------------------
# numba kernels

@njit(cache=True, nogil=True)
def cg_solve(H, b, x, tol, maxit):
    """Conjugate gradients on the SPD system H x = b, in place on ``x``.

    Stops once ||b - H x|| <= tol ||b||. Returns the iteration count.
    """
    k = b.shape[0]
    bn2 = 0.0
    for p in range(k):
        bn2 += b[p] * b[p]
    if bn2 == 0.0:
        x[:] = 0.0
        return 0
    r = np.empty(k)
    for p in range(k):
        s = 0.0
        for q in range(k):
            s += H[p, q] * x[q]
        r[p] = b[p] - s
    d = r.copy()
    Hd = np.empty(k)
    rs = 0.0
    for p in range(k):
        rs += r[p] * r[p]
    thresh = tol * tol * bn2
    it = 0
    while rs > thresh and it < maxit:
        dHd = 0.0
        for p in range(k):
            s = 0.0
            for q in range(k):
                s += H[p, q] * d[q]
            Hd[p] = s
            dHd += d[p] * s
        if dHd <= 0.0:
            break
        step = rs / dHd
        rs_new = 0.0
        for p in range(k):
            x[p] += step * d[p]
            r[p] -= step * Hd[p]
            rs_new += r[p] * r[p]
        beta = rs_new / rs
        for p in range(k):
            d[p] = r[p] + beta * d[p]
        rs = rs_new
        it += 1
    return it


@njit(cache=True, nogil=True)
def _accumulate_normal(rows, weights, design, lam, H, b):
    """H = design[rows]^T design[rows] + lam I, b = design[rows]^T weights."""
    k = design.shape[1]
    H[:, :] = 0.0
    b[:] = 0.0
    for t in range(rows.shape[0]):
        j = rows[t]
        w = weights[t]
        for p in range(k):
            fp = design[j, p]
            b[p] += w * fp
            for q in range(p, k):
                H[p, q] += fp * design[j, q]
    for p in range(k):
        H[p, p] += lam
        for q in range(p + 1, k):
            H[q, p] = H[p, q]


@njit(cache=True, nogil=True)
def _update_block(rptr, ridx, rval, sptr, sidx, sval, T, eps, fixed, current, out,
                  lam, tol, maxit, start, stop, counts):
    N = rptr.shape[0] - 1
    k = fixed.shape[1]
    a1 = np.empty(N)
    a = np.empty(N)
    nxt = np.empty(N)
    x = np.empty(N)
    rows = np.empty(N, dtype=np.int64)
    weights = np.empty(N)
    H = np.empty((k, k))
    b = np.empty(k)
    v = np.empty(k)
    for i in range(start, stop):
        counts[i] = walk_kernel(rptr, ridx, rval, sptr, sidx, sval, i, T, a1, a, nxt, x)
        s = 0
        for j in range(N):
            if abs(x[j]) > eps:
                rows[s] = j
                weights[s] = x[j]
                s += 1
        _accumulate_normal(rows[:s], weights[:s], fixed, lam, H, b)
        for p in range(k):
            v[p] = current[i, p]
        cg_solve(H, b, v, tol, maxit)
        for p in range(k):
            out[i, p] = v[p]


# ---------------------------------------------------------------------------

def solve_ridge(X, y, lam: float, cg_tol: float = 1e-8, cg_max_iter: int = 100, x0=None) -> np.ndarray:
    """Solve (X^T X + lam I) v = X^T y by conjugate gradients on the k x k system.

    This minimizes 1/2 ||y - X v||^2 + lam/2 ||v||^2. ``x0`` warm-starts CG.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError(f"shape mismatch: X {X.shape}, y {y.shape}")
    if lam <= 0:
        raise ValueError("lambda must be > 0")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y)) and np.isfinite(lam)):
        raise ValueError("solve_ridge received non-finite input")
    s, k = X.shape
    v = np.zeros(k) if x0 is None else np.array(x0, dtype=np.float64)
    if s == 0:
        return np.zeros(k)
    H = np.empty((k, k))
    b = np.empty(k)
    _accumulate_normal(np.arange(s, dtype=np.int64), y, X, float(lam), H, b)
    cg_solve(H, b, v, float(cg_tol), int(cg_max_iter))
    return v


def ridge_objective(X, y, v, lam: float) -> float:
    """1/2 ||y - X v||^2 + lam ||v||^2 (the per-column subproblem)."""
    r = y - X @ v
    return 0.5 * float(r @ r) + lam * float(v @ v)


def ridge_gradient(X, y, v, lam: float) -> np.ndarray:
    return X.T @ (X @ v - y) + 2.0 * lam * v


def update_factor(
    A: SparseMatrix,
    fixed: np.ndarray,
    target: str,
    cfg: FitConfig,
    current: np.ndarray,
    counter: WorkCounter | None = None,
) -> np.ndarray:
    """One block pass: re-solve every row of the target factor.

    ``target="V"`` fits row i of V to column i of f_T(A) with U = ``fixed``;
    ``target="U"`` fits row i of U to row i of f_T(A) with V = ``fixed``.
    Rows are independent, so the result does not depend on the worker count.
    """
    if target == "V":
        rec, start = A, A.T
    elif target == "U":
        rec, start = A.T, A
    else:
        raise ValueError(f"target must be 'U' or 'V', got {target!r}")
    N = A.n_rows
    fixed = np.ascontiguousarray(fixed, dtype=np.float64)
    current = np.ascontiguousarray(current, dtype=np.float64)
    if fixed.shape != current.shape or fixed.shape[0] != N:
        raise ValueError(f"factor shapes {fixed.shape}, {current.shape} do not match {N} nodes")
    out = np.empty_like(current)
    counts = np.zeros(N, dtype=np.int64)
    # penalty lam ||v||^2 against the 1/2-scaled residual -> 2 lam on the diagonal
    args = (
        rec.row_offsets, rec.col_indices, rec.values,
        start.row_offsets, start.col_indices, start.values,
        int(cfg.walk.T), float(cfg.walk.support_epsilon), fixed, current, out,
        2.0 * cfg.lam, float(cfg.cg_tol), int(cfg.cg_max_iter),
    )
    workers = min(resolve_workers(cfg.workers), N)
    if workers == 1:
        _update_block(*args, 0, N, counts)
    else:
        bounds = np.linspace(0, N, workers + 1).astype(np.int64)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_update_block, *args, int(lo), int(hi), counts)
                for lo, hi in zip(bounds[:-1], bounds[1:])
            ]
            for f in futures:
                f.result()
    if counter is not None:
        counter.matvecs += int(counts.sum())
        if target == "V":
            counter.v_passes += 1
        else:
            counter.u_passes += 1
    return out


class SampledObjective:
    """Estimate of the full objective from a fixed, seeded set of columns.

    Columns of f_T(A) do not change during a fit, so they are sampled once.
    With at most ``size`` nodes every column is used and the value is exact.
    """

    def __init__(self, A: SparseMatrix, cfg: FitConfig):
        N = A.n_rows
        rng = np.random.default_rng([cfg.seed, 1])
        size = min(cfg.objective_sample, N)
        self.nodes = np.sort(rng.choice(N, size=size, replace=False)) if size < N else np.arange(N)
        self.scale = N / len(self.nodes)
        self.lam = cfg.lam
        self.columns = []
        for i in self.nodes:
            col = sample_column(A, int(i), cfg.walk)
            s = support(col, cfg.walk)
            self.columns.append((s, col[s]))

    def __call__(self, U: np.ndarray, V: np.ndarray) -> float:
        total = 0.0
        for i, (s, x) in zip(self.nodes, self.columns):
            r = x - U[s] @ V[i]
            total += 0.5 * float(r @ r)
        return self.scale * total + self.lam * (float(np.sum(U * U)) + float(np.sum(V * V)))


def fit(
    A: SparseMatrix,
    cfg: FitConfig,
    m: int | None = None,
    counter: WorkCounter | None = None,
) -> tuple[EmbeddingPair, ObjectiveTrace]:
    """Alternate V and U passes until the sampled objective settles.

    ``m`` is the number of row entities (the rest of the nodes are column
    entities); it only affects the bookkeeping of the returned pair.
    """
    N = A.n_rows
    if A.n_cols != N:
        raise ValueError("transition matrix must be square")
    m = N if m is None else m
    emb = init_embeddings(m, N - m, cfg.k, cfg.seed)
    U, V = emb.U, emb.V
    A.T  # materialize once, before any worker touches it
    objective = SampledObjective(A, cfg)
    trace = ObjectiveTrace(initial=objective(U, V))
    prev = trace.initial
    for sweep in range(cfg.outer_sweeps):
        for side in cfg.update_order:
            if side == "V":
                V = update_factor(A, U, "V", cfg, V, counter)
            else:
                U = update_factor(A, V, "U", cfg, U, counter)
        cur = objective(U, V)
        trace.values.append(cur)
        log.info("sweep %d: sampled objective %.10g", sweep + 1, cur)
        if abs(prev - cur) <= cfg.rel_tol * abs(prev):
            trace.converged = True
            break
        prev = cur
    return EmbeddingPair(U, V, m, N - m), trace


def predict(E: EmbeddingPair, user: int, item: int, symmetric: bool = False) -> float:
    """Score of (user, item): U[user] . V[m + item]."""
    if not 0 <= user < E.m:
        raise IndexError(f"user {user} out of range [0, {E.m})")
    if not 0 <= item < E.n:
        raise IndexError(f"item {item} out of range [0, {E.n})")
    j = E.m + item
    score = float(E.U[user] @ E.V[j])
    if symmetric:
        score = 0.5 * (score + float(E.U[j] @ E.V[user]))
    return score


def predict_many(E: EmbeddingPair, users, items, symmetric: bool = False) -> np.ndarray:
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64) + E.m
    scores = np.einsum("ij,ij->i", E.U[users], E.V[items])
    if symmetric:
        scores = 0.5 * (scores + np.einsum("ij,ij->i", E.U[items], E.V[users]))
    return scores


def neighbors(E: EmbeddingPair, node: int, count: int, pool: str = "all") -> list[tuple[int, float]]:
    """Nearest rows of U to row ``node`` by Euclidean distance, ties by index."""
    N = E.m + E.n
    if not 0 <= node < N:
        raise IndexError(f"node {node} out of range [0, {N})")
    if pool == "users":
        cand = np.arange(E.m)
    elif pool == "items":
        cand = np.arange(E.m, N)
    elif pool == "all":
        cand = np.arange(N)
    else:
        raise ValueError(f"pool must be users, items or all, got {pool!r}")
    cand = cand[cand != node]
    dist = np.sqrt(np.sum((E.U[cand] - E.U[node]) ** 2, axis=1))
    order = np.lexsort((cand, dist))[:count]
    return [(int(cand[o]), float(dist[o])) for o in order]


def save_embeddings(E: EmbeddingPair, path) -> None:
    header = MAGIC + struct.pack("<QQQ", E.m, E.n, E.k)
    body = np.ascontiguousarray(E.U, dtype="<f8").tobytes() + np.ascontiguousarray(E.V, dtype="<f8").tobytes()
    atomic_write(path, header + body)


def load_embeddings(path) -> EmbeddingPair:
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a HOMF1 embedding file")
    off = len(MAGIC)
    m, n, k = struct.unpack_from("<QQQ", raw, off)
    off += 24
    size = (m + n) * k
    if len(raw) != off + 16 * size:
        raise ValueError(f"{path}: truncated or oversized embedding file")
    U = np.frombuffer(raw, dtype="<f8", count=size, offset=off).reshape(m + n, k).astype(np.float64)
    V = np.frombuffer(raw, dtype="<f8", count=size, offset=off + 8 * size).reshape(m + n, k).astype(np.float64)
    return EmbeddingPair(U, V, int(m), int(n))


def save_text(E: EmbeddingPair, stem) -> tuple[Path, Path]:
    """Write ``<stem>.U.txt`` and ``<stem>.V.txt``, one space-separated row per line."""
    paths = []
    for name, mat in (("U", E.U), ("V", E.V)):
        p = Path(f"{stem}.{name}.txt")
        lines = "".join(" ".join(repr(float(x)) for x in row) + "\n" for row in mat)
        atomic_write(p, lines)
        paths.append(p)
    return paths[0], paths[1]


def with_workers(cfg: FitConfig, workers: int) -> FitConfig:
    return replace(cfg, workers=workers)
