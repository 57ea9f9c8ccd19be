"""Rating and edge-list ingestion, splitting, negative sampling, synthetic data."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .sparse import SparseMatrix, from_arrays

log = logging.getLogger(__name__)

DELIMITERS = {"double-colon": "::", "tab": "\t", "comma": ","}


@dataclass
class RatingDataset:
    """Triplets over dense indices plus the external-id maps.

    ``user_ids[i]`` / ``item_ids[j]`` give the external id of dense index i / j.
    """

    m: int
    n: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    user_ids: list[str] = field(default_factory=list)
    item_ids: list[str] = field(default_factory=list)
    value_kind: str = "star"
    n_duplicates: int = 0

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.vals = np.asarray(self.vals, dtype=np.float64)
        if self.value_kind not in ("star", "binary"):
            raise ValueError(f"value_kind must be star or binary, got {self.value_kind!r}")
        if not self.user_ids:
            self.user_ids = [str(i) for i in range(self.m)]
        if not self.item_ids:
            self.item_ids = [str(j) for j in range(self.n)]

    def __len__(self) -> int:
        return len(self.vals)

    @property
    def user_index(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.user_ids)}

    @property
    def item_index(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.item_ids)}

    def subset(self, idx) -> RatingDataset:
        idx = np.asarray(idx, dtype=np.int64)
        return RatingDataset(
            self.m, self.n, self.rows[idx], self.cols[idx], self.vals[idx],
            self.user_ids, self.item_ids, self.value_kind,
        )

    def concat(self, other: RatingDataset) -> RatingDataset:
        return RatingDataset(
            self.m, self.n,
            np.concatenate([self.rows, other.rows]),
            np.concatenate([self.cols, other.cols]),
            np.concatenate([self.vals, other.vals]),
            self.user_ids, self.item_ids, self.value_kind,
        )

    def to_matrix(self) -> SparseMatrix:
        return from_arrays(self.rows, self.cols, self.vals, self.m, self.n)

    def pair_keys(self) -> np.ndarray:
        return self.rows * self.n + self.cols


def load_ratings(path, fmt: str = "double-colon", value_kind: str = "star", header: bool = False) -> RatingDataset:
    """Read ``entity, entity, value[, ignored...]`` rows.

    Ids are mapped to dense indices in order of first appearance. A repeated
    (row, column) pair keeps its last value.
    """
    if fmt not in DELIMITERS:
        raise ValueError(f"unknown ratings format {fmt!r}; choose from {sorted(DELIMITERS)}")
    sep = DELIMITERS[fmt]
    users: dict[str, int] = {}
    items: dict[str, int] = {}
    entries: dict[tuple[int, int], float] = {}
    duplicates = 0
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            if header and lineno == 1:
                continue
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = [f.strip() for f in line.split(sep)]
            if len(fields) < 3:
                raise ValueError(f"{path}:{lineno}: expected at least 3 fields, got {len(fields)}")
            try:
                value = float(fields[2])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: rating {fields[2]!r} is not a number") from None
            if not math.isfinite(value):
                raise ValueError(f"{path}:{lineno}: rating {fields[2]!r} is not finite")
            u = users.setdefault(fields[0], len(users))
            i = items.setdefault(fields[1], len(items))
            if (u, i) in entries:
                duplicates += 1
                del entries[(u, i)]  # re-insert so iteration order follows the kept value
            entries[(u, i)] = value
    if not entries:
        raise ValueError(f"{path}: no ratings found")
    if duplicates:
        log.warning("%s: %d duplicate pairs, kept the last value of each", path, duplicates)
    keys = np.array(list(entries.keys()), dtype=np.int64)
    return RatingDataset(
        len(users), len(items), keys[:, 0], keys[:, 1],
        np.fromiter(entries.values(), dtype=np.float64, count=len(entries)),
        list(users), list(items), value_kind, duplicates,
    )


@dataclass
class EdgeStats:
    read: int = 0
    kept: int = 0
    unknown: int = 0
    self_loops: int = 0


def read_edges(path, id_map: dict[str, int]) -> tuple[list[tuple[int, int, float]], EdgeStats]:
    """Parse a whitespace-separated edge list with optional third weight column."""
    stats = EdgeStats()
    edges = []
    try:
        fh = open(path, encoding="utf-8", errors="replace")
    except OSError as exc:
        raise OSError(f"cannot read graph file {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) not in (2, 3):
                raise ValueError(f"{path}:{lineno}: expected 2 or 3 fields, got {len(parts)}")
            stats.read += 1
            a, b = id_map.get(parts[0]), id_map.get(parts[1])
            if a is None or b is None:
                stats.unknown += 1
                continue
            if a == b:
                stats.self_loops += 1
                continue
            w = float(parts[2]) if len(parts) == 3 else 1.0
            edges.append((a, b, w))
            stats.kept += 1
    if stats.unknown:
        log.warning("%s: skipped %d edges with unknown endpoints", path, stats.unknown)
    if stats.self_loops:
        log.warning("%s: dropped %d self-loops", path, stats.self_loops)
    return edges, stats


def symmetric_from_edges(edges, size: int) -> SparseMatrix:
    """Undirected adjacency; an edge listed in both directions keeps the larger weight."""
    weights: dict[tuple[int, int], float] = {}
    for a, b, w in edges:
        key = (a, b) if a < b else (b, a)
        weights[key] = max(w, weights.get(key, w))
    if not weights:
        return from_arrays([], [], [], size, size)
    keys = np.array(list(weights.keys()), dtype=np.int64)
    w = np.fromiter(weights.values(), dtype=np.float64, count=len(weights))
    return from_arrays(
        np.concatenate([keys[:, 0], keys[:, 1]]),
        np.concatenate([keys[:, 1], keys[:, 0]]),
        np.concatenate([w, w]),
        size, size,
    )


def load_graph(path, n_entities: int, id_map: dict[str, int]) -> SparseMatrix:
    edges, _ = read_edges(path, id_map)
    return symmetric_from_edges(edges, n_entities)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    validation_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")


def _floor(x: float) -> int:
    # guard against 10 * (1 - 0.8) = 1.9999999999999996
    return math.floor(round(x, 9))


def split(ds: RatingDataset, spec: SplitSpec) -> tuple[RatingDataset, RatingDataset, RatingDataset]:
    """Seeded entry-wise partition into (train, validation, test).

    The test part is floor((1 - train_fraction) * N) entries; validation is
    floor(validation_fraction * rest) entries carved out of the rest.
    """
    N = len(ds)
    n_test = _floor(N * (1.0 - spec.train_fraction))
    n_val = _floor((N - n_test) * spec.validation_fraction)
    perm = np.random.default_rng(spec.seed).permutation(N)
    test = np.sort(perm[:n_test])
    val = np.sort(perm[n_test : n_test + n_val])
    train = np.sort(perm[n_test + n_val :])
    return ds.subset(train), ds.subset(val), ds.subset(test)


def holdout(ds: RatingDataset, fraction: float, seed: int) -> tuple[RatingDataset, RatingDataset]:
    """Seeded (rest, held-out) partition with floor(fraction * N) held out."""
    N = len(ds)
    n_held = _floor(N * fraction)
    perm = np.random.default_rng(seed).permutation(N)
    return ds.subset(np.sort(perm[n_held:])), ds.subset(np.sort(perm[:n_held]))


def negative_sample(ds: RatingDataset, seed: int, count: int | None = None, observed: RatingDataset | None = None) -> RatingDataset:
    """Draw unobserved (row, col) pairs uniformly without replacement, labelled 0.

    ``count`` defaults to the number of entries in ``ds``; pairs present in
    ``observed`` (default ``ds``) are never drawn.
    """
    if ds.value_kind != "binary":
        raise ValueError("negative sampling applies to binary datasets only")
    count = len(ds) if count is None else int(count)
    obs = np.unique((observed if observed is not None else ds).pair_keys())
    cells = ds.m * ds.n
    free = cells - len(obs)
    if count > free:
        raise ValueError(f"cannot draw {count} negatives: only {free} unobserved cells")
    rng = np.random.default_rng(seed)
    if cells <= 20_000_000:
        pool = np.setdiff1d(np.arange(cells, dtype=np.int64), obs, assume_unique=True)
        keys = np.sort(rng.choice(pool, size=count, replace=False))
    else:
        chosen: list[np.ndarray] = []
        have = np.array([], dtype=np.int64)
        while len(have) < count:
            draw = rng.integers(0, cells, size=2 * (count - len(have)) + 16)
            draw = draw[~np.isin(draw, obs)]
            draw = draw[~np.isin(draw, have)]
            _, first = np.unique(draw, return_index=True)
            draw = draw[np.sort(first)][: count - len(have)]
            chosen.append(draw)
            have = np.concatenate(chosen)
        keys = np.sort(have)
    return RatingDataset(
        ds.m, ds.n, keys // ds.n, keys % ds.n, np.zeros(count),
        ds.user_ids, ds.item_ids, "binary",
    )


def planted_clusters(
    m: int = 1000,
    n: int = 1000,
    clusters: int = 5,
    density: float = 0.01,
    affinity: float = 0.5,
    seed: int = 0,
) -> RatingDataset:
    """Users and items in planted clusters; users prefer their own cluster.

    Exactly ``round(density * m * n)`` cells are observed. A fraction
    ``affinity`` of them pair a user with an item of the same cluster and
    gets a rating of 4 or 5; the rest get 1 to 3.
    """
    rng = np.random.default_rng(seed)
    ucl = rng.integers(0, clusters, m)
    icl = rng.integers(0, clusters, n)
    members = [np.flatnonzero(icl == c) for c in range(clusters)]
    total = int(round(density * m * n))
    keys: set[int] = set()
    rows, cols = [], []
    while len(rows) < total:
        u = int(rng.integers(m))
        if rng.random() < affinity and len(members[ucl[u]]):
            i = int(rng.choice(members[ucl[u]]))
        else:
            i = int(rng.integers(n))
        key = u * n + i
        if key in keys:
            continue
        keys.add(key)
        rows.append(u)
        cols.append(i)
    rows = np.array(rows)
    cols = np.array(cols)
    same = ucl[rows] == icl[cols]
    vals = np.where(same, rng.integers(4, 6, total), rng.integers(1, 4, total)).astype(np.float64)
    return RatingDataset(m, n, rows, cols, vals, value_kind="star")


def write_ratings(ds: RatingDataset, path, sep: str = "::") -> None:
    from .util import atomic_write

    lines = "".join(
        f"{ds.user_ids[r]}{sep}{ds.item_ids[c]}{sep}{v:g}\n" for r, c, v in zip(ds.rows, ds.cols, ds.vals)
    )
    atomic_write(path, lines)
