"""End-to-end runs: data -> split -> graph -> fit -> metrics -> files."""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .data import (
    RatingDataset,
    SplitSpec,
    holdout,
    load_graph,
    load_ratings,
    negative_sample,
    planted_clusters,
    split,
)
from .factorize import EmbeddingPair, ObjectiveTrace, fit, predict_many, save_embeddings
from .graph import build_tpm
from .metrics import MetricReport, UserTestSet, aggregate, auc
from .sparse import SparseMatrix
from .util import atomic_write, resolve_workers
from .walks import WorkCounter

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, f"{type(exc).__name__}: {exc}") from exc


@dataclass
class PreparedData:
    full: RatingDataset
    train: RatingDataset
    validation: RatingDataset
    test: RatingDataset
    row_graph: SparseMatrix | None
    col_graph: SparseMatrix | None

    @property
    def train_pool(self) -> RatingDataset:
        return self.train.concat(self.validation)


def _map_onto(ds: RatingDataset, ref: RatingDataset) -> RatingDataset:
    """Re-index ``ds`` through the id maps of ``ref``; unknown ids are dropped."""
    users, items = ref.user_index, ref.item_index
    r = np.array([users.get(ds.user_ids[i], -1) for i in ds.rows], dtype=np.int64)
    c = np.array([items.get(ds.item_ids[j], -1) for j in ds.cols], dtype=np.int64)
    keep = (r >= 0) & (c >= 0)
    if not keep.all():
        log.warning("dropped %d test entries with ids unseen in training data", int((~keep).sum()))
    return RatingDataset(ref.m, ref.n, r[keep], c[keep], ds.vals[keep], ref.user_ids, ref.item_ids, ref.value_kind)


def prepare_data(cfg: ExperimentConfig) -> PreparedData:
    d = cfg.data
    with stage("load"):
        if d.ratings:
            full = load_ratings(d.ratings, d.format, d.value_kind, d.header)
        else:
            s = cfg.synthetic
            full = planted_clusters(s.m, s.n, s.clusters, s.density, s.affinity, s.seed)
        row_graph = load_graph(d.row_graph, full.m, full.user_index) if d.row_graph else None
        col_graph = load_graph(d.col_graph, full.n, full.item_index) if d.col_graph else None
    with stage("split"):
        sp = SplitSpec(cfg.split.train_fraction, cfg.split.validation_fraction, cfg.split.seed)
        if d.test_ratings:
            provided = load_ratings(d.test_ratings, d.format, d.value_kind, d.header)
            test = _map_onto(provided, full)
            train, validation = holdout(full, sp.validation_fraction, sp.seed)
        else:
            train, validation, test = split(full, sp)
    return PreparedData(full, train, validation, test, row_graph, col_graph)


def build_transition(cfg: ExperimentConfig, data: PreparedData, train: RatingDataset) -> SparseMatrix:
    with stage("graph"):
        R = train.to_matrix()
        return build_tpm(R, data.row_graph, data.col_graph, cfg.graph_spec(train.m, train.n))


def score_split(
    cfg: ExperimentConfig,
    data: PreparedData,
    E: EmbeddingPair,
    target: RatingDataset,
    train: RatingDataset,
) -> MetricReport:
    """Metrics of ``E`` on ``target`` entries (validation or test)."""
    sym = cfg.model.symmetric_predict
    if len(target) == 0:
        raise ValueError("evaluation split is empty")
    if target.value_kind == "binary":
        negatives = negative_sample(
            train, cfg.eval.negative_seed, count=len(train), observed=data.full
        )
        s_pos = predict_many(E, target.rows, target.cols, sym)
        s_neg = predict_many(E, negatives.rows, negatives.cols, sym)
        value = auc(np.concatenate([s_pos, s_neg]), np.r_[np.ones(len(s_pos)), np.zeros(len(s_neg))])
        return MetricReport({"auc": value}, [], n_users=len(np.unique(target.rows)))
    scores = predict_many(E, target.rows, target.cols, sym)
    relevant = target.vals >= cfg.data.relevance_threshold
    order = np.argsort(target.rows, kind="stable")
    users = []
    bounds = np.flatnonzero(np.diff(target.rows[order])) + 1
    for chunk in np.split(order, bounds):
        users.append(UserTestSet(int(target.rows[chunk[0]]), target.cols[chunk], relevant[chunk], scores[chunk]))
    report = aggregate(users, cfg.eval.ks)
    if relevant.any() and not relevant.all():
        report.values["auc"] = auc(scores, relevant)
    return report


def train_and_score(
    cfg: ExperimentConfig,
    data: PreparedData,
    train: RatingDataset,
    target: RatingDataset,
    counter: WorkCounter | None = None,
) -> tuple[MetricReport, EmbeddingPair, ObjectiveTrace]:
    A = build_transition(cfg, data, train)
    with stage("fit"):
        E, trace = fit(A, cfg.fit_config(), m=train.m, counter=counter)
    with stage("evaluate"):
        report = score_split(cfg, data, E, target, train)
    return report, E, trace


def _stamp(report: MetricReport, cfg: ExperimentConfig) -> MetricReport:
    report.metadata = {
        "config_hash": cfg.config_hash(),
        "seed": str(cfg.model.seed),
        "split_seed": str(cfg.split.seed),
        "dataset": cfg.dataset_id,
    }
    return report


def _write_id_maps(out: Path, ds: RatingDataset) -> None:
    for name, ids in (("users.tsv", ds.user_ids), ("items.tsv", ds.item_ids)):
        atomic_write(out / name, "".join(f"{x}\t{i}\n" for i, x in enumerate(ids)))


def read_id_maps(directory) -> tuple[list[str], list[str]] | None:
    directory = Path(directory)
    if not (directory / "users.tsv").exists():
        return None
    out = []
    for name in ("users.tsv", "items.tsv"):
        rows = [line.split("\t") for line in (directory / name).read_text().splitlines() if line]
        out.append([ext for ext, _ in sorted(rows, key=lambda r: int(r[1]))])
    return out[0], out[1]


@contextmanager
def _run_log(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("homf")
    root.addHandler(handler)
    old = root.level
    root.setLevel(min(old, logging.INFO) if old else logging.INFO)
    try:
        yield
    finally:
        root.removeHandler(handler)
        root.setLevel(old)
        handler.close()


def write_outputs(out: Path, cfg: ExperimentConfig, report: MetricReport, E: EmbeddingPair,
                  trace: ObjectiveTrace, data: PreparedData) -> None:
    with stage("write"):
        atomic_write(out / "report.txt", report.to_text())
        atomic_write(out / "report.json", report.to_json())
        save_embeddings(E, out / "embeddings.homf")
        trace_doc = {
            "config_hash": cfg.config_hash(),
            "seed": cfg.model.seed,
            "initial": trace.initial,
            "values": trace.values,
            "converged": trace.converged,
        }
        atomic_write(out / "trace.json", json.dumps(trace_doc, indent=2) + "\n")
        atomic_write(out / "config.ini", cfg.to_ini())
        _write_id_maps(out, data.full)


def run_experiment(cfg: ExperimentConfig, out_dir=None, data: PreparedData | None = None) -> MetricReport:
    """Fit on the training pool (train + validation) and score the test split."""
    out = Path(out_dir or cfg.output.dir)
    with _run_log(out):
        log.info("run %s on %s", cfg.config_hash(), cfg.dataset_id)
        data = data or prepare_data(cfg)
        started = time.perf_counter()
        report, E, trace = train_and_score(cfg, data, data.train_pool, data.test)
        log.info("fit + evaluation took %.2fs", time.perf_counter() - started)
        _stamp(report, cfg)
        write_outputs(out, cfg, report, E, trace, data)
    return report


def evaluate_embeddings(cfg: ExperimentConfig, E: EmbeddingPair) -> MetricReport:
    data = prepare_data(cfg)
    with stage("evaluate"):
        if (E.m, E.n) != (data.full.m, data.full.n):
            raise ValueError(f"embeddings are for {E.m}x{E.n}, data is {data.full.m}x{data.full.n}")
        return _stamp(score_split(cfg, data, E, data.test, data.train_pool), cfg)


def _is_degenerate(E: EmbeddingPair) -> bool:
    scale = max(np.abs(E.U).max(), np.abs(E.V).max())
    return not np.isfinite(scale) or scale < 1e-12


@dataclass
class GridResult:
    best: ExperimentConfig
    table: list[dict]
    report: MetricReport


def grid_points(cfg: ExperimentConfig, data: PreparedData) -> list[ExperimentConfig]:
    g = cfg.grid
    alphas = g.alpha if (data.row_graph is not None or data.col_graph is not None) else (0.0,)
    points = []
    for lam, alpha, T, wfn in itertools.product(g.lam, alphas, g.T, g.weight_fn):
        c = cfg.with_model(lam=lam, T=T).with_graph(alpha=alpha, g1=wfn, g2=wfn)
        points.append(c)
    return points


def grid_search(cfg: ExperimentConfig, out_dir=None) -> GridResult:
    """Exhaustive search scored on the validation split, then one test run."""
    out = Path(out_dir or cfg.output.dir)
    with _run_log(out):
        data = prepare_data(cfg)
        if len(data.validation) == 0:
            raise StageError("grid", "validation split is empty; set [split] validation_fraction > 0")
        points = grid_points(cfg, data)
        metric = cfg.grid.metric
        jobs = max(1, min(cfg.grid.jobs, len(points)))
        budget = max(1, resolve_workers(cfg.model.workers) // jobs)

        def evaluate(point: ExperimentConfig) -> dict:
            point = point.with_model(workers=budget)
            report, E, _ = train_and_score(point, data, data.train, data.validation)
            if metric not in report.values:
                raise StageError("grid", f"selection metric {metric!r} not produced; have {sorted(report.values)}")
            row = {
                "lambda": point.model.lam,
                "alpha": point.graph.alpha,
                "T": point.model.T,
                "weight_fn": point.graph.g2,
                metric: report.values[metric],
                "degenerate": _is_degenerate(E),
            }
            log.info("grid point %s", row)
            return row

        if jobs == 1:
            table = [evaluate(p) for p in points]
        else:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                table = list(pool.map(evaluate, points))

        candidates = [i for i, row in enumerate(table) if not row["degenerate"]] or list(range(len(table)))
        best_i = max(candidates, key=lambda i: (table[i][metric], -i))
        best = points[best_i]
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(table[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(table)
        atomic_write(out / "grid.csv", buf.getvalue())

        report, E, trace = train_and_score(best, data, data.train_pool, data.test)
        _stamp(report, best)
        write_outputs(out, best, report, E, trace, data)
    return GridResult(best, table, report)


def speedup_bench(A: SparseMatrix, cfg, worker_counts, repeats: int = 1) -> list[tuple[int, float, float]]:
    """Time one V pass for each worker count; rows are (N, seconds, speedup(N))."""
    from .factorize import init_embeddings, update_factor, with_workers

    N = A.n_rows
    E = init_embeddings(N, 0, cfg.k, cfg.seed)
    A.T
    update_factor(A, E.U, "V", with_workers(cfg, 1), E.V)  # JIT warm-up
    timings = {}
    for w in sorted({1, *worker_counts}):
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            update_factor(A, E.U, "V", with_workers(cfg, w), E.V)
            best = min(best, time.perf_counter() - t0)
        timings[w] = best
    return [(w, t, timings[1] / t) for w, t in timings.items()]
