"""Command-line entry point: ``homf <subcommand> ...``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .util import WORKERS_ENV


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "workers", None) is not None:
        cfg = cfg.with_model(workers=args.workers)
    return cfg


def cmd_fit(args) -> int:
    from .experiment import run_experiment
    from .factorize import load_embeddings, save_text

    cfg = _config(args)
    out = Path(args.out or cfg.output.dir)
    report = run_experiment(cfg, out)
    if args.text:
        save_text(load_embeddings(out / "embeddings.homf"), out / "embeddings")
    sys.stdout.write(report.to_text())
    return 0


def cmd_evaluate(args) -> int:
    from .experiment import evaluate_embeddings
    from .factorize import load_embeddings
    from .util import atomic_write

    cfg = _config(args)
    report = evaluate_embeddings(cfg, load_embeddings(args.embeddings))
    if args.out:
        atomic_write(Path(args.out) / "report.txt", report.to_text())
        atomic_write(Path(args.out) / "report.json", report.to_json())
    sys.stdout.write(report.to_text())
    return 0


def cmd_grid(args) -> int:
    from .experiment import grid_search

    cfg = _config(args)
    result = grid_search(cfg, args.out)
    metric = cfg.grid.metric
    for row in result.table:
        print(
            f"lambda={row['lambda']:g} alpha={row['alpha']:g} T={row['T']} "
            f"g={row['weight_fn']} {metric}={row[metric]:.6f}"
            + (" (degenerate)" if row["degenerate"] else "")
        )
    b = result.best
    print(f"best: lambda={b.model.lam:g} alpha={b.graph.alpha:g} T={b.model.T} g={b.graph.g2}")
    sys.stdout.write(result.report.to_text())
    return 0


def cmd_neighbors(args) -> int:
    from .experiment import read_id_maps
    from .factorize import load_embeddings, neighbors

    E = load_embeddings(args.embeddings)
    maps = read_id_maps(args.maps or Path(args.embeddings).parent)

    def label(node: int) -> str:
        if maps is None:
            return str(node)
        return f"user {maps[0][node]}" if node < E.m else f"item {maps[1][node - E.m]}"

    if maps is not None and args.kind:
        ids = maps[0] if args.kind == "user" else maps[1]
        try:
            node = ids.index(args.node) + (E.m if args.kind == "item" else 0)
        except ValueError:
            print(f"unknown {args.kind} id {args.node}", file=sys.stderr)
            return 2
    else:
        node = int(args.node)
    print(f"query {label(node)}")
    for other, dist in neighbors(E, node, args.count, args.pool):
        print(f"{label(other)}\t{dist:.6f}")
    return 0


def _training_tpm(cfg: ExperimentConfig):
    from .experiment import build_transition, prepare_data

    data = prepare_data(cfg)
    return build_transition(cfg, data, data.train_pool), data


def cmd_sample_column(args) -> int:
    from .walks import WalkConfig, sample_column, sample_row

    cfg = _config(args)
    A, _ = _training_tpm(cfg)
    walk = WalkConfig(args.walk if args.walk else cfg.model.T, cfg.model.support_epsilon)
    vec = (sample_row if args.row else sample_column)(A, args.node, walk)
    sys.stdout.write("".join(f"{x!r}\n" for x in vec.tolist()))
    return 0


def cmd_spectrum(args) -> int:
    from .walks import spectrum_table, tpm_eigenvalues

    cfg = _config(args)
    A, _ = _training_tpm(cfg)
    if A.n_rows > args.max_nodes:
        print(f"{A.n_rows} nodes exceeds --max-nodes {args.max_nodes}; use a smaller instance", file=sys.stderr)
        return 2
    ev = tpm_eigenvalues(A)
    nontrivial = ev[np.abs(ev - 1.0) > 1e-9]
    print(f"# {A.n_rows} nodes; |h(lambda, T)| for the {args.top} largest non-unit eigenvalues")
    print("T\t" + "\t".join(f"h{i + 1}" for i in range(args.top)))
    for T, mags in spectrum_table(nontrivial, range(1, args.t_max + 1)):
        print(f"{T}\t" + "\t".join(f"{x:.6f}" for x in mags[: args.top]))
    return 0


def cmd_speedup(args) -> int:
    from .data import planted_clusters
    from .experiment import speedup_bench
    from .graph import GraphSpec, build_tpm

    cfg = _config(args)
    if args.config:
        A, _ = _training_tpm(cfg)
    else:
        ds = planted_clusters(args.size // 2, args.size - args.size // 2, 5, args.density, 0.5, 0)
        A = build_tpm(ds.to_matrix(), None, None, GraphSpec(ds.m, ds.n))
    fcfg = cfg.fit_config()
    if args.walk:
        from dataclasses import replace

        from .walks import WalkConfig

        fcfg = replace(fcfg, walk=WalkConfig(args.walk, fcfg.walk.support_epsilon))
    counts = [w for w in (1, 2, 4, 8, 16, 32) if w <= args.max_workers]
    print(f"# {A.n_rows} nodes, nnz(A)={A.nnz}, T={fcfg.walk.T}, k={fcfg.k}, cpus={os.cpu_count()}")
    print("N\tseconds\tspeedup")
    for w, t, s in speedup_bench(A, fcfg, counts, args.repeats):
        print(f"{w}\t{t:.4f}\t{s:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="homf", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp, required=True):
        sp.add_argument("--config", required=required, help="experiment INI file")
        sp.add_argument("--workers", type=int, help=f"worker threads (default: config, then ${WORKERS_ENV}, then 1)")

    sp = sub.add_parser("fit", help="fit on the training pool and score the test split")
    with_config(sp)
    sp.add_argument("--out", help="output directory (default: [output] dir)")
    sp.add_argument("--text", action="store_true", help="also export embeddings as text")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("evaluate", help="score saved embeddings on the test split")
    with_config(sp)
    sp.add_argument("--embeddings", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("grid-search", help="validate a hyperparameter grid, then score the best on test")
    with_config(sp)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_grid)

    sp = sub.add_parser("neighbors", help="nearest embedding rows by L2 distance")
    sp.add_argument("--embeddings", required=True)
    sp.add_argument("--node", required=True, help="dense node index, or external id with --kind")
    sp.add_argument("--kind", choices=("user", "item"))
    sp.add_argument("--count", type=int, default=5)
    sp.add_argument("--pool", choices=("users", "items", "all"), default="all")
    sp.add_argument("--maps", help="directory with users.tsv/items.tsv (default: next to embeddings)")
    sp.set_defaults(func=cmd_neighbors)

    sp = sub.add_parser("sample-column", help="print one column (or row) of f_T(A)")
    with_config(sp)
    sp.add_argument("--node", type=int, required=True)
    sp.add_argument("--walk", type=int, help="walk length T (default: [model] T)")
    sp.add_argument("--row", action="store_true", help="sample a row instead of a column")
    sp.set_defaults(func=cmd_sample_column)

    sp = sub.add_parser("spectrum", help="eigenvalue decay of f_T(A) as T grows")
    with_config(sp)
    sp.add_argument("--t-max", type=int, default=20)
    sp.add_argument("--top", type=int, default=8)
    sp.add_argument("--max-nodes", type=int, default=3000)
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("speedup-bench", help="time one update pass per worker count")
    with_config(sp, required=False)
    sp.add_argument("--size", type=int, default=4000, help="synthetic node count when no config")
    sp.add_argument("--density", type=float, default=0.01)
    sp.add_argument("--walk", type=int)
    sp.add_argument("--max-workers", type=int, default=os.cpu_count() or 1)
    sp.add_argument("--repeats", type=int, default=3)
    sp.set_defaults(func=cmd_speedup)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    console = logging.StreamHandler()
    console.setLevel(logging.INFO if args.verbose else logging.WARNING)
    console.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, handlers=[console])
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # stage-tagged errors already carry context
        from .experiment import StageError

        if isinstance(exc, (StageError, OSError, ValueError)):
            print(f"error: {exc}", file=sys.stderr)
            return 1
        raise


if __name__ == "__main__":
    sys.exit(main())
