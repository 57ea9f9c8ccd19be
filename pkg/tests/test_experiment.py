import json

import numpy as np
import pytest

from homf import experiment
from homf.cli import main
from homf.config import ConfigError, parse_config
from homf.data import RatingDataset, write_ratings
from homf.experiment import StageError, grid_search, prepare_data, run_experiment
from homf.factorize import load_embeddings

SMALL = """
[synthetic]
m = 120
n = 100
clusters = 3
density = 0.06
seed = 1
[data]
relevance_threshold = 4
[model]
k = 4
lambda = 0.01
T = 3
outer_sweeps = 3
[eval]
ks = 5, 10
[grid]
lambda = 0.01
T = 3
"""


@pytest.fixture
def small_cfg():
    return parse_config(SMALL)


def test_smoke_outputs(small_cfg, tmp_path):
    report = run_experiment(small_cfg, tmp_path)
    for key in ("precision@5", "recall@5", "map@5", "ndcg@5", "auc"):
        assert 0 <= report.values[key] <= 1
    for name in ("report.txt", "report.json", "embeddings.homf", "trace.json", "config.ini", "users.tsv", "run.log"):
        assert (tmp_path / name).exists(), name
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["metadata"]["config_hash"] == small_cfg.config_hash()
    assert doc["metadata"]["seed"] == "0"
    assert json.loads((tmp_path / "trace.json").read_text())["config_hash"] == small_cfg.config_hash()
    E = load_embeddings(tmp_path / "embeddings.homf")
    assert (E.m, E.n, E.k) == (120, 100, 4)
    assert not list(tmp_path.glob("*.tmp*"))


def test_reports_identical_across_workers(small_cfg, tmp_path):
    texts = []
    for w in (1, 3):
        run_experiment(small_cfg.with_model(workers=w), tmp_path / str(w))
        texts.append(((tmp_path / str(w) / "report.txt").read_bytes(), (tmp_path / str(w) / "embeddings.homf").read_bytes()))
    assert texts[0] == texts[1]


def test_graph_excludes_heldout(small_cfg):
    data = prepare_data(small_cfg)
    A = experiment.build_transition(small_cfg, data, data.train_pool)
    m = data.full.m
    for r, c in zip(data.test.rows[:50], data.test.cols[:50]):
        assert A.to_dense()[r, m + c] == 0


def test_single_point_grid_equals_run(small_cfg, tmp_path):
    direct = run_experiment(small_cfg, tmp_path / "run")
    res = grid_search(small_cfg, tmp_path / "grid")
    assert len(res.table) == 1
    assert res.report.values == direct.values
    assert (tmp_path / "grid" / "report.txt").read_bytes() == (tmp_path / "run" / "report.txt").read_bytes()


def test_grid_table_size(small_cfg, tmp_path):
    cfg = parse_config(SMALL.rsplit("[grid]", 1)[0] + "[grid]\nlambda = 0.001, 0.1\nT = 1, 2, 4\n")
    res = grid_search(cfg, tmp_path)
    assert len(res.table) == 3 * 2
    lines = (tmp_path / "grid.csv").read_text().splitlines()
    assert len(lines) == 1 + 6
    assert lines[0].startswith("lambda,alpha,T,weight_fn,ndcg@10")


def test_grid_skips_degenerate(small_cfg, tmp_path):
    cfg = parse_config(SMALL.rsplit("[grid]", 1)[0] + "[grid]\nlambda = 0.01, 1e30\nT = 3\nmetric = ndcg@5\n")
    res = grid_search(cfg, tmp_path)
    flags = {row["lambda"]: row["degenerate"] for row in res.table}
    assert flags == {0.01: False, 1e30: True}
    assert res.best.model.lam == 0.01


def test_grid_selection_rule_prefers_non_degenerate(small_cfg, tmp_path, monkeypatch):
    # force the degenerate point to win on the metric; it must still be excluded
    real = experiment.train_and_score

    def rigged(cfg, data, train, target, counter=None):
        report, E, trace = real(cfg, data, train, target, counter)
        if cfg.model.lam > 1:
            report.values["ndcg@5"] = 1.0
            E.U[:] = 0
            E.V[:] = 0
        return report, E, trace

    monkeypatch.setattr(experiment, "train_and_score", rigged)
    cfg = parse_config(SMALL.rsplit("[grid]", 1)[0] + "[grid]\nlambda = 0.01, 100\nT = 3\nmetric = ndcg@5\n")
    assert grid_search(cfg, tmp_path).best.model.lam == 0.01


def test_grid_missing_metric(small_cfg, tmp_path):
    cfg = parse_config(SMALL + "metric = ndcg@20\n")
    with pytest.raises(StageError, match=r"\[grid\]"):
        grid_search(cfg, tmp_path)


def test_grid_needs_validation(tmp_path):
    cfg = parse_config(SMALL + "[split]\nvalidation_fraction = 0\n")
    with pytest.raises(StageError, match="validation"):
        grid_search(cfg, tmp_path)


def test_grid_concurrent_jobs_match(small_cfg, tmp_path):
    base = SMALL.rsplit("[grid]", 1)[0] + "[grid]\nlambda = 0.001, 0.1\nT = 2\n"
    a = grid_search(parse_config(base), tmp_path / "a")
    b = grid_search(parse_config(base + "jobs = 2\n"), tmp_path / "b")
    assert a.table == b.table


def test_alpha_without_graph_is_config_error():
    with pytest.raises(ConfigError):
        parse_config(SMALL + "[graph]\nalpha = 0.5\n")


def test_stage_tagged_error(tmp_path):
    cfg = parse_config(f"[data]\nratings = {tmp_path / 'missing.dat'}\n")
    with pytest.raises(StageError, match=r"^\[load\]"):
        run_experiment(cfg, tmp_path / "out")


def _binary_files(tmp_path):
    rng = np.random.default_rng(0)
    m, n = 60, 50
    keys = rng.choice(m * n, 400, replace=False)
    ds = RatingDataset(m, n, keys // n, keys % n, np.ones(400), value_kind="binary")
    write_ratings(ds, tmp_path / "pos.dat")
    (tmp_path / "items.txt").write_text("".join(f"{i} {i + 1}\n" for i in range(n - 1)))
    return tmp_path / "pos.dat", tmp_path / "items.txt"


def test_binary_with_side_graph(tmp_path):
    ratings, graph = _binary_files(tmp_path)
    cfg = parse_config(
        f"[data]\nratings = {ratings}\nvalue_kind = binary\ncol_graph = {graph}\n"
        "[graph]\nalpha = 0.25\n[model]\nk = 3\nT = 2\nouter_sweeps = 2\n"
    )
    report = run_experiment(cfg, tmp_path / "out")
    assert set(report.values) == {"auc"}
    assert 0 <= report.values["auc"] <= 1


def test_provided_test_file(tmp_path):
    rng = np.random.default_rng(3)
    m, n = 40, 30
    keys = rng.choice(m * n, 300, replace=False)
    ds = RatingDataset(m, n, keys // n, keys % n, rng.integers(1, 6, 300))
    write_ratings(ds.subset(np.arange(250)), tmp_path / "train.dat")
    write_ratings(ds.subset(np.arange(250, 300)), tmp_path / "test.dat")
    cfg = parse_config(
        f"[data]\nratings = {tmp_path / 'train.dat'}\ntest_ratings = {tmp_path / 'test.dat'}\n"
        "relevance_threshold = 4\n[model]\nk = 3\nT = 2\nouter_sweeps = 2\n"
    )
    data = prepare_data(cfg)
    assert len(data.train_pool) == 250
    assert len(data.test) <= 50
    run_experiment(cfg, tmp_path / "out")


class TestCli:
    @pytest.fixture
    def ini(self, tmp_path):
        p = tmp_path / "small.ini"
        p.write_text(SMALL + "[output]\ndir = run\n")
        return p

    def test_fit_evaluate_neighbors(self, ini, tmp_path, capsys):
        assert main(["fit", "--config", str(ini), "--text"]) == 0
        out = tmp_path / "run"
        fit_text = capsys.readouterr().out
        assert "ndcg 5" in fit_text
        assert (out / "embeddings.U.txt").exists() and (out / "embeddings.V.txt").exists()

        assert main(["evaluate", "--config", str(ini), "--embeddings", str(out / "embeddings.homf")]) == 0
        assert capsys.readouterr().out == fit_text

        assert main(["neighbors", "--embeddings", str(out / "embeddings.homf"), "--node", "0", "--kind", "user", "--count", "3"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "query user 0" and len(lines) == 4

        assert main(["neighbors", "--embeddings", str(out / "embeddings.homf"), "--node", "nope", "--kind", "item"]) == 2

    def test_workers_flag(self, ini, tmp_path):
        assert main(["fit", "--config", str(ini), "--workers", "2", "--out", str(tmp_path / "w2")]) == 0
        assert (tmp_path / "w2" / "report.txt").exists()

    def test_sample_column(self, ini, capsys):
        assert main(["sample-column", "--config", str(ini), "--node", "5", "--walk", "3"]) == 0
        vals = [float(x) for x in capsys.readouterr().out.split()]
        assert len(vals) == 220
        assert min(vals) >= 0

    def test_spectrum(self, ini, capsys):
        assert main(["spectrum", "--config", str(ini), "--t-max", "4", "--top", "3"]) == 0
        rows = [line.split("\t") for line in capsys.readouterr().out.splitlines() if not line.startswith(("#", "T"))]
        assert [r[0] for r in rows] == ["1", "2", "3", "4"]
        top = [float(r[1]) for r in rows]
        assert all(b <= a + 1e-12 for a, b in zip(top, top[1:]))

    def test_spectrum_too_large(self, ini):
        assert main(["spectrum", "--config", str(ini), "--max-nodes", "10"]) == 2

    def test_speedup_bench(self, capsys):
        assert main(["speedup-bench", "--size", "300", "--max-workers", "2", "--repeats", "1", "--walk", "2"]) == 0
        rows = [line.split("\t") for line in capsys.readouterr().out.splitlines() if line[0].isdigit()]
        assert [r[0] for r in rows] == ["1", "2"]
        assert float(rows[0][2]) == 1.0

    def test_grid_search(self, ini, tmp_path, capsys):
        assert main(["grid-search", "--config", str(ini), "--out", str(tmp_path / "g")]) == 0
        assert "best: lambda=0.01" in capsys.readouterr().out

    def test_config_error_exit(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[graph]\nalpha = 0.5\n")
        assert main(["fit", "--config", str(bad)]) == 2
        assert "config error" in capsys.readouterr().err
