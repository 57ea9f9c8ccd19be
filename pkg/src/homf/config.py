"""Experiment configuration: an INI document with flat key = value sections.

Every key and its default is listed in ``docs/config.md``. Relative paths
are resolved against the directory holding the config file.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .factorize import FitConfig
from .graph import GraphSpec, WeightFn
from .walks import WalkConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataSection:
    ratings: Optional[str] = None
    format: str = "double-colon"
    value_kind: str = "star"
    header: bool = False
    test_ratings: Optional[str] = None
    row_graph: Optional[str] = None
    col_graph: Optional[str] = None
    relevance_threshold: float = 5.0
    dataset_id: Optional[str] = None


@dataclass(frozen=True)
class SyntheticSection:
    m: int = 1000
    n: int = 1000
    clusters: int = 5
    density: float = 0.01
    affinity: float = 0.5
    seed: int = 0


@dataclass(frozen=True)
class SplitSection:
    train_fraction: float = 0.8
    validation_fraction: float = 0.2
    seed: int = 0


@dataclass(frozen=True)
class GraphSection:
    alpha: float = 0.0
    g1: str = "exponential"
    g2: str = "exponential"
    g3: Optional[str] = None
    linear_c: float = 1.0


@dataclass(frozen=True)
class ModelSection:
    k: int = 10
    lam: float = 0.01
    T: int = 4
    support_epsilon: float = 0.0
    outer_sweeps: int = 20
    cg_tol: float = 1e-8
    cg_max_iter: int = 100
    seed: int = 0
    workers: Optional[int] = None
    update_order: str = "VU"
    rel_tol: float = 1e-4
    objective_sample: int = 1000
    symmetric_predict: bool = False


@dataclass(frozen=True)
class EvalSection:
    ks: tuple[int, ...] = (5, 10)
    negative_seed: int = 0


@dataclass(frozen=True)
class GridSection:
    lam: tuple[float, ...] = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0)
    alpha: tuple[float, ...] = (0.15, 0.25, 0.5, 0.75)
    T: tuple[int, ...] = (2, 4, 6, 8)
    weight_fn: tuple[str, ...] = ("exponential",)
    metric: str = "ndcg@10"
    jobs: int = 1


@dataclass(frozen=True)
class OutputSection:
    dir: str = "runs/default"


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataSection = field(default_factory=DataSection)
    synthetic: SyntheticSection = field(default_factory=SyntheticSection)
    split: SplitSection = field(default_factory=SplitSection)
    graph: GraphSection = field(default_factory=GraphSection)
    model: ModelSection = field(default_factory=ModelSection)
    eval: EvalSection = field(default_factory=EvalSection)
    grid: GridSection = field(default_factory=GridSection)
    output: OutputSection = field(default_factory=OutputSection)

    # keys that never change results
    NON_SEMANTIC = {("model", "workers"), ("output", "dir"), ("grid", "jobs")}

    def __post_init__(self):
        d, g, mdl = self.data, self.graph, self.model
        if d.format not in ("double-colon", "tab", "comma"):
            raise ConfigError(f"[data] format must be double-colon, tab or comma, got {d.format!r}")
        if d.value_kind not in ("star", "binary"):
            raise ConfigError(f"[data] value_kind must be star or binary, got {d.value_kind!r}")
        if not 0.0 <= g.alpha < 1.0:
            raise ConfigError(f"[graph] alpha must lie in [0, 1), got {g.alpha}")
        if g.alpha > 0 and not (d.row_graph or d.col_graph):
            raise ConfigError("[graph] alpha > 0 requires [data] row_graph or col_graph")
        if mdl.T < 1:
            raise ConfigError("[model] T must be >= 1")
        if not self.eval.ks:
            raise ConfigError("[eval] ks must not be empty")
        for name in ("lam", "alpha", "T", "weight_fn"):
            if not getattr(self.grid, name):
                raise ConfigError(f"[grid] {name} must not be empty")
        try:
            self.fit_config()
            self.graph_spec(1, 1)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def fit_config(self) -> FitConfig:
        mdl = self.model
        return FitConfig(
            k=mdl.k, lam=mdl.lam, walk=WalkConfig(mdl.T, mdl.support_epsilon),
            outer_sweeps=mdl.outer_sweeps, cg_tol=mdl.cg_tol, cg_max_iter=mdl.cg_max_iter,
            seed=mdl.seed, workers=mdl.workers, update_order=mdl.update_order,
            rel_tol=mdl.rel_tol, objective_sample=mdl.objective_sample,
        )

    def graph_spec(self, m: int, n: int) -> GraphSpec:
        g = self.graph
        return GraphSpec(
            m, n, g.alpha,
            WeightFn.parse(g.g1, g.linear_c),
            WeightFn.parse(g.g2, g.linear_c),
            None if g.g3 is None else WeightFn.parse(g.g3, g.linear_c),
        )

    @property
    def dataset_id(self) -> str:
        if self.data.dataset_id:
            return self.data.dataset_id
        if self.data.ratings:
            return Path(self.data.ratings).stem
        s = self.synthetic
        return f"planted-{s.m}x{s.n}-c{s.clusters}-d{s.density:g}-s{s.seed}"

    def semantic_dict(self) -> dict:
        out = {}
        for sec in fields(self):
            if sec.name == "grid":
                continue
            body = dataclasses.asdict(getattr(self, sec.name))
            for key in list(body):
                if (sec.name, key) in self.NON_SEMANTIC:
                    del body[key]
            if sec.name == "synthetic" and self.data.ratings:
                continue
            out[sec.name] = body
        return out

    def config_hash(self) -> str:
        doc = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"), default=list)
        return hashlib.sha256(doc.encode()).hexdigest()[:16]

    def with_model(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, model=dataclasses.replace(self.model, **changes))

    def with_graph(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, graph=dataclasses.replace(self.graph, **changes))

    def to_ini(self) -> str:
        lines = []
        for sec in fields(self):
            lines.append(f"[{sec.name}]")
            body = getattr(self, sec.name)
            for f in fields(body):
                value = getattr(body, f.name)
                if value is None:
                    continue
                key = "lambda" if f.name == "lam" else f.name
                if isinstance(value, tuple):
                    value = ", ".join(str(v) for v in value)
                lines.append(f"{key} = {value}")
            lines.append("")
        return "\n".join(lines)


_SECTIONS = {f.name: f.type for f in fields(ExperimentConfig)}


def _convert(raw: str, default, annotation: str):
    raw = raw.strip()
    if "tuple" in annotation:
        items = [x.strip() for x in raw.replace(";", ",").split(",") if x.strip()]
        if "int" in annotation:
            return tuple(int(x) for x in items)
        if "float" in annotation:
            return tuple(float(x) for x in items)
        return tuple(items)
    if raw.lower() in ("", "none") and "Optional" in annotation:
        return None
    if "bool" in annotation:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if "int" in annotation:
        return int(raw)
    if "float" in annotation:
        return float(raw)
    return raw


def parse_config(text: str, base_dir: Path | str | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    sections = {}
    defaults = ExperimentConfig()
    for name in parser.sections():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        current = getattr(defaults, name)
        known = {f.name: f for f in fields(current)}
        values = {}
        for key, raw in parser.items(name):
            attr = "lam" if key == "lambda" else key
            if attr not in known:
                raise ConfigError(f"unknown key {key!r} in [{name}]")
            try:
                values[attr] = _convert(raw, getattr(current, attr), str(known[attr].type))
            except ValueError as exc:
                raise ConfigError(f"[{name}] {key}: {exc}") from None
        sections[name] = dataclasses.replace(current, **values)
    if base_dir is not None and "data" in sections:
        base = Path(base_dir)
        d = sections["data"]
        resolved = {
            key: str((base / getattr(d, key)).resolve())
            for key in ("ratings", "test_ratings", "row_graph", "col_graph")
            if getattr(d, key)
        }
        sections["data"] = dataclasses.replace(d, **resolved)
    if base_dir is not None and "output" in sections:
        o = sections["output"]
        sections["output"] = dataclasses.replace(o, dir=str((Path(base_dir) / o.dir).resolve()))
    return ExperimentConfig(**sections)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), path.parent)
