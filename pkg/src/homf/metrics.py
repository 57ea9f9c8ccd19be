"""Top-K ranking metrics averaged over users, and AUC for binary data.

Items are ranked by predicted score, descending, with ties broken by
ascending item index. Users without any relevant test item are skipped.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

METRICS = ("precision", "recall", "map", "ndcg")


@dataclass
class UserTestSet:
    user: int
    items: np.ndarray
    relevance: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        self.items = np.asarray(self.items, dtype=np.int64)
        self.relevance = np.asarray(self.relevance, dtype=np.float64)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if not (len(self.items) == len(self.relevance) == len(self.scores)):
            raise ValueError("items, relevance and scores must have equal lengths")
        if len(self.items) == 0:
            raise ValueError(f"user {self.user} has no test items")

    @property
    def n_relevant(self) -> float:
        return float(self.relevance.sum())

    def ranked_relevance(self) -> np.ndarray:
        order = np.lexsort((self.items, -self.scores))
        return self.relevance[order]


def precision_recall_at_k(u: UserTestSet, K: int) -> tuple[float, float] | None:
    """(Precision@K, Recall@K), or None if the user has no relevant item."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if u.n_relevant == 0:
        return None
    hits = float(u.ranked_relevance()[:K].sum())
    return hits / K, hits / u.n_relevant


def average_precision_at_k(u: UserTestSet, K: int) -> float | None:
    """Sum of Precision@j over relevant ranks j <= K, divided by min(#relevant, K)."""
    if u.n_relevant == 0:
        return None
    rel = u.ranked_relevance()[:K]
    prec = np.cumsum(rel) / np.arange(1, len(rel) + 1)
    return float(np.sum(prec * rel) / min(u.n_relevant, K))


def _dcg(rel: np.ndarray) -> float:
    return float(np.sum((2.0**rel - 1.0) / np.log2(np.arange(2, len(rel) + 2))))


def ndcg_at_k(u: UserTestSet, K: int) -> float | None:
    if u.n_relevant == 0:
        return None
    dcg = _dcg(u.ranked_relevance()[:K])
    idcg = _dcg(np.sort(u.relevance)[::-1][:K])
    return dcg / idcg


def auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative (ties count 1/2)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal lengths")
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative label")
    ranks = rankdata(scores)  # average ranks handle ties
    u_stat = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_stat / (n_pos * n_neg))


@dataclass
class MetricReport:
    values: dict[str, float]
    ks: list[int]
    n_users: int = 0
    n_skipped: int = 0
    metadata: dict[str, str] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"# {key}: {self.metadata[key]}" for key in sorted(self.metadata)]
        lines.append(f"# users: {self.n_users} evaluated, {self.n_skipped} skipped")
        for name in sorted(self.values, key=_metric_sort_key):
            base, _, k = name.partition("@")
            lines.append(f"{base} {k or '-'} {self.values[name]:.10f}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {
            "metrics": self.values,
            "ks": self.ks,
            "n_users": self.n_users,
            "n_skipped": self.n_skipped,
            "metadata": self.metadata,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> MetricReport:
        doc = json.loads(text)
        return cls(doc["metrics"], doc["ks"], doc["n_users"], doc["n_skipped"], doc["metadata"])


def _metric_sort_key(name: str):
    base, _, k = name.partition("@")
    order = METRICS.index(base) if base in METRICS else len(METRICS)
    return order, int(k) if k else 0, base


def aggregate(users: list[UserTestSet], Ks) -> MetricReport:
    """Unweighted mean over users that have at least one relevant item."""
    Ks = sorted({int(k) for k in Ks})
    kept = [u for u in users if u.n_relevant > 0]
    if not kept:
        raise ValueError("every user was skipped: no relevant test items")
    values = {}
    for K in Ks:
        pr = [precision_recall_at_k(u, K) for u in kept]
        values[f"precision@{K}"] = float(np.mean([p for p, _ in pr]))
        values[f"recall@{K}"] = float(np.mean([r for _, r in pr]))
        values[f"map@{K}"] = float(np.mean([average_precision_at_k(u, K) for u in kept]))
        values[f"ndcg@{K}"] = float(np.mean([ndcg_at_k(u, K) for u in kept]))
    return MetricReport(values, Ks, n_users=len(kept), n_skipped=len(users) - len(kept))
