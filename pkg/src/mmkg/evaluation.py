"""Ranking and classification metrics.

Link prediction ranks the true candidate among *all* entities (head/tail) or
all relations without filtering other known triples. Ties count half:
``rank = 1 + #higher + floor(#tied_others / 2)``.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from mmkg.exceptions import EmptyInput, EmptyRelevant, InvalidK, LengthMismatch

TASKS = ("head", "relation", "tail")
DEFAULT_KS = (3, 5, 10)
_SLOT = {"head": 0, "relation": 1, "tail": 2}


def ranks_from_scores(scores: np.ndarray, true_idx: np.ndarray) -> np.ndarray:
    scores = np.atleast_2d(scores)
    true_idx = np.asarray(true_idx, dtype=np.int64)
    s_true = scores[np.arange(len(true_idx)), true_idx][:, None]
    higher = np.sum(scores > s_true, axis=1)
    tied = np.sum(scores == s_true, axis=1) - 1
    return 1 + higher + tied // 2


def _fixed(ids: np.ndarray, task: str):
    h, r, t = ids[:, 0], ids[:, 1], ids[:, 2]
    if task == "head":
        return dict(r=r, t=t)
    if task == "relation":
        return dict(h=h, t=t)
    return dict(h=h, r=r)


def rank_batch(state, ids, task: str, workers: int = 1, chunk: int = 256) -> np.ndarray:
    """Raw ranks for an (n, 3) id array; chunks run in order on ``workers`` threads."""
    if task not in _SLOT:
        raise ValueError(f"task must be one of {TASKS}, got {task!r}")
    ids = np.asarray(ids, dtype=np.int64).reshape(-1, 3)
    pieces = [ids[i:i + chunk] for i in range(0, len(ids), chunk)]

    def run(piece):
        scores = state.score_candidates(axis=task, **_fixed(piece, task))
        return ranks_from_scores(scores, piece[:, _SLOT[task]])

    if not pieces:
        return np.zeros(0, dtype=np.int64)
    if workers > 1 and len(pieces) > 1:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(run, pieces))
    else:
        out = [run(p) for p in pieces]
    return np.concatenate(out)


def rank_triple(state, triple, task: str) -> int:
    return int(rank_batch(state, np.asarray([triple]), task)[0])


def mean_rank(ranks) -> float:
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise EmptyInput("mean rank of an empty rank list")
    return float(np.sum(ranks) / ranks.size)


def hits_at_k(ranks, k: int) -> float:
    """Percentage of ranks <= k."""
    if k < 1:
        raise InvalidK(f"K must be >= 1, got {k}")
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise EmptyInput("hits@k of an empty rank list")
    return float(100.0 * np.count_nonzero(ranks <= k) / ranks.size)


@dataclass
class TaskMetrics:
    mr: float
    hits: Dict[int, float]
    count: int

    @classmethod
    def from_ranks(cls, ranks, ks=DEFAULT_KS) -> "TaskMetrics":
        return cls(mean_rank(ranks), {k: hits_at_k(ranks, k) for k in ks}, int(np.size(ranks)))


@dataclass
class EvalReport:
    tasks: Dict[str, TaskMetrics]
    model: str = ""
    ranks: Dict[str, np.ndarray] = field(default_factory=dict, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "tasks": {
                task: {"mr": m.mr, "hits": {str(k): v for k, v in m.hits.items()}, "count": m.count}
                for task, m in self.tasks.items()
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, obj) -> "EvalReport":
        tasks = {
            task: TaskMetrics(v["mr"], {int(k): h for k, h in v["hits"].items()}, v["count"])
            for task, v in obj["tasks"].items()
        }
        return cls(tasks, obj.get("model", ""))

    def format_table(self) -> str:
        """Plain-text table: MR and Hits@K for each task, side by side."""
        order = [t for t in TASKS if t in self.tasks]
        ks = sorted(next(iter(self.tasks.values())).hits) if self.tasks else []
        cols = ["MR"] + [f"Hits@{k}" for k in ks]
        name_w = max(8, len(self.model))
        top = " " * name_w + " | " + " | ".join(
            f"{(t.capitalize() + ' Prediction'):^{10 * len(cols) - 1}}" for t in order)
        sub = f"{'Model':<{name_w}} | " + " | ".join(" ".join(f"{c:>9}" for c in cols) for _ in order)
        row = f"{self.model:<{name_w}} | " + " | ".join(
            " ".join([f"{self.tasks[t].mr:>9.2f}"] + [f"{self.tasks[t].hits[k]:>9.2f}" for k in ks]) for t in order)
        return "\n".join([top, sub, "-" * len(sub), row])


def evaluate(state, test_ids, ks=DEFAULT_KS, tasks=TASKS, workers: int = 1, model_name: str = "") -> EvalReport:
    test_ids = np.asarray(test_ids, dtype=np.int64).reshape(-1, 3)
    if len(test_ids) == 0:
        raise EmptyInput("no test triples")
    ranks = {task: rank_batch(state, test_ids, task, workers=workers) for task in tasks}
    metrics = {task: TaskMetrics.from_ranks(r, ks) for task, r in ranks.items()}
    return EvalReport(metrics, model_name or getattr(state, "kind", ""), ranks)


# ---------------------------------------------------------------------------
# retrieval and classification


def precision_recall_at_k(relevant: Iterable, retrieved: Sequence, k: int) -> Tuple[float, float]:
    if k < 1:
        raise InvalidK(f"k must be >= 1, got {k}")
    relevant = set(relevant)
    if not relevant:
        raise EmptyRelevant("recall@k is undefined without relevant items")
    hits = len(set(list(retrieved)[:k]) & relevant)
    return hits / k, hits / len(relevant)


def mean_precision_recall_at_k(queries: Iterable[Tuple[Iterable, Sequence]], k: int) -> Tuple[float, float]:
    """Average precision@k and recall@k over (relevant, retrieved) query pairs."""
    pairs = [precision_recall_at_k(rel, ret, k) for rel, ret in queries]
    if not pairs:
        raise EmptyInput("no queries")
    return float(np.mean([p for p, _ in pairs])), float(np.mean([r for _, r in pairs]))


@dataclass
class ClassificationReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int
    undefined: Tuple[str, ...] = ()


def classification_metrics(y_true, y_pred) -> ClassificationReport:
    """Binary accuracy/precision/recall/F1; zero-denominator ratios become 0 and are listed in ``undefined``."""
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    if y_true.shape != y_pred.shape:
        raise LengthMismatch(f"{y_true.shape} vs {y_pred.shape}")
    if y_true.size == 0:
        raise EmptyInput("no labels")
    tp = int(np.sum(y_true & y_pred))
    fp = int(np.sum(~y_true & y_pred))
    fn = int(np.sum(y_true & ~y_pred))
    tn = int(np.sum(~y_true & ~y_pred))
    undefined = []

    def ratio(num, den, name):
        if den == 0:
            undefined.append(name)
            return 0.0
        return num / den

    precision = ratio(tp, tp + fp, "precision")
    recall = ratio(tp, tp + fn, "recall")
    f1 = ratio(2 * precision * recall, precision + recall, "f1")
    return ClassificationReport((tp + tn) / y_true.size, precision, recall, f1, tp, fp, fn, tn, tuple(undefined))
