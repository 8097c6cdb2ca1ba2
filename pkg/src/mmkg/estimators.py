"""scikit-learn compatible wrappers around the filtering and link-prediction code."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from mmkg.evaluation import evaluate, mean_rank, rank_batch
from mmkg.graph import MultimodalGraph
from mmkg.models import MODEL_KINDS, VocabIndex
from mmkg.naf import run_naf, subgraph_from_selection
from mmkg.training import SplitSpec, TrainConfig, train


def check_graph(graph) -> MultimodalGraph:
    if not isinstance(graph, MultimodalGraph):
        raise TypeError(f"expected a MultimodalGraph, got {type(graph).__name__}")
    return graph


def check_triples(X, allow_empty=False) -> np.ndarray:
    """Coerce triples to an (n, 3) object array of string ids."""
    if isinstance(X, MultimodalGraph):
        X = X.sorted_triples()
    arr = np.array([tuple(t) for t in X], dtype=object) if not isinstance(X, np.ndarray) else X
    if arr.size == 0:
        if allow_empty:
            return np.empty((0, 3), dtype=object)
        raise ValueError("no triples given")
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"triples must have shape (n, 3), got {arr.shape}")
    return arr.astype(object)


class NafFilter(TransformerMixin, BaseEstimator):
    """Neighbor-aware image filter.

    ``fit`` scores the images of a graph and picks the covering selection;
    ``transform`` returns the graph restricted to the selected images.
    """

    def __init__(self, coverage="reachable"):
        self.coverage = coverage

    def fit(self, graph, y=None):
        graph = check_graph(graph)
        self.outcome_ = run_naf(graph, coverage=self.coverage)
        self.scores_ = self.outcome_.score_map()
        self.selected_ = list(self.outcome_.selected)
        self.n_images_in_ = len(graph.images)
        return self

    def transform(self, graph):
        check_is_fitted(self, "outcome_")
        return subgraph_from_selection(check_graph(graph), self.outcome_)


class LinkPredictor(BaseEstimator):
    """Embedding model for link prediction over string-id triples.

    ``fit(X)`` trains on triples ``X``; pass ``X_valid`` for early stopping,
    otherwise 10% of ``X`` is held out. ``graph`` fixes the entity and
    relation vocabulary (defaults to the ids present in the training data).
    """

    def __init__(self, model="transe", dim=128, batch_size=2048, learning_rate=0.001, max_epochs=500, patience=5,
                 negatives_per_positive=16, loss_kind="logsigmoid", margin=1.0, weight_decay=0.0, seed=42):
        self.model = model
        self.dim = dim
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.patience = patience
        self.negatives_per_positive = negatives_per_positive
        self.loss_kind = loss_kind
        self.margin = margin
        self.weight_decay = weight_decay
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, learning_rate=self.learning_rate, max_epochs=self.max_epochs,
                           patience=self.patience, negatives_per_positive=self.negatives_per_positive,
                           loss_kind=self.loss_kind, margin=self.margin, weight_decay=self.weight_decay,
                           seed=self.seed, dim=self.dim)

    def fit(self, X, y=None, X_valid=None, graph=None):
        if self.model not in MODEL_KINDS:
            raise ValueError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        X = check_triples(X)
        if X_valid is None:
            order = np.random.default_rng(self.seed).permutation(len(X))
            n_valid = max(1, len(X) // 10)
            X_valid, X = X[order[:n_valid]], X[order[n_valid:]]
        else:
            X_valid = check_triples(X_valid)
        if graph is not None:
            self.vocab_ = VocabIndex.from_graph(check_graph(graph))
        else:
            self.vocab_ = VocabIndex.from_triples([tuple(t) for t in np.concatenate([X, X_valid])])
        split = SplitSpec([tuple(t) for t in X], [tuple(t) for t in X_valid], [])
        result = train(None, split, self.model, self._config(), vocab=self.vocab_)
        self.state_ = result.state
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        return self

    def _ids(self, X):
        check_is_fitted(self, "state_")
        return self.vocab_.encode([tuple(t) for t in check_triples(X)])

    def decision_function(self, X) -> np.ndarray:
        """Plausibility score of each triple (higher is more plausible)."""
        ids = self._ids(X)
        return self.state_.score(ids[:, 0], ids[:, 1], ids[:, 2])

    def predict(self, X, task="tail") -> np.ndarray:
        """Top-scoring id for the ``task`` slot of each triple."""
        ids = self._ids(X)
        fixed = {"head": dict(r=ids[:, 1], t=ids[:, 2]), "relation": dict(h=ids[:, 0], t=ids[:, 2]),
                 "tail": dict(h=ids[:, 0], r=ids[:, 1])}[task]
        best = np.argmax(self.state_.score_candidates(axis=task, **fixed), axis=1)
        names = self.vocab_.relations if task == "relation" else self.vocab_.entities
        return np.array([names[i] for i in best], dtype=object)

    def rank(self, X, task="tail") -> np.ndarray:
        return rank_batch(self.state_, self._ids(X), task)

    def evaluate(self, X, workers=1):
        return evaluate(self.state_, self._ids(X), workers=workers)

    def score(self, X, y=None) -> float:
        """Negative tail-prediction mean rank, so that greater is better."""
        return -mean_rank(self.rank(X, "tail"))
