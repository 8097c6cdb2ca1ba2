"""Negative-sampled training with sparse AdamW and early stopping."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from mmkg.evaluation import mean_rank, rank_batch
from mmkg.exceptions import EmptySplit, NonFiniteLoss, NonFiniteParameter, TooFewTriples
from mmkg.models import KGEModel, SparseGrad, VocabIndex, init_model

logger = logging.getLogger(__name__)

LOSS_KINDS = ("logsigmoid", "margin")


@dataclass
class TrainConfig:
    batch_size: int = 2048
    learning_rate: float = 0.001
    max_epochs: int = 500
    patience: int = 5
    negatives_per_positive: int = 16
    loss_kind: str = "logsigmoid"
    margin: float = 1.0
    weight_decay: float = 0.0
    seed: int = 42
    dim: int = 128
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        self.loss_kind = self.loss_kind.lower()
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"loss_kind must be one of {LOSS_KINDS}, got {self.loss_kind!r}")
        for name in ("batch_size", "max_epochs", "patience", "negatives_per_positive", "dim"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# splitting


@dataclass
class SplitSpec:
    train: list
    valid: list
    test: list
    ratios: tuple = (8, 1, 1)


def _parse_ratios(ratios):
    if isinstance(ratios, str):
        ratios = [float(x) for x in ratios.split(":")]
    ratios = tuple(ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"need three positive ratio parts, got {ratios}")
    return ratios


def split_triples(triples: Sequence, ratios=(8, 1, 1), seed: int = 42) -> SplitSpec:
    """Shuffle, cut into train/valid/test, then repair vocabulary coverage.

    Any valid/test triple whose entity or relation is absent from train is
    moved into train and replaced by a train triple whose removal keeps every
    element covered. Sizes drift only when no such replacement exists.
    """
    triples = list(triples)
    ratios = _parse_ratios(ratios)
    n = len(triples)
    if n < 10:
        raise TooFewTriples(f"need at least 10 triples to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [triples[i] for i in order]
    total = sum(ratios)
    b1 = int(round(n * ratios[0] / total))
    b2 = int(round(n * (ratios[0] + ratios[1]) / total))
    train, valid, test = shuffled[:b1], shuffled[b1:b2], shuffled[b2:]

    ents, rels = Counter(), Counter()

    def account(tr, delta):
        h, r, t = tr
        for e in {h, t}:
            ents[e] += delta
        rels[r] += delta

    for tr in train:
        account(tr, 1)

    def covered(tr):
        h, r, t = tr
        return ents[h] > 0 and ents[t] > 0 and rels[r] > 0

    def removable(tr):
        h, r, t = tr
        return all(ents[e] >= 2 for e in {h, t}) and rels[r] >= 2

    alive = [True] * len(train)
    extra: list = []
    pointer = len(train) - 1

    def take_replacement(moved):
        nonlocal pointer
        for rescan in (False, True):
            j = pointer if not rescan else len(train) - 1
            while j >= 0:
                if alive[j] and train[j] != moved and removable(train[j]):
                    alive[j] = False
                    account(train[j], -1)
                    if not rescan:
                        pointer = j - 1
                    return train[j]
                j -= 1
        return None

    for part in (valid, test):
        out = []
        for tr in part:
            if covered(tr):
                out.append(tr)
                continue
            extra.append(tr)
            account(tr, 1)
            rep = take_replacement(tr)
            if rep is not None:
                out.append(rep)
        part[:] = out

    train = [tr for tr, keep in zip(train, alive) if keep] + extra
    # triples moved in later can make earlier-unremovable ones removable; refill shortfalls
    for part, want in ((valid, b2 - b1), (test, n - b2)):
        j = len(train) - 1
        while len(part) < want and j >= 0:
            if removable(train[j]):
                account(train[j], -1)
                part.append(train.pop(j))
            j -= 1
    return SplitSpec(train, valid, test, ratios)


# ---------------------------------------------------------------------------
# negative sampling


def _keys(ids: np.ndarray, n_entities: int, n_relations: int) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    return (ids[..., 0] * n_relations + ids[..., 1]) * n_entities + ids[..., 2]


class NegativeSampler:
    """Head-or-tail corruption with uniform replacement, filtered against known triples.

    A corruption that reproduces a known triple is redrawn up to ``max_tries``
    times; if it still collides it is kept and counted in ``fallbacks``.
    """

    def __init__(self, known_ids, n_entities: int, n_relations: int, max_tries: int = 10):
        self.n_entities = n_entities
        self.n_relations = n_relations
        self.max_tries = max_tries
        known_ids = np.asarray(known_ids, dtype=np.int64).reshape(-1, 3)
        self._known = np.unique(_keys(known_ids, n_entities, n_relations))
        self.fallbacks = 0

    def _is_known(self, ids) -> np.ndarray:
        if self._known.size == 0:
            return np.zeros(ids.shape[:-1], dtype=bool)
        k = _keys(ids, self.n_entities, self.n_relations)
        pos = np.searchsorted(self._known, k)
        pos = np.minimum(pos, self._known.size - 1)
        return self._known[pos] == k

    def _corrupt(self, pos, rng, shape):
        neg = np.broadcast_to(pos[:, None, :], shape + (3,)).copy()
        heads = rng.random(shape) < 0.5
        ents = rng.integers(0, self.n_entities, size=shape)
        neg[..., 0] = np.where(heads, ents, neg[..., 0])
        neg[..., 2] = np.where(heads, neg[..., 2], ents)
        return neg

    def sample(self, positives, k: int, rng: np.random.Generator) -> np.ndarray:
        """(B, k, 3) corrupted id triples for a (B, 3) positive batch."""
        if k < 1:
            raise ValueError("k must be >= 1")
        pos = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
        neg = self._corrupt(pos, rng, (len(pos), k))
        bad = self._is_known(neg)
        tries = 0
        while bad.any() and tries < self.max_tries:
            rows, cols = np.nonzero(bad)
            fresh = self._corrupt(pos[rows], rng, (len(rows), 1))[:, 0, :]
            neg[rows, cols] = fresh
            bad[rows, cols] = self._is_known(fresh)
            tries += 1
        self.fallbacks += int(bad.sum())
        return neg


def sample_negatives(triple, vocab: VocabIndex, k: int, rng: np.random.Generator, known=None) -> np.ndarray:
    sampler = NegativeSampler(known if known is not None else np.zeros((0, 3)), vocab.n_entities, vocab.n_relations)
    return sampler.sample(np.asarray([triple]), k, rng)[0]


# ---------------------------------------------------------------------------
# loss


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def loss_and_grad(state: KGEModel, batch, negatives, config: TrainConfig):
    """Loss over a positive batch and its (B, k, 3) negatives, with the sparse parameter gradient."""
    pos = np.asarray(batch, dtype=np.int64).reshape(-1, 3)
    neg = np.asarray(negatives, dtype=np.int64).reshape(len(pos), -1, 3)
    B, k = neg.shape[0], neg.shape[1]
    s_pos = state.score(pos[:, 0], pos[:, 1], pos[:, 2])
    flat = neg.reshape(-1, 3)
    s_neg = state.score(flat[:, 0], flat[:, 1], flat[:, 2]).reshape(B, k)

    if config.loss_kind == "logsigmoid":
        loss = -np.mean(_log_sigmoid(s_pos)) - np.mean(_log_sigmoid(-s_neg))
        up_pos = -_sigmoid(-s_pos) / B
        up_neg = _sigmoid(s_neg) / (B * k)
    else:
        slack = config.margin - s_pos[:, None] + s_neg
        active = slack > 0
        loss = np.sum(np.where(active, slack, 0.0)) / (B * k)
        up_neg = active / (B * k)
        up_pos = -np.sum(active, axis=1) / (B * k)
    loss = float(loss)
    if not math.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss}; score range [{np.min(s_pos)}, {np.max(s_pos)}]")
    heads = np.concatenate([pos[:, 0], flat[:, 0]])
    rels = np.concatenate([pos[:, 1], flat[:, 1]])
    tails = np.concatenate([pos[:, 2], flat[:, 2]])
    upstream = np.concatenate([up_pos, np.asarray(up_neg, dtype=np.float64).ravel()])
    return loss, state.grad(heads, rels, tails, upstream)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class OptimizerState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, state: KGEModel, beta1=0.9, beta2=0.999, eps=1e-8) -> "OptimizerState":
        return cls(
            {k: np.zeros_like(v) for k, v in state.params.items()},
            {k: np.zeros_like(v) for k, v in state.params.items()},
            0, beta1, beta2, eps,
        )


def optimizer_step(state: KGEModel, opt: OptimizerState, grad: SparseGrad, config: TrainConfig) -> None:
    """Decoupled-weight-decay Adam applied lazily to the rows present in ``grad``."""
    opt.step += 1
    b1, b2 = opt.beta1, opt.beta2
    c1 = 1.0 - b1 ** opt.step
    c2 = 1.0 - b2 ** opt.step
    lr, wd = config.learning_rate, config.weight_decay
    for name, (idx, g) in grad.items():
        theta, m, v = state.params[name], opt.m[name], opt.v[name]
        key = slice(None) if idx is None else idx
        m_rows = b1 * m[key] + (1.0 - b1) * g
        v_rows = b2 * v[key] + (1.0 - b2) * g * g
        m[key] = m_rows
        v[key] = v_rows
        update = (m_rows / c1) / (np.sqrt(v_rows / c2) + opt.eps) + wd * theta[key]
        new = theta[key] - lr * update
        if not np.all(np.isfinite(new)):
            raise NonFiniteParameter(f"non-finite values in {name!r} after step {opt.step}")
        theta[key] = new
    state.project(grad)


# ---------------------------------------------------------------------------
# training loop


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    val_mr: float


@dataclass
class TrainResult:
    state: KGEModel
    history: List[EpochRecord]
    best_epoch: int
    stopped_epoch: int
    early_stopped: bool
    negative_fallbacks: int = 0

    def write_history(self, path) -> None:
        write_history(self.history, path)


def write_history(history: Sequence[EpochRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "loss", "val_mr"])
        for rec in history:
            w.writerow([rec.epoch, repr(rec.loss), repr(rec.val_mr)])


def read_history(path) -> List[EpochRecord]:
    with open(path, encoding="utf-8") as f:
        return [EpochRecord(int(r["epoch"]), float(r["loss"]), float(r["val_mr"])) for r in csv.DictReader(f)]


def _as_ids(triples, vocab: VocabIndex) -> np.ndarray:
    if isinstance(triples, np.ndarray) and np.issubdtype(triples.dtype, np.integer):
        return triples.astype(np.int64).reshape(-1, 3)
    return vocab.encode(list(triples))


def train(graph, split: SplitSpec, model_kind: str, config: Optional[TrainConfig] = None,
          val_metric: Optional[Callable[[KGEModel, int], float]] = None, vocab: Optional[VocabIndex] = None,
          workers: int = 1, progress: Optional[Callable[[EpochRecord], None]] = None) -> TrainResult:
    """Train ``model_kind`` on ``split.train``; early-stop on validation tail MR.

    ``val_metric(state, epoch)`` replaces the validation MR when given (lower
    is better). The returned state is the best-validation snapshot.
    """
    config = config or TrainConfig()
    if vocab is None:
        vocab = VocabIndex.from_graph(graph)
    train_ids = _as_ids(split.train, vocab)
    valid_ids = _as_ids(split.valid, vocab)
    if len(train_ids) == 0:
        raise EmptySplit("training split is empty")
    if len(valid_ids) == 0 and val_metric is None:
        raise EmptySplit("validation split is empty")

    state = init_model(model_kind, config.dim, vocab, seed=config.seed)
    opt = OptimizerState.for_model(state, config.beta1, config.beta2, config.eps)
    sampler = NegativeSampler(train_ids, vocab.n_entities, vocab.n_relations)
    rng = np.random.default_rng(config.seed)

    history: List[EpochRecord] = []
    best_mr, best_epoch, best_state, bad = math.inf, 0, state.copy(), 0
    epoch = 0
    early = False
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(len(train_ids))
        total, seen = 0.0, 0
        for i in range(0, len(perm), config.batch_size):
            batch = train_ids[perm[i:i + config.batch_size]]
            negs = sampler.sample(batch, config.negatives_per_positive, rng)
            loss, grad = loss_and_grad(state, batch, negs, config)
            optimizer_step(state, opt, grad, config)
            total += loss * len(batch)
            seen += len(batch)
        epoch_loss = total / seen
        if val_metric is not None:
            val = float(val_metric(state, epoch))
        else:
            val = mean_rank(rank_batch(state, valid_ids, "tail", workers=workers))
        rec = EpochRecord(epoch, epoch_loss, val)
        history.append(rec)
        if progress is not None:
            progress(rec)
        logger.info("epoch %d loss %.6f val_mr %.2f", epoch, epoch_loss, val)
        if val < best_mr:
            best_mr, best_epoch, best_state, bad = val, epoch, state.copy(), 0
        else:
            bad += 1
            if bad >= config.patience:
                early = True
                break
    return TrainResult(best_state, history, best_epoch, epoch, early, sampler.fallbacks)
