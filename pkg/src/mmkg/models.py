"""Knowledge-graph embedding scoring models with analytic gradients.

Every model scores a triple so that higher means more plausible; distance
models return a negated distance. Parameters are float64 numpy tables keyed
by name; a table is indexed by entity id, by relation id, or is global.

Scoring methods take integer index arrays that broadcast against each other,
so ``score(h[:, None], r[:, None], cand[None, :])`` scores every candidate
tail for a batch of (h, r) queries.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from mmkg.exceptions import CheckpointMismatch, IndexOutOfRange, InvalidDimension

ENTITY = "entity"
RELATION = "relation"
GLOBAL = "global"


@dataclass(frozen=True)
class VocabIndex:
    """Dense integer ids for entities (concepts and images together) and relations."""

    entities: Tuple[str, ...]
    relations: Tuple[str, ...]
    entity_index: Dict[str, int] = field(init=False, repr=False, compare=False)
    relation_index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "entities", tuple(self.entities))
        object.__setattr__(self, "relations", tuple(self.relations))
        ent = {e: i for i, e in enumerate(self.entities)}
        rel = {r: i for i, r in enumerate(self.relations)}
        if len(ent) != len(self.entities) or len(rel) != len(self.relations):
            raise ValueError("vocabulary ids must be unique")
        object.__setattr__(self, "entity_index", ent)
        object.__setattr__(self, "relation_index", rel)

    @classmethod
    def from_graph(cls, graph) -> "VocabIndex":
        return cls(tuple(graph.node_ids()), tuple(sorted(graph.relations)))

    @classmethod
    def from_triples(cls, triples) -> "VocabIndex":
        ents, rels = set(), set()
        for h, r, t in triples:
            ents.update((h, t))
            rels.add(r)
        return cls(tuple(sorted(ents)), tuple(sorted(rels)))

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update("\n".join(self.entities).encode("utf-8"))
        h.update(b"\x00")
        h.update("\n".join(self.relations).encode("utf-8"))
        return h.hexdigest()

    def encode(self, triples) -> np.ndarray:
        """(n, 3) int64 array of (head, relation, tail) ids."""
        out = np.empty((len(triples), 3), dtype=np.int64)
        for i, (h, r, t) in enumerate(triples):
            out[i] = (self.entity_index[h], self.relation_index[r], self.entity_index[t])
        return out

    def decode(self, ids) -> List[Tuple[str, str, str]]:
        return [(self.entities[h], self.relations[r], self.entities[t]) for h, r, t in np.asarray(ids)]


@dataclass(frozen=True)
class ParamSpec:
    name: str
    axis: str
    shape: Tuple[int, ...]
    init: str = "uniform"


class SparseGrad(dict):
    """name -> (row indices, summed rows); global tables map to (None, dense array)."""

    def scaled(self, factor: float) -> "SparseGrad":
        return SparseGrad({k: (idx, v * factor) for k, (idx, v) in self.items()})


def _aggregate(parts) -> SparseGrad:
    grouped: Dict[str, list] = {}
    dense: Dict[str, np.ndarray] = {}
    for name, idx, vals in parts:
        if idx is None:
            dense[name] = dense[name] + vals if name in dense else np.array(vals, dtype=np.float64)
        else:
            grouped.setdefault(name, []).append((np.asarray(idx).ravel(), vals))
    out = SparseGrad()
    for name, chunks in grouped.items():
        idx = np.concatenate([c[0] for c in chunks])
        vals = np.concatenate([c[1].reshape((len(c[0]),) + c[1].shape[1:]) for c in chunks])
        order = np.argsort(idx, kind="stable")
        idx = idx[order]
        starts = np.flatnonzero(np.r_[True, idx[1:] != idx[:-1]])
        out[name] = (idx[starts], np.add.reduceat(vals[order], starts, axis=0))
    for name, vals in dense.items():
        out[name] = (None, vals)
    return out


def _dot(a, b):
    return np.sum(a * b, axis=-1)


class KGEModel:
    """Base class: parameter storage, init, batching and validation.

    Subclasses define ``specs``, ``_score`` (broadcasting) and ``_grad``
    (aligned 1-D batches, returning ``(name, idx, values)`` contributions).
    """

    kind = ""
    specs: Tuple = ()
    # max elements per broadcast chunk when scoring candidates
    _budget = 2 ** 22

    def __init__(self, n_entities: int, n_relations: int, dim: int = 128, seed: int = 42, vocab_hash: str = ""):
        if int(dim) < 1 or int(dim) != dim:
            raise InvalidDimension(f"dim must be a positive integer, got {dim!r}")
        if n_entities < 1 or n_relations < 1:
            raise InvalidDimension("vocabulary must contain at least one entity and one relation")
        self.n_entities = int(n_entities)
        self.n_relations = int(n_relations)
        self.dim = int(dim)
        self.relation_dim = self.dim
        self.seed = seed
        self.vocab_hash = vocab_hash
        self.params: Dict[str, np.ndarray] = {}
        rng = np.random.default_rng(seed)
        bound = 6.0 / np.sqrt(self.dim)
        for spec in self.param_specs():
            shape = self._rows(spec.axis) + spec.shape
            if spec.init == "phase":
                value = rng.uniform(0.0, 2.0 * np.pi, size=shape)
            elif spec.init == "core":
                value = rng.uniform(-1.0, 1.0, size=shape)
            else:
                value = rng.uniform(-bound, bound, size=shape)
            self.params[spec.name] = value
        self.project()

    # -- structure ---------------------------------------------------------

    def param_specs(self) -> List[ParamSpec]:
        d = self.dim
        return [ParamSpec(name, axis, tuple(d if s == "d" else s for s in shape), init)
                for name, axis, shape, init in self.specs]

    def _rows(self, axis) -> Tuple[int, ...]:
        if axis == ENTITY:
            return (self.n_entities,)
        if axis == RELATION:
            return (self.n_relations,)
        return ()

    def axis_of(self, name: str) -> str:
        for spec in self.param_specs():
            if spec.name == name:
                return spec.axis
        raise KeyError(name)

    def project(self, touched: Optional[SparseGrad] = None) -> None:
        """Re-impose parameter constraints after an update."""

    def copy(self) -> "KGEModel":
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.params = {k: v.copy() for k, v in self.params.items()}
        return clone

    def n_parameters(self) -> int:
        return sum(v.size for v in self.params.values())

    # -- validation ----------------------------------------------------------

    def _check(self, h=None, r=None, t=None):
        for arr, n, what in ((h, self.n_entities, "entity"), (r, self.n_relations, "relation"),
                             (t, self.n_entities, "entity")):
            if arr is None:
                continue
            a = np.asarray(arr)
            if a.size and (a.min() < 0 or a.max() >= n):
                raise IndexOutOfRange(f"{what} id out of range [0, {n})")

    # -- scoring -------------------------------------------------------------

    def _score(self, h, r, t):
        raise NotImplementedError

    def _grad(self, h, r, t, g):
        raise NotImplementedError

    def score(self, h, r, t) -> np.ndarray:
        h, r, t = (np.asarray(x, dtype=np.int64) for x in (h, r, t))
        self._check(h, r, t)
        if h.ndim == r.ndim == t.ndim == 1 and h.shape == r.shape == t.shape:
            step = max(1, self._budget // max(1, self._row_cost()))
            if len(h) > step:
                return np.concatenate([self._score(h[i:i + step], r[i:i + step], t[i:i + step])
                                       for i in range(0, len(h), step)])
        return self._score(h, r, t)

    def _row_cost(self) -> int:
        return self.dim

    def score_triple(self, h: int, r: int, t: int) -> float:
        return float(self.score(np.array([h]), np.array([r]), np.array([t]))[0])

    def grad(self, h, r, t, upstream) -> SparseGrad:
        h, r, t = (np.atleast_1d(np.asarray(x, dtype=np.int64)) for x in (h, r, t))
        self._check(h, r, t)
        g = np.broadcast_to(np.asarray(upstream, dtype=np.float64), h.shape).astype(np.float64)
        return _aggregate(self._grad(h, r, t, g))

    def score_candidates(self, h=None, r=None, t=None, axis="tail") -> np.ndarray:
        """Dense (batch, n_candidates) scores with the ``axis`` slot ranging over the vocabulary."""
        fixed = {"head": (r, t), "relation": (h, t), "tail": (h, r)}
        if axis not in fixed:
            raise ValueError(f"axis must be head, relation or tail, got {axis!r}")
        a, b = (np.atleast_1d(np.asarray(x, dtype=np.int64)) for x in fixed[axis])
        n_cand = self.n_relations if axis == "relation" else self.n_entities
        cand = np.arange(n_cand)
        if axis == "head":
            self._check(r=a, t=b)
        elif axis == "relation":
            self._check(h=a, t=b)
        else:
            self._check(h=a, r=b)
        return self._candidates(a, b, cand, axis)

    def _candidates(self, a, b, cand, axis):
        step = max(1, self._budget // max(1, len(cand) * self._row_cost()))
        out = []
        for i in range(0, len(a), step):
            x, y = a[i:i + step, None], b[i:i + step, None]
            c = cand[None, :]
            if axis == "head":
                out.append(self._score(c, x, y))
            elif axis == "relation":
                out.append(self._score(x, c, y))
            else:
                out.append(self._score(x, y, c))
        if not out:
            return np.zeros((0, len(cand)))
        return np.concatenate(out, axis=0)


# ---------------------------------------------------------------------------
# translation family


class TransE(KGEModel):
    kind = "transe"
    specs = (("entity", ENTITY, ("d",), "uniform"), ("relation", RELATION, ("d",), "uniform"))

    def _score(self, h, r, t):
        E, R = self.params["entity"], self.params["relation"]
        x = E[h] + R[r] - E[t]
        return -np.sqrt(_dot(x, x))

    def _grad(self, h, r, t, g):
        E, R = self.params["entity"], self.params["relation"]
        x = E[h] + R[r] - E[t]
        n = np.sqrt(_dot(x, x))
        # subgradient 0 at the kink
        coef = np.where(n > 0, -g / np.where(n > 0, n, 1.0), 0.0)
        dx = coef[:, None] * x
        return [("entity", h, dx), ("relation", r, dx), ("entity", t, -dx)]


class TransH(KGEModel):
    kind = "transh"
    specs = (
        ("entity", ENTITY, ("d",), "uniform"),
        ("relation", RELATION, ("d",), "uniform"),
        ("normal", RELATION, ("d",), "uniform"),
    )

    def project(self, touched=None):
        w = self.params["normal"]
        norms = np.linalg.norm(w, axis=1, keepdims=True)
        self.params["normal"] = w / np.where(norms > 0, norms, 1.0)

    def _parts(self, h, r, t):
        E = self.params["entity"]
        w = self.params["normal"][r]
        u = E[h] - E[t]
        e = u - _dot(w, u)[..., None] * w + self.params["relation"][r]
        return u, w, e

    def _score(self, h, r, t):
        _, _, e = self._parts(h, r, t)
        return -_dot(e, e)

    def _grad(self, h, r, t, g):
        u, w, e = self._parts(h, r, t)
        we = _dot(w, e)[:, None]
        gu = g[:, None] * -2.0 * (e - we * w)
        dd = g[:, None] * -2.0 * e
        dw = g[:, None] * 2.0 * (we * u + _dot(w, u)[:, None] * e)
        return [("entity", h, gu), ("entity", t, -gu), ("relation", r, dd), ("normal", r, dw)]


class TransR(KGEModel):
    kind = "transr"
    specs = (
        ("entity", ENTITY, ("d",), "uniform"),
        ("relation", RELATION, ("d",), "uniform"),
        ("projection", RELATION, ("d", "d"), "uniform"),
    )

    def _row_cost(self):
        return self.dim * self.dim

    def _score(self, h, r, t):
        E = self.params["entity"]
        M = self.params["projection"][r]
        u = E[h] - E[t]
        e = (M @ u[..., None])[..., 0] + self.params["relation"][r]
        return -_dot(e, e)

    def _candidates(self, a, b, cand, axis):
        if axis == "relation":
            return super()._candidates(a, b, cand, axis)
        E, R, P = self.params["entity"], self.params["relation"], self.params["projection"]
        rel = a if axis == "head" else b
        fixed = b if axis == "head" else a
        out = np.empty((len(a), len(cand)))
        step = max(1, self._budget // max(1, len(cand) * self.dim))
        for rid in np.unique(rel):
            rows = np.flatnonzero(rel == rid)
            projected = E @ P[rid].T
            for i in range(0, len(rows), step):
                sel = rows[i:i + step]
                anchor = projected[fixed[sel]]
                if axis == "tail":
                    e = (anchor + R[rid])[:, None, :] - projected[None, :, :]
                else:
                    e = projected[None, :, :] + (R[rid] - anchor)[:, None, :]
                out[sel] = -_dot(e, e)
        return out

    def _grad(self, h, r, t, g):
        E = self.params["entity"]
        M = self.params["projection"][r]
        u = E[h] - E[t]
        e = (M @ u[..., None])[..., 0] + self.params["relation"][r]
        ge = g[:, None] * -2.0 * e
        du = (np.swapaxes(M, -1, -2) @ ge[..., None])[..., 0]
        dM = ge[:, :, None] * u[:, None, :]
        return [("entity", h, du), ("entity", t, -du), ("relation", r, ge), ("projection", r, dM)]


class TransD(KGEModel):
    kind = "transd"
    specs = (
        ("entity", ENTITY, ("d",), "uniform"),
        ("entity_proj", ENTITY, ("d",), "uniform"),
        ("relation", RELATION, ("d",), "uniform"),
        ("relation_proj", RELATION, ("d",), "uniform"),
    )

    def _parts(self, h, r, t):
        E, Ep = self.params["entity"], self.params["entity_proj"]
        rp = self.params["relation_proj"][r]
        eh, et, hp, tp = E[h], E[t], Ep[h], Ep[t]
        sh, st = _dot(hp, eh), _dot(tp, et)
        e = eh + sh[..., None] * rp + self.params["relation"][r] - et - st[..., None] * rp
        return eh, et, hp, tp, rp, sh, st, e

    def _score(self, h, r, t):
        e = self._parts(h, r, t)[-1]
        return -_dot(e, e)

    def _grad(self, h, r, t, g):
        eh, et, hp, tp, rp, sh, st, e = self._parts(h, r, t)
        ge = g[:, None] * -2.0 * e
        a = _dot(rp, ge)[:, None]
        return [
            ("entity", h, ge + a * hp),
            ("entity_proj", h, a * eh),
            ("entity", t, -ge - a * tp),
            ("entity_proj", t, -a * et),
            ("relation", r, ge),
            ("relation_proj", r, (sh - st)[:, None] * ge),
        ]


class RotatE(KGEModel):
    kind = "rotate"
    specs = (
        ("entity_re", ENTITY, ("d",), "uniform"),
        ("entity_im", ENTITY, ("d",), "uniform"),
        ("phase", RELATION, ("d",), "phase"),
    )

    def _parts(self, h, r, t):
        Er, Ei = self.params["entity_re"], self.params["entity_im"]
        theta = self.params["phase"][r]
        c, s = np.cos(theta), np.sin(theta)
        hr, hi = Er[h], Ei[h]
        a = hr * c - hi * s - Er[t]
        b = hr * s + hi * c - Ei[t]
        return hr, hi, c, s, a, b

    def _score(self, h, r, t):
        *_, a, b = self._parts(h, r, t)
        return -np.sqrt(_dot(a, a) + _dot(b, b))

    def _grad(self, h, r, t, g):
        hr, hi, c, s, a, b = self._parts(h, r, t)
        n = np.sqrt(_dot(a, a) + _dot(b, b))
        k = np.where(n > 0, -g / np.where(n > 0, n, 1.0), 0.0)[:, None]
        da, db = k * a, k * b
        return [
            ("entity_re", h, da * c + db * s),
            ("entity_im", h, -da * s + db * c),
            ("entity_re", t, -da),
            ("entity_im", t, -db),
            ("phase", r, da * (-hr * s - hi * c) + db * (hr * c - hi * s)),
        ]


# ---------------------------------------------------------------------------
# tensor factorization family


def _bilinear(left, W, right):
    """sum_ij left_i W_ij right_j, contracting the smaller broadcast side first."""
    if left[..., 0].size <= right[..., 0].size:
        lw = (left[..., None, :] @ W)[..., 0, :]
        return _dot(lw, right)
    wr = (W @ right[..., None])[..., 0]
    return _dot(left, wr)


class RESCAL(KGEModel):
    kind = "rescal"
    specs = (("entity", ENTITY, ("d",), "uniform"), ("relation_matrix", RELATION, ("d", "d"), "uniform"))

    def _row_cost(self):
        return self.dim * self.dim

    def _score(self, h, r, t):
        E = self.params["entity"]
        return _bilinear(E[h], self.params["relation_matrix"][r], E[t])

    def _grad(self, h, r, t, g):
        E = self.params["entity"]
        W = self.params["relation_matrix"][r]
        eh, et = E[h], E[t]
        gg = g[:, None]
        return [
            ("entity", h, gg * (W @ et[..., None])[..., 0]),
            ("entity", t, gg * (eh[..., None, :] @ W)[..., 0, :]),
            ("relation_matrix", r, g[:, None, None] * eh[:, :, None] * et[:, None, :]),
        ]


class DistMult(KGEModel):
    kind = "distmult"
    specs = (("entity", ENTITY, ("d",), "uniform"), ("relation", RELATION, ("d",), "uniform"))

    def _score(self, h, r, t):
        E = self.params["entity"]
        return _dot(E[h] * self.params["relation"][r], E[t])

    def _grad(self, h, r, t, g):
        E, R = self.params["entity"], self.params["relation"]
        eh, rr, et = E[h], R[r], E[t]
        gg = g[:, None]
        return [("entity", h, gg * rr * et), ("relation", r, gg * eh * et), ("entity", t, gg * eh * rr)]


class ComplEx(KGEModel):
    kind = "complex"
    specs = (
        ("entity_re", ENTITY, ("d",), "uniform"),
        ("entity_im", ENTITY, ("d",), "uniform"),
        ("relation_re", RELATION, ("d",), "uniform"),
        ("relation_im", RELATION, ("d",), "uniform"),
    )

    def _gather(self, h, r, t):
        Er, Ei = self.params["entity_re"], self.params["entity_im"]
        return Er[h], Ei[h], self.params["relation_re"][r], self.params["relation_im"][r], Er[t], Ei[t]

    def _score(self, h, r, t):
        hr, hi, rr, ri, tr, ti = self._gather(h, r, t)
        return _dot(hr * rr - hi * ri, tr) + _dot(hr * ri + hi * rr, ti)

    def _grad(self, h, r, t, g):
        hr, hi, rr, ri, tr, ti = self._gather(h, r, t)
        gg = g[:, None]
        return [
            ("entity_re", h, gg * (rr * tr + ri * ti)),
            ("entity_im", h, gg * (-ri * tr + rr * ti)),
            ("relation_re", r, gg * (hr * tr + hi * ti)),
            ("relation_im", r, gg * (-hi * tr + hr * ti)),
            ("entity_re", t, gg * (hr * rr - hi * ri)),
            ("entity_im", t, gg * (hr * ri + hi * rr)),
        ]


class SimplE(KGEModel):
    kind = "simple"
    specs = (
        ("entity_head", ENTITY, ("d",), "uniform"),
        ("entity_tail", ENTITY, ("d",), "uniform"),
        ("relation", RELATION, ("d",), "uniform"),
        ("relation_inv", RELATION, ("d",), "uniform"),
    )

    def _score(self, h, r, t):
        H, T = self.params["entity_head"], self.params["entity_tail"]
        fwd = _dot(H[h] * self.params["relation"][r], T[t])
        inv = _dot(H[t] * self.params["relation_inv"][r], T[h])
        return 0.5 * (fwd + inv)

    def _grad(self, h, r, t, g):
        H, T = self.params["entity_head"], self.params["entity_tail"]
        R, Ri = self.params["relation"][r], self.params["relation_inv"][r]
        hh, tt, ht, th = H[h], T[t], H[t], T[h]
        gg = 0.5 * g[:, None]
        return [
            ("entity_head", h, gg * R * tt),
            ("entity_tail", t, gg * hh * R),
            ("relation", r, gg * hh * tt),
            ("entity_head", t, gg * Ri * th),
            ("entity_tail", h, gg * ht * Ri),
            ("relation_inv", r, gg * ht * th),
        ]


class TuckER(KGEModel):
    kind = "tucker"
    specs = (
        ("entity", ENTITY, ("d",), "uniform"),
        ("relation", RELATION, ("d",), "uniform"),
        ("core", GLOBAL, ("d", "d", "d"), "core"),
    )

    def _row_cost(self):
        return self.dim * self.dim

    def _score(self, h, r, t):
        E = self.params["entity"]
        W = self.params["core"]
        rr = self.params["relation"][r]
        # core contracted with the relation: (..., d_head, d_tail)
        Wr = np.einsum("ijk,...j->...ik", W, rr)
        return _bilinear(E[h], Wr, E[t])

    def _grad(self, h, r, t, g):
        E, R, W = self.params["entity"], self.params["relation"], self.params["core"]
        d = self.dim
        parts = []
        dW = np.zeros_like(W)
        step = max(1, 2 ** 18 // (d * d))
        W_hr_t = W.reshape(d * d, d)              # (i j) x k
        W_h_rt = W.reshape(d, d * d)              # i x (j k)
        W_j = np.moveaxis(W, 1, 0).reshape(d, d * d)  # j x (i k)
        for i in range(0, len(h), step):
            sl = slice(i, i + step)
            eh, rr, et, gg = E[h[sl]], R[r[sl]], E[t[sl]], g[sl][:, None]
            rt = (rr[:, :, None] * et[:, None, :]).reshape(-1, d * d)
            ht = (eh[:, :, None] * et[:, None, :]).reshape(-1, d * d)
            hr = (eh[:, :, None] * rr[:, None, :]).reshape(-1, d * d)
            parts.append(("entity", h[sl], gg * (rt @ W_h_rt.T)))
            parts.append(("relation", r[sl], gg * (ht @ W_j.T)))
            parts.append(("entity", t[sl], gg * (hr @ W_hr_t)))
            dW += ((gg * hr).T @ et).reshape(d, d, d)
        parts.append(("core", None, dW))
        return parts


# ---------------------------------------------------------------------------
# Euclidean multi-relational


class MurE(KGEModel):
    kind = "mure"
    specs = (
        ("entity", ENTITY, ("d",), "uniform"),
        ("relation_scale", RELATION, ("d",), "uniform"),
        ("relation", RELATION, ("d",), "uniform"),
        ("bias", ENTITY, (), "uniform"),
    )

    def _parts(self, h, r, t):
        E = self.params["entity"]
        rho = self.params["relation_scale"][r]
        eh = E[h]
        e = rho * eh - E[t] - self.params["relation"][r]
        return eh, rho, e

    def _score(self, h, r, t):
        _, _, e = self._parts(h, r, t)
        b = self.params["bias"]
        return -_dot(e, e) + b[h] + b[t]

    def _grad(self, h, r, t, g):
        eh, rho, e = self._parts(h, r, t)
        ge = g[:, None] * -2.0 * e
        return [
            ("entity", h, ge * rho),
            ("relation_scale", r, ge * eh),
            ("entity", t, -ge),
            ("relation", r, -ge),
            ("bias", h, g.copy()),
            ("bias", t, g.copy()),
        ]


MODELS = {cls.kind: cls for cls in (TransE, TransH, TransR, TransD, RotatE, RESCAL, DistMult, ComplEx, SimplE,
                                    TuckER, MurE)}
MODEL_KINDS = tuple(MODELS)
DISPLAY_NAMES = {
    "transe": "TransE", "transh": "TransH", "transr": "TransR", "transd": "TransD", "rotate": "RotatE",
    "rescal": "RESCAL", "distmult": "DistMult", "complex": "ComplEx", "simple": "SimplE", "tucker": "TuckER",
    "mure": "MurE",
}


def _model_class(kind: str):
    try:
        return MODELS[kind.lower()]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}; choose from {', '.join(MODEL_KINDS)}") from None


def init_model(kind: str, dim: int, vocab: VocabIndex, seed: int = 42) -> KGEModel:
    return _model_class(kind)(vocab.n_entities, vocab.n_relations, dim, seed, vocab.digest())


def score_triple(state: KGEModel, h: int, r: int, t: int) -> float:
    return state.score_triple(h, r, t)


def grad_triple(state: KGEModel, h: int, r: int, t: int, upstream: float = 1.0) -> SparseGrad:
    return state.grad([h], [r], [t], upstream)


def score_candidates(state: KGEModel, h=None, r=None, t=None, axis: str = "tail") -> np.ndarray:
    return state.score_candidates(h, r, t, axis)


# ---------------------------------------------------------------------------
# checkpoints

_MAGIC = b"MMKGCKPT"


def save_checkpoint(state: KGEModel, path, extra: Optional[dict] = None) -> None:
    """Write ``MAGIC | u32 header length | JSON header | float32 LE blocks``."""
    header = {
        "model_kind": state.kind,
        "dim": state.dim,
        "n_entities": state.n_entities,
        "n_relations": state.n_relations,
        "vocab_hash": state.vocab_hash,
        "seed": state.seed,
        "params": [{"name": s.name, "shape": list(state.params[s.name].shape)} for s in state.param_specs()],
    }
    if extra:
        header["extra"] = extra
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for spec in state.param_specs():
            f.write(np.ascontiguousarray(state.params[spec.name], dtype="<f4").tobytes())


def load_checkpoint(path, vocab: Optional[VocabIndex] = None) -> KGEModel:
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(_MAGIC):
        raise CheckpointMismatch(f"{path}: not a model checkpoint")
    (n,) = struct.unpack_from("<I", data, len(_MAGIC))
    start = len(_MAGIC) + 4
    header = json.loads(data[start:start + n].decode("utf-8"))
    if vocab is not None and header["vocab_hash"] != vocab.digest():
        raise CheckpointMismatch("checkpoint was trained on a different vocabulary")
    cls = _model_class(header["model_kind"])
    state = cls(header["n_entities"], header["n_relations"], header["dim"], header["seed"], header["vocab_hash"])
    offset = start + n
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        block = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        state.params[entry["name"]] = block.astype(np.float64).reshape(shape)
        offset += 4 * count
    if offset != len(data):
        raise CheckpointMismatch(f"{path}: trailing or missing parameter bytes")
    return state
