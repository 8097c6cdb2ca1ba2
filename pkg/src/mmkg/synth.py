"""Deterministic synthetic graphs for tests and desk-scale benchmarks.

``generate_random_graph`` draws uniform endpoints with exact edge counts.
``generate_planted_graph`` places every entity and relation at a latent point
and keeps the triples with the smallest ``||v_h + v_r - v_t||`` (plus noise),
so a translational model can recover the structure.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from mmkg.exceptions import InfeasibleSpec
from mmkg.graph import POLARITY_RELATIONS, ConceptNode, ImageNode, MultimodalGraph, RelationType, Triple

N_CROSS_RELATIONS = len(POLARITY_RELATIONS)
# dense distance evaluation is capped for planted graphs
MAX_PLANTED_CANDIDATES = 20_000_000


@dataclass(frozen=True)
class PlantedSpec:
    latent_dim: int = 8
    noise_sigma: float = 0.0
    anchors: int = 0

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class SynthSpec:
    num_concepts: int
    num_images: int
    num_relations: int
    cross_edges: int
    intra_edges: int
    seed: int = 42
    planted: Optional[PlantedSpec] = None

    @classmethod
    def from_dict(cls, obj: dict) -> "SynthSpec":
        obj = dict(obj)
        planted = obj.pop("planted", None)
        if planted is not None:
            planted = PlantedSpec(**planted)
        return cls(planted=planted, **obj)

    @classmethod
    def from_json(cls, path) -> "SynthSpec":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


TABLE1_SPEC = SynthSpec(num_concepts=3149, num_images=4868, num_relations=262, cross_edges=20705, intra_edges=14682)


def concept_id(i: int) -> str:
    return f"C{i + 1:07d}"


def image_id(i: int) -> str:
    return f"img{i + 1:07d}"


def intra_relation_id(i: int) -> str:
    return f"R{i + 1:03d}"


def _validate(spec: SynthSpec):
    counts = (spec.num_concepts, spec.num_images, spec.num_relations, spec.cross_edges, spec.intra_edges)
    if any(c < 0 for c in counts):
        raise InfeasibleSpec("counts must be non-negative")
    n_intra_rel = max(0, spec.num_relations - N_CROSS_RELATIONS)
    if spec.cross_edges and spec.num_relations < N_CROSS_RELATIONS:
        raise InfeasibleSpec(f"cross edges need the {N_CROSS_RELATIONS} polarity relations")
    cross_cap = spec.num_images * spec.num_concepts * N_CROSS_RELATIONS
    intra_cap = spec.num_concepts * (spec.num_concepts - 1) * n_intra_rel
    if spec.cross_edges > cross_cap:
        raise InfeasibleSpec(f"{spec.cross_edges} cross edges exceed capacity {cross_cap}")
    if spec.intra_edges > intra_cap:
        raise InfeasibleSpec(f"{spec.intra_edges} intra edges exceed capacity {intra_cap}")
    return n_intra_rel


def _skeleton(spec: SynthSpec, n_intra_rel: int) -> MultimodalGraph:
    g = MultimodalGraph()
    for i in range(spec.num_concepts):
        g.add_concept(ConceptNode(concept_id(i), f"concept {i + 1}", "Finding"))
    for i in range(spec.num_images):
        g.add_image(ImageNode(image_id(i), f"synthetic/{image_id(i)}"))
    if spec.num_relations >= N_CROSS_RELATIONS:
        for rel in POLARITY_RELATIONS:
            g.add_relation(rel)
    for i in range(n_intra_rel):
        g.add_relation(RelationType.intra(intra_relation_id(i)))
    return g


def _draw_unique(rng, target, draw):
    """Accumulate distinct keys from ``draw(n)`` batches until ``target`` are found (first-seen order)."""
    seen = {}
    while len(seen) < target:
        need = target - len(seen)
        for key in draw(int(need * 1.2) + 16).tolist():
            if key not in seen:
                seen[key] = None
                if len(seen) == target:
                    break
    return list(seen)


def generate_random_graph(spec: SynthSpec) -> MultimodalGraph:
    n_intra_rel = _validate(spec)
    g = _skeleton(spec, n_intra_rel)
    rng = np.random.default_rng(spec.seed)
    C, I = spec.num_concepts, spec.num_images

    def draw_cross(n):
        m = rng.integers(0, I, n)
        r = rng.integers(0, N_CROSS_RELATIONS, n)
        c = rng.integers(0, C, n)
        return (m * N_CROSS_RELATIONS + r) * C + c

    def draw_intra(n):
        a = rng.integers(0, C, n)
        r = rng.integers(0, n_intra_rel, n)
        b = rng.integers(0, C - 1, n)
        b = b + (b >= a)  # distinct endpoints
        return (a * n_intra_rel + r) * C + b

    polarity_ids = [rel.relation_id for rel in POLARITY_RELATIONS]
    if spec.cross_edges:
        for key in _draw_unique(rng, spec.cross_edges, draw_cross):
            mr, c = divmod(key, C)
            m, r = divmod(mr, N_CROSS_RELATIONS)
            g.add_triple(Triple(image_id(m), polarity_ids[r], concept_id(c)))
    if spec.intra_edges:
        for key in _draw_unique(rng, spec.intra_edges, draw_intra):
            ar, b = divmod(key, C)
            a, r = divmod(ar, n_intra_rel)
            g.add_triple(Triple(concept_id(a), intra_relation_id(r), concept_id(b)))
    return g


@dataclass
class PlantedLatents:
    entities: dict
    relations: dict
    anchors: list


def _calibrate(dist: np.ndarray, target: int, iterations: int = 20) -> float:
    """Binary-search a threshold so that about ``target`` distances fall below it."""
    if target == 0:
        return -np.inf
    finite = dist[np.isfinite(dist)]
    lo, hi = float(finite.min()), float(finite.max()) + 1e-9
    best, best_err = hi, abs(finite.size - target)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        count = int(np.count_nonzero(dist < mid))
        err = abs(count - target)
        if err < best_err:
            best, best_err = mid, err
        if count < target:
            lo = mid
        elif count > target:
            hi = mid
        else:
            break
    return best


def generate_planted_graph(spec: SynthSpec, return_latents: bool = False):
    """Translational planted graph; edge counts land within a few percent of the request.

    With ``planted.anchors > 0`` that many (image, polarity) pairs get a
    concept placed exactly at ``v_image + v_polarity``; these triples have
    distance 0 and are always kept when noise is zero.
    """
    planted = spec.planted or PlantedSpec()
    n_intra_rel = _validate(spec)
    C, I = spec.num_concepts, spec.num_images
    n_cand = I * C * N_CROSS_RELATIONS + C * C * n_intra_rel
    if n_cand > MAX_PLANTED_CANDIDATES:
        raise InfeasibleSpec(f"planted generation evaluates {n_cand} candidate triples; limit is "
                             f"{MAX_PLANTED_CANDIDATES}")
    g = _skeleton(spec, n_intra_rel)
    rng = np.random.default_rng(spec.seed)
    k = planted.latent_dim
    v_concept = rng.normal(size=(C, k)) / np.sqrt(k)
    v_image = rng.normal(size=(I, k)) / np.sqrt(k)
    v_cross = rng.normal(size=(N_CROSS_RELATIONS, k)) / np.sqrt(k)
    v_intra = rng.normal(size=(n_intra_rel, k)) / np.sqrt(k)

    anchors = []
    if planted.anchors:
        if planted.anchors > min(I * N_CROSS_RELATIONS, C):
            raise InfeasibleSpec("more anchors than available (image, polarity) pairs or concepts")
        pairs = rng.choice(I * N_CROSS_RELATIONS, size=planted.anchors, replace=False)
        tails = rng.choice(C, size=planted.anchors, replace=False)
        for pair, c in zip(pairs.tolist(), tails.tolist()):
            m, r = divmod(pair, N_CROSS_RELATIONS)
            v_concept[c] = v_image[m] + v_cross[r]
            anchors.append((m, r, c))

    polarity_ids = [rel.relation_id for rel in POLARITY_RELATIONS]
    if spec.cross_edges:
        # (I, R, C) distances
        src = v_image[:, None, None, :] + v_cross[None, :, None, :]
        dist = np.linalg.norm(src - v_concept[None, None, :, :], axis=-1)
        dist = dist + planted.noise_sigma * rng.normal(size=dist.shape)
        thr = _calibrate(dist, spec.cross_edges)
        for m, r, c in zip(*np.nonzero(dist < thr)):
            g.add_triple(Triple(image_id(m), polarity_ids[r], concept_id(c)))
    if spec.intra_edges:
        src = v_concept[:, None, None, :] + v_intra[None, :, None, :]
        dist = np.linalg.norm(src - v_concept[None, None, :, :], axis=-1)
        dist = dist + planted.noise_sigma * rng.normal(size=dist.shape)
        idx = np.arange(C)
        dist[idx, :, idx] = np.inf
        thr = _calibrate(dist, spec.intra_edges)
        for a, r, b in zip(*np.nonzero(dist < thr)):
            g.add_triple(Triple(concept_id(a), intra_relation_id(r), concept_id(b)))

    if return_latents:
        latents = PlantedLatents(
            entities={**{concept_id(i): v_concept[i] for i in range(C)}, **{image_id(i): v_image[i] for i in range(I)}},
            relations={**{polarity_ids[i]: v_cross[i] for i in range(N_CROSS_RELATIONS)},
                       **{intra_relation_id(i): v_intra[i] for i in range(n_intra_rel)}},
            anchors=[Triple(image_id(m), polarity_ids[r], concept_id(c)) for m, r, c in anchors],
        )
        return g, latents
    return g


def generate(spec: SynthSpec) -> MultimodalGraph:
    return generate_planted_graph(spec) if spec.planted is not None else generate_random_graph(spec)
