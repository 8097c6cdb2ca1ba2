"""Neighbor-aware image filtering.

An image scores ``sum(log(M / |images sharing (r, c)|))`` over its distinct
(relation, concept) pairs, where M is the number of images. Images are
visited by descending score (ties by ascending id) and kept until their
concepts cover the target concept set.

Scores are ordered by their exact value ``M**k / prod(|N|)`` rather than
by the float sum, since distinct pair-size multisets often give exactly
equal scores (``ln 50 + ln 12.5 == 2 ln 25``) that float rounding would
split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Set

from mmkg.exceptions import StaleOutcome, UnknownNode
from mmkg.graph import Modality, MultimodalGraph


@dataclass(frozen=True)
class NafScore:
    image_id: str
    score: float


@dataclass
class FilterOutcome:
    selected: List[str]
    covered_concepts: Set[str]
    scores: List[NafScore]
    coverage_incomplete: bool = False
    target_concepts: Set[str] = field(default_factory=set)

    def score_map(self) -> Dict[str, float]:
        return {s.image_id: s.score for s in self.scores}


def _exact(pairs, pair_sizes, n_images) -> Fraction:
    """The score's argument ``prod(M / |N_(r,c)|)`` as an exact fraction."""
    den = 1
    for p in pairs:
        den *= pair_sizes[p]
    return Fraction(n_images ** len(pairs), den)


def _log(value: Fraction) -> float:
    # the reduced fraction is unique, so equal values give identical floats
    return math.log(value.numerator) - math.log(value.denominator)


def _score_from_pairs(pairs, pair_sizes, n_images) -> float:
    return _log(_exact(pairs, pair_sizes, n_images))


def naf_score(graph: MultimodalGraph, image_id: str) -> float:
    if image_id not in graph.images:
        raise UnknownNode(image_id)
    pairs = graph.image_pairs(image_id)
    sizes = {p: len(graph.images_for_pair(*p)) for p in pairs}
    return _score_from_pairs(pairs, sizes, len(graph.images))


def _exact_scores(graph: MultimodalGraph) -> Dict[str, Fraction]:
    n_images = len(graph.images)
    index = graph.pair_index()
    sizes = {p: len(v) for p, v in index.items()}
    per_image: Dict[str, list] = {m: [] for m in graph.images}
    for pair, imgs in index.items():
        for m in imgs:
            per_image[m].append(pair)
    return {m: _exact(pairs, sizes, n_images) for m, pairs in per_image.items()}


def naf_scores(graph: MultimodalGraph) -> Dict[str, float]:
    """Scores for every image, computed in one pass over the pair index."""
    return {m: _log(v) for m, v in _exact_scores(graph).items()}


def image_concepts(graph: MultimodalGraph) -> Dict[str, Set[str]]:
    out: Dict[str, Set[str]] = {m: set() for m in graph.images}
    for t in graph:
        if graph.relations[t.relation].modality is Modality.CROSS:
            out[t.head].add(t.tail)
    return out


def run_naf(graph: MultimodalGraph, coverage: str = "reachable") -> FilterOutcome:
    """Score all images and greedily select until the concept target is covered.

    ``coverage="reachable"`` targets concepts with at least one cross edge;
    ``"all"`` targets every concept, and isolated concepts then force the
    selection of every image with ``coverage_incomplete`` set.
    """
    if coverage not in ("reachable", "all"):
        raise ValueError(f"coverage must be 'reachable' or 'all', got {coverage!r}")
    exact = _exact_scores(graph)
    scores = {m: _log(v) for m, v in exact.items()}
    concepts_of = image_concepts(graph)
    if coverage == "all":
        target = set(graph.concepts)
    else:
        target = set().union(*concepts_of.values()) if concepts_of else set()

    order = sorted(exact, key=lambda m: (-exact[m], m))
    selected: List[str] = []
    covered: Set[str] = set()
    for m in order:
        if covered == target:
            break
        selected.append(m)
        covered |= concepts_of[m]
    return FilterOutcome(
        selected=selected,
        covered_concepts=covered,
        scores=[NafScore(m, scores[m]) for m in order],
        coverage_incomplete=covered != target,
        target_concepts=target,
    )


def subgraph_from_selection(graph: MultimodalGraph, outcome: FilterOutcome) -> MultimodalGraph:
    """All concepts and intra triples, plus the selected images and their cross triples."""
    keep = set(outcome.selected)
    missing = keep - set(graph.images)
    if missing:
        raise StaleOutcome(f"selected images not in graph: {sorted(missing)[:5]}")
    g = MultimodalGraph()
    for c in graph.concepts.values():
        g.add_concept(c)
    for m_id, m in graph.images.items():
        if m_id in keep:
            g.add_image(m)
    for r in graph.relations.values():
        g.add_relation(r)
    for t in graph:
        if graph.relations[t.relation].modality is Modality.INTRA or t.head in keep:
            g.add_triple(t)
    return g
