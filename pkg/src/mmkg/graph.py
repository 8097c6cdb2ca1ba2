"""Typed storage for the concept/image knowledge graph.

Two node kinds (clinical concepts keyed by CUI, radiological images keyed by an
opaque id) and two edge kinds: intra-modality concept->concept relations and
cross-modality image->concept relations labelled with a polarity.
"""

from __future__ import annotations

import enum
import re
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, Iterator, Optional, Set, Tuple

from mmkg.exceptions import (
    DuplicateTriple,
    GraphFrozen,
    ModalityViolation,
    UnknownNode,
    UnknownRelation,
)

CUI_PATTERN = re.compile(r"^C\d+$")


class Modality(str, enum.Enum):
    INTRA = "INTRA"
    CROSS = "CROSS"


class Polarity(str, enum.Enum):
    POSITIVE = "Positive"
    NEGATIVE = "Negative"
    UNCERTAIN = "Uncertain"

    @classmethod
    def parse(cls, text: str) -> "Polarity":
        key = text.strip().lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        raise ValueError(f"unknown polarity {text!r}")

    @property
    def relation_id(self) -> str:
        return self.value.lower()


@dataclass(frozen=True)
class ConceptNode:
    cui: str
    name: str = ""
    semantic_type: str = ""

    def __post_init__(self):
        if not CUI_PATTERN.match(self.cui):
            raise ValueError(f"CUI must look like 'C<digits>', got {self.cui!r}")

    @property
    def node_id(self) -> str:
        return self.cui


@dataclass(frozen=True)
class ImageNode:
    image_id: str
    source_ref: str = ""

    def __post_init__(self):
        if not self.image_id:
            raise ValueError("image_id must be non-empty")

    @property
    def node_id(self) -> str:
        return self.image_id


@dataclass(frozen=True)
class RelationType:
    relation_id: str
    modality: Modality
    polarity: Optional[Polarity] = None

    def __post_init__(self):
        object.__setattr__(self, "modality", Modality(self.modality))
        if self.polarity is not None:
            object.__setattr__(self, "polarity", Polarity(self.polarity))
        if self.modality is Modality.CROSS and self.polarity is None:
            raise ValueError(f"cross relation {self.relation_id!r} needs a polarity")
        if self.modality is Modality.INTRA and self.polarity is not None:
            raise ValueError(f"intra relation {self.relation_id!r} cannot carry a polarity")

    @classmethod
    def cross(cls, polarity) -> "RelationType":
        polarity = Polarity(polarity)
        return cls(polarity.relation_id, Modality.CROSS, polarity)

    @classmethod
    def intra(cls, relation_id: str) -> "RelationType":
        return cls(relation_id, Modality.INTRA)


POLARITY_RELATIONS = tuple(RelationType.cross(p) for p in Polarity)


@dataclass(frozen=True, order=True)
class Triple:
    head: str
    relation: str
    tail: str

    def __iter__(self):
        return iter((self.head, self.relation, self.tail))


class MultimodalGraph:
    """Concept/image graph with adjacency and (relation, concept) indices.

    Node ids are strings; concept and image ids share one namespace. Triples
    are rejected (never merged) when duplicated. Call :meth:`freeze` once the
    build phase is over; afterwards the graph is read-only.
    """

    def __init__(self):
        self.concepts: Dict[str, ConceptNode] = {}
        self.images: Dict[str, ImageNode] = {}
        self.relations: Dict[str, RelationType] = {}
        self._triples: Dict[Triple, None] = {}
        self._adjacency: Dict[str, Set[Triple]] = defaultdict(set)
        self._pair_index: Dict[Tuple[str, str], Set[str]] = defaultdict(set)
        self._frozen = False

    # -- building ---------------------------------------------------------

    def _check_writable(self):
        if self._frozen:
            raise GraphFrozen("graph is frozen")

    def add_concept(self, node: ConceptNode, exist_ok: bool = True) -> ConceptNode:
        self._check_writable()
        if node.cui in self.images:
            raise ValueError(f"id {node.cui!r} already used by an image")
        if node.cui in self.concepts:
            if not exist_ok:
                raise ValueError(f"duplicate concept {node.cui!r}")
            return self.concepts[node.cui]
        self.concepts[node.cui] = node
        return node

    def add_image(self, node: ImageNode, exist_ok: bool = True) -> ImageNode:
        self._check_writable()
        if node.image_id in self.concepts:
            raise ValueError(f"id {node.image_id!r} already used by a concept")
        if node.image_id in self.images:
            if not exist_ok:
                raise ValueError(f"duplicate image {node.image_id!r}")
            return self.images[node.image_id]
        self.images[node.image_id] = node
        return node

    def add_relation(self, relation: RelationType) -> RelationType:
        self._check_writable()
        existing = self.relations.get(relation.relation_id)
        if existing is not None:
            if existing != relation:
                raise ValueError(f"conflicting definition for relation {relation.relation_id!r}")
            return existing
        self.relations[relation.relation_id] = relation
        return relation

    def check_triple(self, triple: Triple) -> RelationType:
        """Validate endpoints and modality rules; return the relation type."""
        try:
            relation = self.relations[triple.relation]
        except KeyError:
            raise UnknownRelation(triple.relation) from None
        for node_id in (triple.head, triple.tail):
            if node_id not in self.concepts and node_id not in self.images:
                raise UnknownNode(node_id)
        if relation.modality is Modality.INTRA:
            if triple.head not in self.concepts or triple.tail not in self.concepts:
                raise ModalityViolation(f"intra triple must join two concepts: {triple}")
            if triple.head == triple.tail:
                raise ModalityViolation(f"intra triple must join distinct concepts: {triple}")
        else:
            if triple.head not in self.images:
                raise ModalityViolation(f"cross triple needs an image head: {triple}")
            if triple.tail not in self.concepts:
                raise ModalityViolation(f"cross triple needs a concept tail: {triple}")
        return relation

    def add_triple(self, triple: Triple) -> Triple:
        self._check_writable()
        if not isinstance(triple, Triple):
            triple = Triple(*triple)
        relation = self.check_triple(triple)
        if triple in self._triples:
            raise DuplicateTriple(str(triple))
        self._triples[triple] = None
        self._adjacency[triple.head].add(triple)
        self._adjacency[triple.tail].add(triple)
        if relation.modality is Modality.CROSS:
            self._pair_index[(triple.relation, triple.tail)].add(triple.head)
        return triple

    def freeze(self) -> "MultimodalGraph":
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    # -- queries ----------------------------------------------------------

    def __contains__(self, triple) -> bool:
        if not isinstance(triple, Triple):
            triple = Triple(*triple)
        return triple in self._triples

    def __len__(self) -> int:
        return len(self._triples)

    def __iter__(self) -> Iterator[Triple]:
        return iter(self._triples)

    @property
    def triples(self) -> Set[Triple]:
        return set(self._triples)

    def sorted_triples(self):
        return sorted(self._triples)

    def has_node(self, node_id: str) -> bool:
        return node_id in self.concepts or node_id in self.images

    def node_ids(self):
        """All node ids, concepts and images together, in sorted order."""
        return sorted(list(self.concepts) + list(self.images))

    def modality_of(self, triple: Triple) -> Modality:
        return self.relations[triple.relation].modality

    def incident(self, node_id: str) -> Set[Triple]:
        if not self.has_node(node_id):
            raise UnknownNode(node_id)
        return set(self._adjacency.get(node_id, ()))

    def neighbors(self, node_id: str) -> Set[Tuple[str, str]]:
        """(relation, opposite endpoint) pairs over all incident triples."""
        out = set()
        for t in self.incident(node_id):
            other = t.tail if t.head == node_id else t.head
            out.add((t.relation, other))
        return out

    def images_for_pair(self, relation_id: str, cui: str) -> Set[str]:
        """Images linked to ``cui`` through cross relation ``relation_id``."""
        return set(self._pair_index.get((relation_id, cui), ()))

    def pair_index(self) -> Dict[Tuple[str, str], Set[str]]:
        return {k: set(v) for k, v in self._pair_index.items() if v}

    def image_pairs(self, image_id: str) -> Set[Tuple[str, str]]:
        """The (relation, concept) pairs of an image's cross triples."""
        if image_id not in self.images:
            raise UnknownNode(image_id)
        return {
            (t.relation, t.tail)
            for t in self._adjacency.get(image_id, ())
            if t.head == image_id and self.relations[t.relation].modality is Modality.CROSS
        }

    def cross_triples(self):
        return [t for t in self._triples if self.relations[t.relation].modality is Modality.CROSS]

    def intra_triples(self):
        return [t for t in self._triples if self.relations[t.relation].modality is Modality.INTRA]

    def copy(self) -> "MultimodalGraph":
        """Unfrozen deep copy."""
        g = MultimodalGraph()
        for node in self.concepts.values():
            g.add_concept(node)
        for node in self.images.values():
            g.add_image(node)
        for rel in self.relations.values():
            g.add_relation(rel)
        for t in self._triples:
            g.add_triple(t)
        return g

    def __eq__(self, other) -> bool:
        if not isinstance(other, MultimodalGraph):
            return NotImplemented
        return (
            self.concepts == other.concepts
            and self.images == other.images
            and self.relations == other.relations
            and self._triples.keys() == other._triples.keys()
        )

    def __repr__(self):
        return (
            f"MultimodalGraph(concepts={len(self.concepts)}, images={len(self.images)}, "
            f"relations={len(self.relations)}, triples={len(self._triples)})"
        )


def add_triple(graph: MultimodalGraph, triple) -> MultimodalGraph:
    graph.add_triple(triple)
    return graph


def neighbors(graph: MultimodalGraph, node_id: str):
    return graph.neighbors(node_id)


def _ratio(num: int, den: int) -> Fraction:
    return Fraction(num, den) if den else Fraction(0)


@dataclass(frozen=True)
class GraphStats:
    total_edges: int
    num_concepts: int
    num_images: int
    num_relations: int
    cross_edges: int
    intra_edges: int
    image_to_concept_ratio: Fraction
    avg_edges_per_image: Fraction
    avg_edges_per_concept: Fraction

    ROWS = (
        ("Total Number of Edges", "total_edges"),
        ("Number of Concepts", "num_concepts"),
        ("Number of Images", "num_images"),
        ("Number of Relations", "num_relations"),
        ("Number of Cross-modality Edges", "cross_edges"),
        ("Number of Intra-modality Edges", "intra_edges"),
        ("Image-to-Concept Ratio", "image_to_concept_ratio"),
        ("Average Edges per Image", "avg_edges_per_image"),
        ("Average Edges per Concept", "avg_edges_per_concept"),
    )

    def display(self, field: str) -> str:
        value = getattr(self, field)
        if isinstance(value, Fraction):
            return f"{float(value):.2f}"
        return f"{value:,}"

    def to_dict(self) -> dict:
        out = {}
        for _, field in self.ROWS:
            value = getattr(self, field)
            out[field] = float(value) if isinstance(value, Fraction) else value
        return out

    def format_table(self) -> str:
        width = max(len(label) for label, _ in self.ROWS)
        lines = [f"{'Statistic':<{width}}  {'Count':>10}"]
        for label, field in self.ROWS:
            lines.append(f"{label:<{width}}  {self.display(field):>10}")
        return "\n".join(lines)


def compute_stats(graph: MultimodalGraph) -> GraphStats:
    """Summary counts and ratios; ratios are exact fractions (0 on empty denominators).

    Edges per concept divides *all* edges by the concept count, not the number
    of edges incident to concepts.
    """
    cross = intra = 0
    for t in graph:
        if graph.relations[t.relation].modality is Modality.CROSS:
            cross += 1
        else:
            intra += 1
    total = cross + intra
    n_c, n_i = len(graph.concepts), len(graph.images)
    return GraphStats(
        total_edges=total,
        num_concepts=n_c,
        num_images=n_i,
        num_relations=len(graph.relations),
        cross_edges=cross,
        intra_edges=intra,
        image_to_concept_ratio=_ratio(n_i, n_c),
        avg_edges_per_image=_ratio(cross, n_i),
        avg_edges_per_concept=_ratio(total, n_c),
    )


def graph_from_parts(
    concepts: Iterable[ConceptNode],
    images: Iterable[ImageNode],
    relations: Iterable[RelationType],
    triples: Iterable,
) -> MultimodalGraph:
    g = MultimodalGraph()
    for c in concepts:
        g.add_concept(c)
    for m in images:
        g.add_image(m)
    for r in relations:
        g.add_relation(r)
    for t in triples:
        g.add_triple(t if isinstance(t, Triple) else Triple(*t))
    return g
