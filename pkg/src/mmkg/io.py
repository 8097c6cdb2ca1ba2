"""TSV serialization for graphs and triple lists.

A graph directory holds three UTF-8 files:

* ``nodes.tsv``      node_id, kind (CONCEPT|IMAGE), name, semantic_type
* ``relations.tsv``  relation_id, modality (INTRA|CROSS), polarity
* ``triples.tsv``    head_id, relation_id, tail_id

Lines starting with ``#`` are comments. Image rows carry their ``source_ref``
in the name column. Tabs, newlines and backslashes inside text fields are
backslash-escaped. Rows are written sorted so output is byte-stable.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Iterable, List, TextIO, Union

from mmkg.exceptions import MMKGError, ParseError
from mmkg.graph import (
    ConceptNode,
    ImageNode,
    Modality,
    MultimodalGraph,
    Polarity,
    RelationType,
    Triple,
)

NODES_FILE = "nodes.tsv"
RELATIONS_FILE = "relations.tsv"
TRIPLES_FILE = "triples.tsv"

_NODES_HEADER = "# node_id\tkind\tname\tsemantic_type\n"
_RELATIONS_HEADER = "# relation_id\tmodality\tpolarity\n"
_TRIPLES_HEADER = "# head_id\trelation_id\ttail_id\n"

PathLike = Union[str, os.PathLike]


def escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r")


def unescape(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            out.append({"t": "\t", "n": "\n", "r": "\r", "\\": "\\"}.get(nxt, "\\" + nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _rows(stream: TextIO, source: str, n_fields: int):
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != n_fields:
            raise ParseError(f"expected {n_fields} tab-separated fields, got {len(fields)}", lineno, source)
        yield lineno, [unescape(f) for f in fields]


def write_nodes(graph: MultimodalGraph, stream: TextIO) -> None:
    stream.write(_NODES_HEADER)
    rows = []
    for c in graph.concepts.values():
        rows.append((c.cui, "CONCEPT", c.name, c.semantic_type))
    for m in graph.images.values():
        rows.append((m.image_id, "IMAGE", m.source_ref, ""))
    for row in sorted(rows):
        stream.write("\t".join(escape(f) for f in row) + "\n")


def write_relations(graph: MultimodalGraph, stream: TextIO) -> None:
    stream.write(_RELATIONS_HEADER)
    for rid in sorted(graph.relations):
        rel = graph.relations[rid]
        pol = rel.polarity.value if rel.polarity is not None else ""
        stream.write(f"{escape(rid)}\t{rel.modality.value}\t{pol}\n")


def write_triples(triples: Iterable[Triple], stream: TextIO) -> None:
    stream.write(_TRIPLES_HEADER)
    for t in triples:
        stream.write(f"{escape(t.head)}\t{escape(t.relation)}\t{escape(t.tail)}\n")


def read_triples(stream: TextIO, source: str = "<triples>") -> List[Triple]:
    return [Triple(*f) for _, f in _rows(stream, source, 3)]


def serialize_graph(graph: MultimodalGraph, sink: PathLike) -> Path:
    """Write the three graph files into directory ``sink`` (created if needed)."""
    out = Path(sink)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / NODES_FILE, "w", encoding="utf-8", newline="\n") as f:
        write_nodes(graph, f)
    with open(out / RELATIONS_FILE, "w", encoding="utf-8", newline="\n") as f:
        write_relations(graph, f)
    with open(out / TRIPLES_FILE, "w", encoding="utf-8", newline="\n") as f:
        write_triples(graph.sorted_triples(), f)
    return out


def parse_streams(nodes: TextIO, relations: TextIO, triples: TextIO) -> MultimodalGraph:
    g = MultimodalGraph()
    for lineno, (node_id, kind, name, stype) in _rows(nodes, NODES_FILE, 4):
        try:
            if kind == "CONCEPT":
                g.add_concept(ConceptNode(node_id, name, stype), exist_ok=False)
            elif kind == "IMAGE":
                if stype:
                    raise ValueError("image rows must leave semantic_type empty")
                g.add_image(ImageNode(node_id, name), exist_ok=False)
            else:
                raise ValueError(f"unknown node kind {kind!r}")
        except (ValueError, MMKGError) as exc:
            raise ParseError(str(exc), lineno, NODES_FILE) from exc
    for lineno, (rid, modality, polarity) in _rows(relations, RELATIONS_FILE, 3):
        try:
            g.add_relation(RelationType(rid, Modality(modality), Polarity(polarity) if polarity else None))
        except (ValueError, MMKGError) as exc:
            raise ParseError(str(exc), lineno, RELATIONS_FILE) from exc
    for lineno, fields in _rows(triples, TRIPLES_FILE, 3):
        try:
            g.add_triple(Triple(*fields))
        except (ValueError, KeyError, MMKGError) as exc:
            raise ParseError(f"{type(exc).__name__}: {exc}", lineno, TRIPLES_FILE) from exc
    return g


def parse_graph(source: PathLike) -> MultimodalGraph:
    """Read a graph directory written by :func:`serialize_graph`."""
    src = Path(source)
    with open(src / NODES_FILE, encoding="utf-8") as n, open(src / RELATIONS_FILE, encoding="utf-8") as r, open(
        src / TRIPLES_FILE, encoding="utf-8"
    ) as t:
        return parse_streams(n, r, t)


def save_triples(triples: Iterable[Triple], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        write_triples(triples, f)


def load_triples(path: PathLike) -> List[Triple]:
    with open(path, encoding="utf-8") as f:
        return read_triples(f, str(path))
