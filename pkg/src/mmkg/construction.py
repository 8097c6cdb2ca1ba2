"""Graph construction from candidate concept annotations.

Input is one JSON record per report holding rule-based candidate mentions
(the output of an external concept tagger). Candidates are filtered by
semantic type, an annotator client picks one concept per mention together
with its stance toward the image, and the selections become cross-modality
edges. Concept pairs found in a terminology relation table become
intra-modality edges.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Iterator, List, NamedTuple, Optional, Protocol, Sequence, Set, Tuple

from mmkg.exceptions import (
    AnnotatorUnavailable,
    DuplicateTriple,
    InvalidSelection,
    MalformedResponse,
    MMKGError,
    ParseError,
    UnknownRelation,
)
from mmkg.graph import (
    CUI_PATTERN,
    POLARITY_RELATIONS,
    ConceptNode,
    ImageNode,
    MultimodalGraph,
    Polarity,
    RelationType,
    Triple,
)

logger = logging.getLogger(__name__)

ANNOTATOR_URL_ENV = "MMKG_ANNOTATOR_URL"


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class Candidate:
    cui: str
    name: str
    semantic_type: str


@dataclass(frozen=True)
class Mention:
    surface: str
    span: Tuple[int, int]
    candidates: Tuple[Candidate, ...]


@dataclass(frozen=True)
class AnnotationRecord:
    report_id: str
    image_ids: Tuple[str, ...]
    report_text: str
    mentions: Tuple[Mention, ...]

    def candidate_cuis(self) -> Set[str]:
        return {c.cui for m in self.mentions for c in m.candidates}

    def candidate(self, cui: str) -> Optional[Candidate]:
        for m in self.mentions:
            for c in m.candidates:
                if c.cui == cui:
                    return c
        return None


@dataclass
class DisambiguationResult:
    selections: List[Tuple[str, Polarity]]
    skipped_lines: int = 0
    rejected: List[str] = field(default_factory=list)


def record_from_dict(obj: dict) -> AnnotationRecord:
    text = obj["report_text"]
    if not isinstance(text, str):
        raise ValueError("report_text must be a string")
    mentions = []
    for m in obj.get("mentions", []):
        start, end = int(m["start"]), int(m["end"])
        if not 0 <= start < end <= len(text):
            raise ValueError(f"span ({start}, {end}) outside report of length {len(text)}")
        cands = tuple(Candidate(c["cui"], c.get("name", ""), c.get("semantic_type", "")) for c in m["candidates"])
        if not cands:
            raise ValueError(f"mention {m.get('surface')!r} has no candidates")
        for c in cands:
            if not CUI_PATTERN.match(c.cui):
                raise ValueError(f"bad CUI {c.cui!r}")
        mentions.append(Mention(m.get("surface", text[start:end]), (start, end), cands))
    image_ids = obj.get("image_ids", [])
    if isinstance(image_ids, str):
        raise ValueError("image_ids must be a list")
    return AnnotationRecord(str(obj["report_id"]), tuple(image_ids), text, tuple(mentions))


def record_to_dict(record: AnnotationRecord) -> dict:
    return {
        "report_id": record.report_id,
        "image_ids": list(record.image_ids),
        "report_text": record.report_text,
        "mentions": [
            {
                "surface": m.surface,
                "start": m.span[0],
                "end": m.span[1],
                "candidates": [
                    {"cui": c.cui, "name": c.name, "semantic_type": c.semantic_type} for c in m.candidates
                ],
            }
            for m in record.mentions
        ],
    }


def read_annotations(path) -> Iterator[AnnotationRecord]:
    """Stream records from a JSONL file; duplicate report ids are an error."""
    seen = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = record_from_dict(json.loads(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(f"{type(exc).__name__}: {exc}", lineno, str(path)) from exc
            if record.report_id in seen:
                raise ParseError(f"duplicate report_id {record.report_id!r}", lineno, str(path))
            seen.add(record.report_id)
            yield record


# ---------------------------------------------------------------------------
# stage I: section extraction and semantic-type filtering

_TARGET_HEADER = re.compile(r"\b(FINDINGS|IMPRESSION)\s*:", re.IGNORECASE)
# any all-caps header ends the current section
_ANY_HEADER = re.compile(r"\b[A-Z][A-Z /&()-]*[A-Z)]\s*:|\b(?i:findings|impression)\s*:")


def extract_report_sections(report_text: str) -> str:
    """Findings body then impression body, newline-joined; "" if neither has a body.

    Headers match case-insensitively. A body runs to the next all-caps header
    (or the other target header) or to the end of the text. Only the first
    occurrence of each header is used.
    """
    bodies = {}
    for m in _TARGET_HEADER.finditer(report_text):
        key = m.group(1).lower()
        if key in bodies:
            continue
        nxt = _ANY_HEADER.search(report_text, m.end())
        end = nxt.start() if nxt else len(report_text)
        bodies[key] = report_text[m.end():end].strip()
    return "\n".join(bodies[k] for k in ("findings", "impression") if bodies.get(k))


def load_exclusion_list(path=None) -> Set[str]:
    """Semantic types to drop; defaults to the bundled list."""
    if path is None:
        text = resources.files("mmkg").joinpath("data/excluded_semantic_types.txt").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return {line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")}


DEFAULT_EXCLUSIONS = frozenset(load_exclusion_list())


def filter_semantic_types(mentions: Sequence[Mention], exclusion: Iterable[str]) -> List[Mention]:
    exclusion = set(exclusion)
    out = []
    for m in mentions:
        kept = tuple(c for c in m.candidates if c.semantic_type not in exclusion)
        if kept:
            out.append(m if len(kept) == len(m.candidates) else Mention(m.surface, m.span, kept))
    return out


def filter_record(record: AnnotationRecord, exclusion: Iterable[str]) -> AnnotationRecord:
    return AnnotationRecord(
        record.report_id,
        record.image_ids,
        record.report_text,
        tuple(filter_semantic_types(record.mentions, exclusion)),
    )


# ---------------------------------------------------------------------------
# stage II: prompt, annotator clients, response parsing

PROMPT_TEMPLATE = """Report Text: {report_text}

Candidate Concepts: {candidates}

Task: every quoted phrase above lists one or more candidate concepts. Using the
report as context for a chest radiograph, choose the single best candidate for
each phrase, then label how the chosen concept relates to the image:

Positive: the concept is visible or affirmed for this image.
Negative: the report rules the concept out for this image.
Uncertain: the report hedges about the concept.
Neutral: the concept is generic, structural or carries no clinical content.

Leave Neutral concepts out of the answer. Reply with one line per kept concept,
giving the concept identifier (C followed by digits) and its label, wrapped in
the markers below:
***start***
(C0000000, Positive)
***end***"""


def format_candidates(mentions: Sequence[Mention]) -> str:
    lines = []
    for m in mentions:
        opts = "; ".join(f"{c.cui} ({c.name}) [{c.semantic_type}]" for c in m.candidates)
        lines.append(f'"{m.surface}": {opts}')
    return "\n" + "\n".join(lines) if lines else ""


def build_prompt(record: AnnotationRecord, full_text: bool = False) -> str:
    text = record.report_text if full_text else (extract_report_sections(record.report_text) or record.report_text)
    return PROMPT_TEMPLATE.format(report_text=text, candidates=format_candidates(record.mentions))


class ParsedBlock(NamedTuple):
    pairs: List[Tuple[str, Polarity]]
    skipped: int


_BLOCK = re.compile(r"\*\*\*start\*\*\*(.*?)\*\*\*end\*\*\*", re.DOTALL | re.IGNORECASE)
_LINE = re.compile(r"^\(\s*(C\d+)\s*,\s*(positive|negative|uncertain)\s*\)$", re.IGNORECASE)


def parse_annotator_block(raw: str) -> ParsedBlock:
    """Pull ``(CUI, Polarity)`` lines out of the first start/end block.

    Blank lines are ignored; any other line that does not parse (including a
    Neutral label) is skipped and counted.
    """
    m = _BLOCK.search(raw or "")
    if m is None:
        raise MalformedResponse("no ***start***/***end*** block in annotator response")
    pairs, skipped = [], 0
    for line in m.group(1).splitlines():
        line = line.strip().rstrip("\\").strip()
        if not line:
            continue
        lm = _LINE.match(line)
        if lm is None:
            skipped += 1
            continue
        pairs.append((lm.group(1), Polarity.parse(lm.group(2))))
    if skipped:
        logger.debug("skipped %d unparseable annotator lines", skipped)
    return ParsedBlock(pairs, skipped)


class AnnotatorClient(Protocol):
    def complete(self, prompt: str, record: AnnotationRecord) -> str:
        ...


_NEGATION_CUES = ("no ", "without ", "negative for ", "free of ", "absence of ", "resolved ")
_UNCERTAIN_CUES = ("possible ", "possibly ", "may ", "could ", "cannot exclude ", "suspicious for ", "likely ", "question of ")


class MockAnnotator:
    """Deterministic offline annotator.

    Picks the first candidate of every mention. ``polarity`` fixes the label;
    ``"cue"`` derives it from negation/hedging words in the 40 characters before
    the mention.
    """

    def __init__(self, polarity="cue", model="mock"):
        self.polarity = polarity
        self.model = model

    def _label(self, record: AnnotationRecord, mention: Mention) -> Polarity:
        if self.polarity != "cue":
            return Polarity(self.polarity)
        window = record.report_text[max(0, mention.span[0] - 40):mention.span[0]].lower()
        sentence = re.split(r"[.;\n]", window)[-1] + " "
        sentence = " " + sentence
        if any(" " + cue in sentence for cue in _NEGATION_CUES):
            return Polarity.NEGATIVE
        if any(" " + cue in sentence for cue in _UNCERTAIN_CUES):
            return Polarity.UNCERTAIN
        return Polarity.POSITIVE

    def complete(self, prompt: str, record: AnnotationRecord) -> str:
        lines = [f"({m.candidates[0].cui}, {self._label(record, m).value})" for m in record.mentions]
        return "***start***\n" + "\n".join(lines) + "\n***end***"


class HttpAnnotator:
    """POSTs ``{"model", "prompt"}`` JSON and reads the completion text back.

    The completion is taken from the first present of ``text``, ``completion``,
    ``response``, ``output``, or an OpenAI-style ``choices[0]``.
    """

    def __init__(self, url=None, model="default", timeout=60.0, backoff=(1.0, 2.0, 4.0), sleep=time.sleep):
        self.url = url or os.environ.get(ANNOTATOR_URL_ENV)
        if not self.url:
            raise AnnotatorUnavailable(f"no annotator URL given and ${ANNOTATOR_URL_ENV} is unset")
        self.model = model
        self.timeout = timeout
        self.backoff = tuple(backoff)
        self._sleep = sleep

    @staticmethod
    def _extract_text(body) -> str:
        if isinstance(body, str):
            return body
        for key in ("text", "completion", "response", "output"):
            if isinstance(body.get(key), str):
                return body[key]
        choices = body.get("choices")
        if choices:
            first = choices[0]
            if isinstance(first.get("text"), str):
                return first["text"]
            msg = first.get("message") or {}
            if isinstance(msg.get("content"), str):
                return msg["content"]
        raise MalformedResponse("annotator reply has no completion text field")

    def complete(self, prompt: str, record: AnnotationRecord = None) -> str:
        import requests

        last_error = None
        for delay in self.backoff:
            try:
                resp = requests.post(self.url, json={"model": self.model, "prompt": prompt}, timeout=self.timeout)
                resp.raise_for_status()
                return self._extract_text(resp.json())
            except (requests.RequestException, ValueError) as exc:
                if isinstance(exc, MalformedResponse):
                    raise
                last_error = exc
                logger.warning("annotator request failed (%s); retrying in %.1fs", exc, delay)
                self._sleep(delay)
        raise AnnotatorUnavailable(f"annotator at {self.url} unreachable after {len(self.backoff)} attempts: {last_error}")


def disambiguate(record: AnnotationRecord, client: AnnotatorClient, full_text: bool = False) -> DisambiguationResult:
    """Ask the annotator to pick concepts and stances for one record.

    Returned CUIs outside the record's candidate lists are dropped and logged.
    A CUI returned twice keeps its first label.
    """
    if not record.mentions:
        raise InvalidSelection(f"record {record.report_id!r} has no mentions to disambiguate")
    raw = client.complete(build_prompt(record, full_text=full_text), record)
    parsed = parse_annotator_block(raw)
    allowed = record.candidate_cuis()
    selections, rejected, seen = [], [], set()
    for cui, pol in parsed.pairs:
        if cui not in allowed:
            logger.info("record %s: annotator returned non-candidate %s; skipped", record.report_id, cui)
            rejected.append(cui)
            continue
        if cui in seen:
            continue
        seen.add(cui)
        selections.append((cui, pol))
    return DisambiguationResult(selections, parsed.skipped, rejected)


# ---------------------------------------------------------------------------
# relation table and graph assembly


@dataclass
class RelationTable:
    entries: Set[Tuple[str, str, str]] = field(default_factory=set)
    relations: Optional[Set[str]] = None

    def __post_init__(self):
        self.entries = set(self.entries)
        for a, _, b in self.entries:
            if a == b:
                raise ValueError(f"relation table self-pair on {a}")
        self._by_pair = {}
        for a, rel, b in self.entries:
            key = (a, b) if a < b else (b, a)
            self._by_pair.setdefault(key, []).append((a, rel, b))

    def between(self, a: str, b: str) -> List[Tuple[str, str, str]]:
        key = (a, b) if a < b else (b, a)
        return sorted(self._by_pair.get(key, ()))

    def relation_ids(self) -> Set[str]:
        return {rel for _, rel, _ in self.entries}


def read_relation_table(path, relations=None) -> RelationTable:
    entries = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError("expected cui_a<TAB>relation_id<TAB>cui_b", lineno, str(path))
            a, rel, b = (p.strip() for p in parts)
            if a == b:
                # self-relations never become edges
                continue
            entries.add((a, rel, b))
    return RelationTable(entries, relations)


@dataclass
class BuildSummary:
    records_seen: int = 0
    records_ok: int = 0
    records_failed: int = 0
    skipped_lines: int = 0
    rejected_selections: int = 0
    failures: List[Tuple[str, str]] = field(default_factory=list)


class GraphBuilder:
    """Assembles a graph from records; keeps a :class:`BuildSummary`.

    ``intra_mode="record"`` links only concepts co-selected within one report;
    ``"global"`` adds every table pair among all concepts in the final graph.
    """

    def __init__(self, relation_table: RelationTable, client: AnnotatorClient, intra_mode="record",
                 full_text=False, workers=1):
        if intra_mode not in ("record", "global"):
            raise ValueError(f"intra_mode must be 'record' or 'global', got {intra_mode!r}")
        self.relation_table = relation_table
        self.client = client
        self.intra_mode = intra_mode
        self.full_text = full_text
        self.workers = max(1, int(workers))
        self.summary = BuildSummary()

    def _init_graph(self) -> MultimodalGraph:
        g = MultimodalGraph()
        for rel in POLARITY_RELATIONS:
            g.add_relation(rel)
        declared = self.relation_table.relations
        for rid in sorted(self.relation_table.relation_ids()):
            if declared is not None and rid not in declared:
                raise UnknownRelation(rid)
            if rid in g.relations:
                raise UnknownRelation(f"{rid!r} clashes with a polarity relation")
            g.add_relation(RelationType.intra(rid))
        return g

    def _try(self, record):
        try:
            return record, disambiguate(record, self.client, self.full_text), None
        except (MMKGError, OSError) as exc:
            return record, None, exc

    @staticmethod
    def _add(graph, triple):
        try:
            graph.add_triple(triple)
        except DuplicateTriple:
            pass

    def _add_intra(self, graph, cuis):
        cuis = sorted(cuis)
        for i, a in enumerate(cuis):
            for b in cuis[i + 1:]:
                for x, rel, y in self.relation_table.between(a, b):
                    self._add(graph, Triple(x, rel, y))

    def build(self, records: Iterable[AnnotationRecord]) -> MultimodalGraph:
        graph = self._init_graph()
        records = list(records)
        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                results = list(pool.map(self._try, records))
        else:
            results = [self._try(r) for r in records]

        for record, result, error in results:
            self.summary.records_seen += 1
            if error is not None:
                self.summary.records_failed += 1
                self.summary.failures.append((record.report_id, f"{type(error).__name__}: {error}"))
                logger.warning("record %s failed: %s", record.report_id, error)
                continue
            self.summary.records_ok += 1
            self.summary.skipped_lines += result.skipped_lines
            self.summary.rejected_selections += len(result.rejected)
            for cui, _ in result.selections:
                c = record.candidate(cui)
                graph.add_concept(ConceptNode(c.cui, c.name, c.semantic_type))
            for image_id in record.image_ids:
                graph.add_image(ImageNode(image_id, f"report:{record.report_id}"))
                for cui, pol in result.selections:
                    self._add(graph, Triple(image_id, pol.relation_id, cui))
            if self.intra_mode == "record":
                self._add_intra(graph, [cui for cui, _ in result.selections])
        if self.intra_mode == "global":
            for a, rel, b in sorted(self.relation_table.entries):
                if a in graph.concepts and b in graph.concepts:
                    self._add(graph, Triple(a, rel, b))
        return graph


def build_graph(records: Iterable[AnnotationRecord], relation_table: RelationTable, client: AnnotatorClient,
                **kwargs) -> MultimodalGraph:
    return GraphBuilder(relation_table, client, **kwargs).build(records)
