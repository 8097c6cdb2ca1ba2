import io
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cui, img, make_graph, random_graph
from mmkg.exceptions import DuplicateTriple, GraphFrozen, ModalityViolation, ParseError, UnknownNode, UnknownRelation
from mmkg.graph import (
    ConceptNode,
    ImageNode,
    Modality,
    MultimodalGraph,
    Polarity,
    RelationType,
    Triple,
    add_triple,
    compute_stats,
    graph_from_parts,
    neighbors,
)
from mmkg.io import parse_graph, parse_streams, serialize_graph


def _base():
    g = MultimodalGraph()
    g.add_image(ImageNode("img1", "files/p10/s1.jpg"))
    g.add_concept(ConceptNode("C0020538", "Hypertensive disease", "Disease or Syndrome"))
    g.add_concept(ConceptNode("C0011849", "Diabetes Mellitus", "Disease or Syndrome"))
    g.add_relation(RelationType.cross("Positive"))
    g.add_relation(RelationType.intra("treats"))
    return g


graphs = st.builds(
    lambda seed, ni, nc, nx, nn: random_graph(np.random.default_rng(seed), ni, nc, nx, nn),
    st.integers(0, 10_000), st.integers(1, 12), st.integers(2, 12), st.integers(0, 40), st.integers(0, 30),
)


class TestTypes:
    def test_cui_pattern(self):
        with pytest.raises(ValueError):
            ConceptNode("X123")
        with pytest.raises(ValueError):
            ConceptNode("C12a")
        assert ConceptNode("C0020538").node_id == "C0020538"

    def test_polarity_rule(self):
        with pytest.raises(ValueError):
            RelationType("positive", Modality.CROSS)
        with pytest.raises(ValueError):
            RelationType("treats", Modality.INTRA, Polarity.POSITIVE)
        rel = RelationType.cross("Uncertain")
        assert rel.relation_id == "uncertain" and rel.polarity is Polarity.UNCERTAIN

    def test_polarity_parse_case_insensitive(self):
        assert Polarity.parse(" nEgAtIvE ") is Polarity.NEGATIVE
        with pytest.raises(ValueError):
            Polarity.parse("Neutral")


class TestAddTriple:
    def test_single_insert(self):
        g = add_triple(_base(), Triple("img1", "positive", "C0020538"))
        stats = compute_stats(g)
        assert stats.cross_edges == 1 and stats.intra_edges == 0

    def test_duplicate_rejected(self):
        g = _base()
        g.add_triple(Triple("img1", "positive", "C0020538"))
        with pytest.raises(DuplicateTriple):
            g.add_triple(Triple("img1", "positive", "C0020538"))
        assert len(g) == 1

    def test_intra_self_loop(self):
        with pytest.raises(ModalityViolation):
            _base().add_triple(Triple("C0011849", "treats", "C0011849"))

    def test_cross_with_concept_head(self):
        with pytest.raises(ModalityViolation):
            _base().add_triple(Triple("C0011849", "positive", "C0020538"))

    def test_intra_with_image_endpoint(self):
        with pytest.raises(ModalityViolation):
            _base().add_triple(Triple("img1", "treats", "C0020538"))

    def test_unknown_node_and_relation(self):
        g = _base()
        with pytest.raises(UnknownNode):
            g.add_triple(Triple("img9", "positive", "C0020538"))
        with pytest.raises(UnknownRelation):
            g.add_triple(Triple("img1", "negative", "C0020538"))

    def test_frozen_graph_is_read_only(self):
        g = _base().freeze()
        with pytest.raises(GraphFrozen):
            g.add_triple(Triple("img1", "positive", "C0020538"))
        with pytest.raises(GraphFrozen):
            g.add_concept(ConceptNode("C1"))

    def test_concept_and_image_ids_share_namespace(self):
        g = _base()
        with pytest.raises(ValueError):
            g.add_image(ImageNode("C0020538"))


class TestNeighbors:
    def test_isolated(self, small_graph):
        assert neighbors(small_graph, img(3)) == set()

    def test_image_neighbors(self, small_graph):
        assert neighbors(small_graph, img(0)) == {("positive", cui(0)), ("positive", cui(1))}

    def test_unknown(self, small_graph):
        with pytest.raises(UnknownNode):
            small_graph.neighbors("nope")

    @settings(max_examples=40, deadline=None)
    @given(graphs)
    def test_matches_full_scan(self, g):
        for node in g.node_ids():
            scan = {(t.relation, t.tail) for t in g if t.head == node}
            scan |= {(t.relation, t.head) for t in g if t.tail == node}
            assert g.neighbors(node) == scan

    @settings(max_examples=40, deadline=None)
    @given(graphs)
    def test_pair_index(self, g):
        cross = [t for t in g if g.relations[t.relation].modality is Modality.CROSS]
        expected = {}
        for t in cross:
            expected.setdefault((t.relation, t.tail), set()).add(t.head)
        assert g.pair_index() == expected


class TestStats:
    def test_table1_counts(self):
        # ratio arithmetic on the published counts
        ratios = {
            "image_to_concept_ratio": Fraction(4868, 3149),
            "avg_edges_per_image": Fraction(20705, 4868),
            "avg_edges_per_concept": Fraction(35387, 3149),
        }
        shown = {k: f"{float(v):.2f}" for k, v in ratios.items()}
        assert shown == {"image_to_concept_ratio": "1.55", "avg_edges_per_image": "4.25",
                         "avg_edges_per_concept": "11.24"}

    def test_empty_graph(self):
        s = compute_stats(MultimodalGraph())
        assert s.total_edges == 0
        assert s.image_to_concept_ratio == 0 and s.avg_edges_per_image == 0 and s.avg_edges_per_concept == 0
        assert s.display("avg_edges_per_concept") == "0.00"

    @settings(max_examples=40, deadline=None)
    @given(graphs)
    def test_identities(self, g):
        s = compute_stats(g)
        assert s.total_edges == s.cross_edges + s.intra_edges == len(g)
        assert s.image_to_concept_ratio == Fraction(s.num_images, s.num_concepts)
        assert s.avg_edges_per_image == Fraction(s.cross_edges, s.num_images)
        assert s.avg_edges_per_concept == Fraction(s.total_edges, s.num_concepts)

    def test_table_rendering(self, small_graph):
        text = compute_stats(small_graph).format_table()
        assert "Average Edges per Concept" in text and "2.33" in text


class TestSerialization:
    def test_empty_round_trip(self, tmp_path):
        serialize_graph(MultimodalGraph(), tmp_path)
        for name in ("nodes.tsv", "relations.tsv", "triples.tsv"):
            lines = (tmp_path / name).read_text().splitlines()
            assert len(lines) == 1 and lines[0].startswith("#")
        assert parse_graph(tmp_path) == MultimodalGraph()

    def test_one_triple(self, tmp_path):
        g = add_triple(_base(), Triple("img1", "positive", "C0020538"))
        serialize_graph(g, tmp_path)
        back = parse_graph(tmp_path)
        assert back == g
        assert back.images["img1"].source_ref == "files/p10/s1.jpg"

    def test_thousand_triples(self, tmp_path):
        g = random_graph(np.random.default_rng(0), 60, 80, 700, 400)
        assert len(g) >= 1000
        serialize_graph(g, tmp_path)
        back = parse_graph(tmp_path)
        assert back.triples == g.triples
        assert set(back.concepts) == set(g.concepts) and set(back.images) == set(g.images)

    def test_byte_stable(self, tmp_path):
        g = random_graph(np.random.default_rng(1), 10, 10, 30, 20)
        serialize_graph(g, tmp_path / "a")
        serialize_graph(parse_graph(tmp_path / "a"), tmp_path / "b")
        for name in ("nodes.tsv", "relations.tsv", "triples.tsv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_escaped_text_fields(self, tmp_path):
        g = MultimodalGraph()
        g.add_concept(ConceptNode("C1", "tab\there\nnewline \\ slash", "Finding"))
        serialize_graph(g, tmp_path)
        assert parse_graph(tmp_path).concepts["C1"].name == "tab\there\nnewline \\ slash"

    @settings(max_examples=30, deadline=None)
    @given(graphs)
    def test_round_trip_property(self, g):
        buf = [io.StringIO() for _ in range(3)]
        from mmkg.io import write_nodes, write_relations, write_triples

        write_nodes(g, buf[0])
        write_relations(g, buf[1])
        write_triples(g.sorted_triples(), buf[2])
        for b in buf:
            b.seek(0)
        assert parse_streams(*buf) == g

    def test_parse_error_line_number(self):
        nodes = io.StringIO("# header\nC1\tCONCEPT\tx\tFinding\nimg1\tIMAGE\tref\n")
        with pytest.raises(ParseError) as exc:
            parse_streams(nodes, io.StringIO(""), io.StringIO(""))
        assert exc.value.line == 3

    def test_parse_error_bad_triple(self):
        nodes = io.StringIO("C1\tCONCEPT\tx\tFinding\n")
        rels = io.StringIO("isa\tINTRA\t\n")
        triples = io.StringIO("# h\tr\tt\nC1\tisa\tC1\n")
        with pytest.raises(ParseError) as exc:
            parse_streams(nodes, rels, triples)
        assert exc.value.line == 2 and "ModalityViolation" in str(exc.value)

    def test_graph_from_parts(self):
        g = graph_from_parts([ConceptNode("C1"), ConceptNode("C2")], [ImageNode("m")],
                             [RelationType.cross("Positive")], [("m", "positive", "C1")])
        assert Triple("m", "positive", "C1") in g

    def test_copy_is_unfrozen_and_equal(self, small_graph):
        small_graph.freeze()
        c = small_graph.copy()
        assert c == small_graph and not c.frozen
