import numpy as np
import pytest

from mmkg.graph import POLARITY_RELATIONS, ConceptNode, ImageNode, MultimodalGraph, RelationType, Triple

POL_IDS = [r.relation_id for r in POLARITY_RELATIONS]


def cui(i):
    return f"C{i:07d}"


def img(i):
    return f"img{i}"


def make_graph(n_images, n_concepts, cross=(), intra=(), intra_relations=("isa",)):
    """Graph over ``img0..`` and ``C0000000..`` with the given (index-based) edges."""
    g = MultimodalGraph()
    for i in range(n_concepts):
        g.add_concept(ConceptNode(cui(i), f"concept {i}", "Finding"))
    for i in range(n_images):
        g.add_image(ImageNode(img(i), f"ref/{i}"))
    for rel in POLARITY_RELATIONS:
        g.add_relation(rel)
    for rid in intra_relations:
        g.add_relation(RelationType.intra(rid))
    for m, r, c in cross:
        g.add_triple(Triple(img(m), POL_IDS[r], cui(c)))
    for a, rid, b in intra:
        g.add_triple(Triple(cui(a), rid, cui(b)))
    return g


def random_graph(rng, n_images, n_concepts, n_cross, n_intra=0, n_polarity=3, intra_relations=("isa", "part_of")):
    cross = set()
    for _ in range(n_cross):
        cross.add((int(rng.integers(n_images)), int(rng.integers(n_polarity)), int(rng.integers(n_concepts))))
    intra = set()
    if n_concepts > 1:
        for _ in range(n_intra):
            a, b = rng.choice(n_concepts, 2, replace=False)
            intra.add((int(a), intra_relations[int(rng.integers(len(intra_relations)))], int(b)))
    return make_graph(n_images, n_concepts, sorted(cross), sorted(intra), intra_relations)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def small_graph():
    # 4 images, 3 concepts: img0 has an exclusive pair, img3 is edgeless
    return make_graph(
        4, 3,
        cross=[(0, 0, 0), (0, 0, 1), (1, 0, 1), (1, 1, 2), (2, 0, 2)],
        intra=[(0, "isa", 1), (1, "isa", 2)],
    )


# PASS/FAIL lines collected by the acceptance suite
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
