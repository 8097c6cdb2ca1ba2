import json

import numpy as np
import pytest

from mmkg.exceptions import InfeasibleSpec
from mmkg.graph import Modality, compute_stats
from mmkg.synth import (
    TABLE1_SPEC,
    PlantedSpec,
    SynthSpec,
    generate,
    generate_planted_graph,
    generate_random_graph,
)


def small(**kw):
    base = dict(num_concepts=40, num_images=30, num_relations=6, cross_edges=200, intra_edges=150, seed=7)
    base.update(kw)
    return SynthSpec(**base)


class TestRandom:
    def test_table1(self):
        g = generate_random_graph(TABLE1_SPEC)
        s = compute_stats(g)
        assert (s.num_concepts, s.num_images, s.num_relations) == (3149, 4868, 262)
        assert (s.cross_edges, s.intra_edges, s.total_edges) == (20705, 14682, 35387)
        shown = [s.display(f) for f in ("image_to_concept_ratio", "avg_edges_per_image", "avg_edges_per_concept")]
        assert shown == ["1.55", "4.25", "11.24"]

    def test_zero_edges(self):
        s = compute_stats(generate_random_graph(small(cross_edges=0, intra_edges=0)))
        assert s.total_edges == 0 and s.avg_edges_per_image == 0 and s.avg_edges_per_concept == 0

    def test_deterministic(self):
        assert generate_random_graph(small()).triples == generate_random_graph(small()).triples
        assert generate_random_graph(small()).triples != generate_random_graph(small(seed=8)).triples

    def test_exact_counts_and_valid(self):
        g = generate_random_graph(small())
        cross = [t for t in g if g.relations[t.relation].modality is Modality.CROSS]
        assert len(cross) == 200 and len(g) == 350
        assert all(t.head != t.tail for t in g.intra_triples())

    @pytest.mark.parametrize("kw", [dict(cross_edges=40 * 30 * 3 + 1), dict(intra_edges=40 * 39 * 3 + 1),
                                    dict(num_relations=2), dict(num_concepts=-1)])
    def test_infeasible(self, kw):
        with pytest.raises(InfeasibleSpec):
            generate_random_graph(small(**kw))

    def test_full_capacity(self):
        g = generate_random_graph(small(num_concepts=3, num_images=2, num_relations=4, cross_edges=18,
                                        intra_edges=6))
        assert len(g) == 24


class TestPlanted:
    def test_counts_within_two_percent(self):
        for seed in range(3):
            spec = small(seed=seed, planted=PlantedSpec(latent_dim=4, noise_sigma=0.05))
            g = generate_planted_graph(spec)
            n_cross = sum(1 for t in g if g.relations[t.relation].modality is Modality.CROSS)
            assert abs(n_cross - 200) <= 0.02 * 200
            assert abs(len(g) - n_cross - 150) <= 0.02 * 150

    def test_zero_noise_anchors_included(self):
        spec = small(planted=PlantedSpec(latent_dim=4, noise_sigma=0.0, anchors=10))
        g, lat = generate_planted_graph(spec, return_latents=True)
        assert len(lat.anchors) == 10
        assert all(t in g for t in lat.anchors)

    def test_translational_structure(self):
        spec = small(planted=PlantedSpec(latent_dim=4, noise_sigma=0.0))
        g, lat = generate_planted_graph(spec, return_latents=True)
        inside = [np.linalg.norm(lat.entities[t.head] + lat.relations[t.relation] - lat.entities[t.tail])
                  for t in g]
        rng = np.random.default_rng(0)
        names = sorted(lat.entities)
        outside = [np.linalg.norm(lat.entities[names[a]] + lat.relations["positive"] - lat.entities[names[b]])
                   for a, b in rng.integers(len(names), size=(300, 2))]
        assert np.median(inside) < np.median(outside)

    def test_deterministic(self):
        spec = small(planted=PlantedSpec())
        assert generate(spec).triples == generate(spec).triples

    def test_too_big(self):
        with pytest.raises(InfeasibleSpec):
            generate_planted_graph(SynthSpec(5000, 5000, 10, 100, 100, planted=PlantedSpec()))

    def test_bad_planted(self):
        with pytest.raises(ValueError):
            PlantedSpec(latent_dim=0)
        with pytest.raises(ValueError):
            PlantedSpec(noise_sigma=-1)


class TestSpecIO:
    def test_json_round_trip(self, tmp_path):
        spec = small(planted=PlantedSpec(latent_dim=3, noise_sigma=0.1))
        p = tmp_path / "s.json"
        p.write_text(json.dumps(spec.to_dict()))
        assert SynthSpec.from_json(p) == spec
        assert SynthSpec.from_dict(small().to_dict()).planted is None
