import numpy as np
import pytest

from conftest import random_graph
from mmkg.exceptions import CheckpointMismatch, IndexOutOfRange, InvalidDimension
from mmkg.models import (
    MODEL_KINDS,
    VocabIndex,
    grad_triple,
    init_model,
    load_checkpoint,
    save_checkpoint,
    score_candidates,
    score_triple,
)
from oracles import finite_difference_check, naive_score


def vocab(n_ent=12, n_rel=4):
    return VocabIndex(tuple(f"e{i:02d}" for i in range(n_ent)), tuple(f"r{i}" for i in range(n_rel)))


ALL = pytest.mark.parametrize("kind", MODEL_KINDS)


class TestVocab:
    def test_from_graph_is_sorted_bijection(self):
        g = random_graph(np.random.default_rng(0), 5, 6, 20, 5)
        v = VocabIndex.from_graph(g)
        assert list(v.entities) == sorted(g.node_ids()) and len(set(v.entities)) == v.n_entities
        assert list(v.relations) == sorted(g.relations)
        triples = g.sorted_triples()
        assert v.decode(v.encode(triples)) == [tuple(t) for t in triples]

    def test_digest_stable(self):
        assert vocab().digest() == vocab().digest() != vocab(13).digest()

    def test_unknown_id(self):
        with pytest.raises(KeyError):
            vocab().encode([("e00", "nope", "e01")])


class TestInit:
    @ALL
    def test_deterministic(self, kind):
        a, b = init_model(kind, 6, vocab(), 42), init_model(kind, 6, vocab(), 42)
        for name in a.params:
            assert np.array_equal(a.params[name], b.params[name])

    @ALL
    def test_seed_sensitive(self, kind):
        a, b = init_model(kind, 6, vocab(), 42), init_model(kind, 6, vocab(), 43)
        assert any(not np.array_equal(a.params[n], b.params[n]) for n in a.params)

    @ALL
    def test_uniform_bound(self, kind):
        s = init_model(kind, 9, vocab(), 1)
        for spec in s.param_specs():
            if spec.init == "uniform" and spec.name != "normal":
                assert np.all(np.abs(s.params[spec.name]) <= 6 / 3)

    def test_transh_unit_normals(self):
        s = init_model("transh", 16, vocab(), 42)
        assert np.max(np.abs(np.linalg.norm(s.params["normal"], axis=1) - 1)) <= 1e-6

    def test_rotate_phase_range(self):
        ph = init_model("rotate", 16, vocab(), 42).params["phase"]
        assert ph.min() >= 0 and ph.max() < 2 * np.pi

    def test_tucker_core(self):
        core = init_model("tucker", 5, vocab(), 42).params["core"]
        assert core.shape == (5, 5, 5) and np.abs(core).max() <= 1

    @pytest.mark.parametrize("dim", [0, -3, 2.5])
    def test_invalid_dim(self, dim):
        with pytest.raises(InvalidDimension):
            init_model("transe", dim, vocab(), 42)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            init_model("conve", 4, vocab(), 42)


class TestScore:
    def test_transe_translation_identity(self):
        s = init_model("transe", 8, vocab(), 42)
        E, R = s.params["entity"], s.params["relation"]
        E[2] = E[1] + R[0]
        assert score_triple(s, 1, 0, 2) == 0.0
        assert all(score_triple(s, 1, 0, t) < 0 for t in range(12) if t != 2)

    def test_distmult_symmetric(self):
        s = init_model("distmult", 8, vocab(), 42)
        rng = np.random.default_rng(0)
        for h, r, t in zip(rng.integers(12, size=20), rng.integers(4, size=20), rng.integers(12, size=20)):
            assert score_triple(s, h, r, t) == pytest.approx(score_triple(s, t, r, h), rel=1e-12)

    def test_rotate_identity(self):
        s = init_model("rotate", 8, vocab(), 42)
        s.params["phase"][1] = 0.0
        assert score_triple(s, 3, 1, 3) == 0.0

    def test_complex_asymmetry(self):
        s = init_model("complex", 4, vocab(), 42)
        s.params["relation_re"][0] = 0.0
        s.params["relation_im"][0] = 1.0
        a, b = score_triple(s, 1, 0, 2), score_triple(s, 2, 0, 1)
        assert a == pytest.approx(-b) and abs(a - b) > 1e-6

    @ALL
    def test_matches_naive_formula(self, kind):
        s = init_model(kind, 5, vocab(), 7)
        rng = np.random.default_rng(1)
        for _ in range(25):
            h, r, t = int(rng.integers(12)), int(rng.integers(4)), int(rng.integers(12))
            expected = naive_score(kind, s.params, h, r, t)
            assert score_triple(s, h, r, t) == pytest.approx(expected, rel=1e-10, abs=1e-12)

    @ALL
    def test_out_of_range(self, kind):
        s = init_model(kind, 4, vocab(), 42)
        with pytest.raises(IndexOutOfRange):
            score_triple(s, 12, 0, 0)
        with pytest.raises(IndexOutOfRange):
            score_triple(s, 0, 4, 0)
        with pytest.raises(IndexOutOfRange):
            grad_triple(s, 0, 0, -1)

    @ALL
    def test_finite(self, kind):
        s = init_model(kind, 32, vocab(), 42)
        ids = np.arange(12)
        assert np.all(np.isfinite(s.score(ids, ids % 4, ids[::-1])))


class TestCandidates:
    @ALL
    def test_equals_loop(self, kind):
        s = init_model(kind, 5, vocab(), 3)
        rng = np.random.default_rng(2)
        ids = np.stack([rng.integers(12, size=7), rng.integers(4, size=7), rng.integers(12, size=7)], axis=1)
        for axis, n in (("head", 12), ("relation", 4), ("tail", 12)):
            fixed = {"head": dict(r=ids[:, 1], t=ids[:, 2]), "relation": dict(h=ids[:, 0], t=ids[:, 2]),
                     "tail": dict(h=ids[:, 0], r=ids[:, 1])}[axis]
            batch = score_candidates(s, axis=axis, **fixed)
            assert batch.shape == (7, n)
            for i, (h, r, t) in enumerate(ids):
                for c in range(n):
                    trip = {"head": (c, r, t), "relation": (h, c, t), "tail": (h, r, c)}[axis]
                    assert batch[i, c] == pytest.approx(score_triple(s, *trip), rel=1e-10, abs=1e-12)

    def test_toy_three_entities(self):
        s = init_model("transe", 4, vocab(3, 1), 42)
        vec = score_candidates(s, h=[0], r=[0], axis="tail")[0]
        assert vec.shape == (3,)
        assert np.allclose(vec, [score_triple(s, 0, 0, t) for t in range(3)], rtol=1e-12)

    def test_relation_task_length(self):
        s = init_model("distmult", 4, vocab(20, 262), 42)
        assert score_candidates(s, h=[0], t=[1], axis="relation").shape == (1, 262)

    def test_bad_axis(self):
        with pytest.raises(ValueError):
            init_model("transe", 4, vocab(), 42).score_candidates(h=[0], r=[0], axis="middle")

    def test_chunking_consistent(self):
        s = init_model("transr", 6, vocab(50, 3), 42)
        s._budget = 64  # force tiny chunks
        small = s.score_candidates(h=np.arange(50), r=np.arange(50) % 3, axis="tail")
        s._budget = 2 ** 22
        assert np.allclose(small, s.score_candidates(h=np.arange(50), r=np.arange(50) % 3, axis="tail"))


class TestGrad:
    @ALL
    def test_finite_differences(self, kind):
        s = init_model(kind, 4, vocab(8, 3), 11)
        rng = np.random.default_rng(5)
        for _ in range(10):
            h, r, t = int(rng.integers(8)), int(rng.integers(3)), int(rng.integers(8))
            assert finite_difference_check(s, h, r, t) < 1e-4

    @ALL
    def test_zero_upstream(self, kind):
        s = init_model(kind, 4, vocab(), 42)
        g = s.grad([1], [2], [3], 0.0)
        assert all(np.all(v == 0) for _, v in g.values())

    @ALL
    def test_linear_in_upstream(self, kind):
        s = init_model(kind, 4, vocab(), 42)
        g1, g3 = s.grad([1], [2], [3], 1.0), s.grad([1], [2], [3], 3.0)
        for name in g1:
            assert np.allclose(g3[name][1], 3 * g1[name][1], rtol=1e-12)

    def test_transe_head_tail_antisymmetric(self):
        s = init_model("transe", 8, vocab(), 42)
        g = s.grad([1], [0], [2], 1.0)
        idx, vals = g["entity"]
        rows = dict(zip(idx.tolist(), vals))
        assert np.allclose(rows[2], -rows[1])

    def test_duplicate_rows_accumulate(self):
        s = init_model("distmult", 4, vocab(), 42)
        single = s.grad([1], [0], [2], 1.0)
        double = s.grad([1, 1], [0, 0], [2, 2], 1.0)
        for name in single:
            assert np.array_equal(single[name][0], double[name][0])
            assert np.allclose(double[name][1], 2 * single[name][1])

    def test_untouched_rows_absent(self):
        s = init_model("complex", 4, vocab(), 42)
        g = s.grad([1], [2], [3], 1.0)
        assert set(g["entity_re"][0].tolist()) == {1, 3}
        assert g["relation_re"][0].tolist() == [2]


class TestCheckpoint:
    @ALL
    def test_round_trip(self, kind, tmp_path):
        v = vocab()
        s = init_model(kind, 5, v, 42)
        save_checkpoint(s, tmp_path / "m.ckpt")
        back = load_checkpoint(tmp_path / "m.ckpt", v)
        assert back.kind == kind and back.dim == 5 and back.seed == 42
        for name, arr in s.params.items():
            assert np.array_equal(back.params[name], arr.astype(np.float32).astype(np.float64))

    def test_header_layout(self, tmp_path):
        s = init_model("transe", 3, vocab(), 42)
        save_checkpoint(s, tmp_path / "m.ckpt")
        data = (tmp_path / "m.ckpt").read_bytes()
        assert data[:8] == b"MMKGCKPT"
        n = int.from_bytes(data[8:12], "little")
        import json

        header = json.loads(data[12:12 + n])
        assert header["model_kind"] == "transe" and header["vocab_hash"] == vocab().digest()
        assert len(data) == 12 + n + 4 * s.n_parameters()

    def test_vocab_mismatch(self, tmp_path):
        save_checkpoint(init_model("transe", 3, vocab(), 42), tmp_path / "m.ckpt")
        with pytest.raises(CheckpointMismatch):
            load_checkpoint(tmp_path / "m.ckpt", vocab(13))

    def test_not_a_checkpoint(self, tmp_path):
        (tmp_path / "x").write_bytes(b"hello world")
        with pytest.raises(CheckpointMismatch):
            load_checkpoint(tmp_path / "x")

    def test_truncated(self, tmp_path):
        save_checkpoint(init_model("transe", 3, vocab(), 42), tmp_path / "m.ckpt")
        data = (tmp_path / "m.ckpt").read_bytes()
        (tmp_path / "m.ckpt").write_bytes(data[:-4])
        with pytest.raises((CheckpointMismatch, ValueError)):
            load_checkpoint(tmp_path / "m.ckpt")
