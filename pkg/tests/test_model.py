import numpy as np
import pytest

import oracle
from bagnn import tensor as T
from bagnn.attention import ConfigError, layer_forward, project_features
from bagnn.model import (
    DECODERS,
    MAGIC,
    VARIANTS,
    ModelConfig,
    classify,
    forward,
    init_params,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
    score_candidates,
    score_triple,
    score_triples,
)
from bagnn.synthetic import random_graph, six_node_fixture
from bagnn.tensor import Tensor


def fixture_model(variant="full", layers=2, seed=0, **kw):
    g, split = six_node_fixture()
    cfg = ModelConfig(num_layers=layers, hidden_dim=4, heads=2, variant=variant, num_classes=2, seed=seed, **kw)
    return g, split, init_params(cfg, g)


class TestConfig:
    def test_unknown_variant(self):
        with pytest.raises(ConfigError):
            ModelConfig(variant="triple")

    def test_complex_needs_even_width(self):
        with pytest.raises(ConfigError):
            ModelConfig(hidden_dim=5, decoder="complex")

    def test_dict_round_trip(self):
        cfg = ModelConfig(hidden_dim=8, decoder="transe", seed=4)
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg
        with pytest.raises(ConfigError):
            ModelConfig.from_dict({**cfg.to_dict(), "dropout": 0.5})

    def test_variant_modes(self):
        for name, (node_mode, rel_mode) in VARIANTS.items():
            lc = ModelConfig(variant=name).layer_configs()[0]
            assert (lc.node_att_mode, lc.rel_att_mode) == (node_mode, rel_mode)


class TestForward:
    def test_one_layer_is_projection_plus_layer(self):
        g, _, p = fixture_model(layers=1)
        with T.no_grad():
            h, recs = forward(g, p)
            h0 = project_features(p.embedding, g.entity_type_of, p.type_proj)
            ref, _ = layer_forward(g, h0, p.layers[0])
        assert len(recs) == 1
        assert h.data.tobytes() == ref.data.tobytes()

    @pytest.mark.parametrize("variant", sorted(VARIANTS))
    def test_two_layers_match_oracle(self, variant):
        g, _, p = fixture_model(variant, seed=3)
        with T.no_grad():
            h, _ = forward(g, p)
        expected, _ = oracle.encoder(
            g.edges.tolist(), 6, g.entity_type_of, p.embedding.data, p.type_proj.data,
            [oracle.unpack(lp) for lp in p.layers],
        )
        np.testing.assert_allclose(h.data, expected, rtol=0, atol=1e-10)

    def test_permuted_graph_permutes_embeddings(self):
        rng = np.random.default_rng(6)
        g = random_graph(rng, 9, 2, 20, num_types=2)
        cfg = ModelConfig(hidden_dim=4, heads=2)
        p = init_params(cfg, g)
        perm = rng.permutation(9)
        feats = np.empty_like(p.embedding.data)
        feats[perm] = p.embedding.data
        with T.no_grad():
            h, _ = forward(g, p)
            hp, _ = forward(g.permuted(perm), p, features=feats)
        np.testing.assert_allclose(hp.data[perm], h.data, rtol=0, atol=1e-12)

    def test_enabling_both_stages_equals_full(self):
        g, _, p = fixture_model("full")
        node_only = ModelConfig(num_layers=2, hidden_dim=4, heads=2, variant="node_only", num_classes=2)
        rel_only = ModelConfig(num_layers=2, hidden_dim=4, heads=2, variant="relation_only", num_classes=2)
        full_lc = p.layers[0].config
        merged = type(full_lc)(4, 4, 2, node_only.layer_configs()[0].node_att_mode,
                               rel_only.layer_configs()[0].rel_att_mode)
        with T.no_grad():
            h0 = project_features(p.embedding, g.entity_type_of, p.type_proj)
            a, _ = layer_forward(g, h0, p.layers[0])
            b, _ = layer_forward(g, h0, p.layers[0], config=merged)
        assert a.data.tobytes() == b.data.tobytes()

    def test_uni_level_variants_disable_one_stage(self):
        g, _, p_node = fixture_model("node_only")
        _, _, p_rel = fixture_model("relation_only")
        with T.no_grad():
            _, rec_node = forward(g, p_node)
            _, rec_rel = forward(g, p_rel)
        assert all(ps is None for ps in rec_node[0].psi)
        assert all(ps is not None for ps in rec_rel[0].psi)
        assert not p_node.layers[0].W1 and p_node.layers[0].a
        assert p_rel.layers[0].W1 and not p_rel.layers[0].a

    def test_feature_shape_checked(self):
        g, _, p = fixture_model()
        with pytest.raises(T.ShapeError):
            forward(g, p, features=np.zeros((6, 3)))


class TestClassify:
    def test_zero_head_uniform(self):
        emb = Tensor(np.random.default_rng(0).normal(size=(5, 4)))
        probs = classify(emb, Tensor(np.zeros((3, 4)))).data
        np.testing.assert_allclose(probs, np.full((5, 3), 1 / 3), rtol=0, atol=1e-15)

    def test_one_hot_head_recovers_classes(self):
        labels = np.array([2, 0, 1, 1, 0, 2])
        emb = np.eye(3)[labels] * 4.0 + np.random.default_rng(1).normal(scale=0.1, size=(6, 3))
        probs = classify(Tensor(emb), Tensor(np.eye(3))).data
        np.testing.assert_array_equal(np.argmax(probs, axis=1), labels)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        probs = classify(Tensor(rng.normal(scale=20, size=(50, 6))), Tensor(rng.normal(size=(4, 6)))).data
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, rtol=0, atol=1e-12)

    def test_argmax_shift_invariant(self):
        rng = np.random.default_rng(3)
        logits = rng.normal(size=(20, 5))
        shifted = logits + np.full(5, 7.5)
        a = np.argmax(T.softmax_rows(Tensor(logits)).data, axis=1)
        b = np.argmax(T.softmax_rows(Tensor(shifted)).data, axis=1)
        np.testing.assert_array_equal(a, b)


class TestDecoders:
    def test_distmult_all_ones(self):
        d = 6
        assert score_triple(np.ones((2, d)), np.ones((1, d)), "distmult", 0, 0, 1) == d

    def test_transe_exact_translation(self):
        rng = np.random.default_rng(0)
        e = rng.normal(size=(2, 4))
        w = rng.normal(size=(1, 4))
        e[1] = e[0] + w[0]
        assert score_triple(e, w, "transe", 0, 0, 1) == 0.0

    def test_complex_scalar_oracle(self):
        rng = np.random.default_rng(1)
        d = 3
        e = rng.normal(size=(3, 2 * d))
        w = rng.normal(size=(2, 2 * d))
        h, r, t = 2, 1, 0
        total = 0j
        for c in range(d):
            hc = complex(e[h][c], e[h][d + c])
            wc = complex(w[r][c], w[r][d + c])
            tc = complex(e[t][c], e[t][d + c])
            total += hc * wc * tc.conjugate()
        assert score_triple(e, w, "complex", h, r, t) == pytest.approx(total.real, abs=1e-14)

    @pytest.mark.parametrize("kind", DECODERS)
    def test_candidates_agree_with_scores(self, kind):
        rng = np.random.default_rng(2)
        e, w = rng.normal(size=(7, 4)), rng.normal(size=(2, 4))
        h, r, t = 3, 1, 5
        tails = score_candidates(e, w, kind, h, r, t, "tail")
        heads = score_candidates(e, w, kind, h, r, t, "head")
        with T.no_grad():
            ref_t = score_triples(Tensor(e), Tensor(w), kind, [h] * 7, [r] * 7, range(7)).data
            ref_h = score_triples(Tensor(e), Tensor(w), kind, range(7), [r] * 7, [t] * 7).data
        np.testing.assert_allclose(tails, ref_t, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(heads, ref_h, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("kind", DECODERS)
    def test_finite_and_transe_nonpositive(self, kind):
        rng = np.random.default_rng(3)
        e, w = rng.normal(scale=5, size=(10, 4)), rng.normal(size=(3, 4))
        with T.no_grad():
            s = score_triples(Tensor(e), Tensor(w), kind, rng.integers(10, size=50), rng.integers(3, size=50),
                              rng.integers(10, size=50)).data
        assert np.all(np.isfinite(s))
        if kind == "transe":
            assert np.all(s <= 0)

    def test_unknown_relation(self):
        with pytest.raises(KeyError):
            score_triple(np.ones((2, 2)), np.ones((1, 2)), "distmult", 0, 3, 1)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        g, _, p = fixture_model("m_node_a_rel", seed=9)
        path = tmp_path / "m.bin"
        save_checkpoint(path, p, extra={"note": "x"})
        assert path.read_bytes()[:8] == MAGIC
        q, header = load_checkpoint(path, g)
        assert header["extra"] == {"note": "x"}
        assert q.config == p.config
        for name, t in p.named_tensors().items():
            assert q.named_tensors()[name].data.tobytes() == t.data.tobytes()
        with T.no_grad():
            assert forward(g, p)[0].data.tobytes() == forward(g, q)[0].data.tobytes()

    def test_header_layout(self, tmp_path):
        g, _, p = fixture_model()
        path = tmp_path / "m.bin"
        save_checkpoint(path, p)
        header, arrays = read_checkpoint(path)
        raw = path.read_bytes()
        n = int.from_bytes(raw[8:16], "little")
        payload = len(raw) - 16 - n
        assert payload == sum(e["nbytes"] for e in header["arrays"])
        assert header["graph"] == {"node_count": 6, "num_relations": 3, "num_entity_types": 2}
        assert list(arrays) == list(p.named_tensors())

    def test_same_params_same_bytes(self, tmp_path):
        g, _, p = fixture_model()
        _, _, q = fixture_model()
        save_checkpoint(tmp_path / "a", p)
        save_checkpoint(tmp_path / "b", q)
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_rejects_foreign_file(self, tmp_path):
        (tmp_path / "x").write_bytes(b"not a checkpoint")
        with pytest.raises(ValueError):
            read_checkpoint(tmp_path / "x")
