"""Forward/backward passes, parameter init, and checkpoint round trips."""

import numpy as np
import pytest

from cake.data import FeatureRecord, SynthConfig, bundle_arrays, synth_generate
from cake.model import (
    Batch,
    ModelConfig,
    ModelParams,
    av_regress,
    av_regress_batch,
    backprop,
    classify,
    embed,
    embed_many,
    flatten_trainable,
    init_params,
    load_checkpoint,
    predict,
    predict_from_embedding,
    save_checkpoint,
    set_trainable,
    trainable_gradients,
    trainable_tensors,
    zero_gradients,
)
from cake.numerics import finite_diff_grad
from cake.objective import LossWeights


def unit_weights(n_domains: int, n_classes: int = 7) -> LossWeights:
    return LossWeights(
        w_class=np.ones((n_domains, n_classes)), w_dataset=np.ones(n_domains)
    )


def small_cfg(**kw) -> ModelConfig:
    base = dict(variant="cake", k=2, dim=5, n_domains=2, dropout_rate=0.0, seed=3)
    base.update(kw)
    return ModelConfig(**base)


class TestModelConfig:
    def test_variant_k_invariants(self):
        with pytest.raises(ValueError):
            ModelConfig(variant="av", k=2, dim=4, n_domains=1)
        with pytest.raises(ValueError):
            ModelConfig(variant="cake", k=0, dim=4, n_domains=1)
        with pytest.raises(ValueError):
            ModelConfig(variant="avk", k=0, dim=4, n_domains=1)
        with pytest.raises(ValueError):
            ModelConfig(variant="resnet", k=2, dim=4, n_domains=1)

    def test_dropout_range(self):
        with pytest.raises(ValueError):
            small_cfg(dropout_rate=1.0)
        with pytest.raises(ValueError):
            small_cfg(dropout_rate=-0.1)
        small_cfg(dropout_rate=0.0)  # boundary ok

    def test_embed_dim_per_variant(self):
        assert small_cfg(variant="cake", k=3).embed_dim == 3
        assert small_cfg(variant="cake_norm", k=3).embed_dim == 3
        assert small_cfg(variant="av", k=0).embed_dim == 2
        assert small_cfg(variant="avk", k=3).embed_dim == 5

    def test_av_source_validated(self):
        with pytest.raises(ValueError):
            small_cfg(av_source="oracle")


class TestInitParams:
    def test_same_seed_identical(self):
        cfg = small_cfg(variant="avk", k=3, av_source="regressed")
        a, b = init_params(cfg), init_params(cfg)
        for ta, tb in zip(a.tensors(), b.tensors()):
            assert np.array_equal(ta, tb)

    def test_shapes(self):
        cfg = ModelConfig(variant="cake", k=3, dim=512, n_domains=3, seed=1)
        p = init_params(cfg)
        assert p.embed_w.shape == (3, 512)
        assert p.embed_b.shape == (3,)
        assert p.av_w is None and p.av_b is None
        assert len(p.clf_w) == 3
        for w, b in zip(p.clf_w, p.clf_b):
            assert w.shape == (7, 3) and b.shape == (7,)
            np.testing.assert_array_equal(b, np.zeros(7))
        np.testing.assert_array_equal(p.embed_b, np.zeros(3))

    def test_different_seeds_differ(self):
        a = init_params(small_cfg(seed=1))
        b = init_params(small_cfg(seed=2))
        assert not np.array_equal(a.embed_w, b.embed_w)

    def test_uniform_bounds_and_stddev(self):
        # fan_in 512: bound 1/sqrt(512), stddev (2/sqrt(512))/sqrt(12)
        cfg = ModelConfig(variant="cake", k=200, dim=512, n_domains=1, seed=11)
        w = init_params(cfg).embed_w
        bound = 1.0 / np.sqrt(512.0)
        assert np.all(np.abs(w) <= bound)
        expect = 0.0255155182
        assert abs(w.std() - expect) < 0.05 * expect

    def test_av_head_only_when_regressed(self):
        assert init_params(small_cfg(variant="avk", k=2)).av_w is None
        p = init_params(small_cfg(variant="avk", k=2, av_source="regressed"))
        assert p.av_w.shape == (2, 5) and p.av_b.shape == (2,)


class TestEmbed:
    def test_av_passthrough(self):
        cfg = small_cfg(variant="av", k=0)
        p = init_params(cfg)
        e = embed(p, cfg, np.zeros(5), av=(0.3, -0.4))
        np.testing.assert_array_equal(e, [0.3, -0.4])

    def test_cake_naive_recompute(self):
        cfg = ModelConfig(variant="cake", k=3, dim=24, n_domains=1, seed=9)
        p = init_params(cfg)
        rng = np.random.default_rng(0)
        x = rng.normal(size=24)
        e = embed(p, cfg, x)
        naive = np.array([p.embed_w[i] @ x + p.embed_b[i] for i in range(3)])
        np.testing.assert_allclose(e, naive, atol=1e-12)

    def test_avk_concat_layout(self):
        cfg = small_cfg(variant="avk", k=2)
        p = init_params(cfg)
        x = np.arange(5.0)
        e = embed(p, cfg, x, av=(0.1, -0.9))
        np.testing.assert_allclose(e[:2], p.embed_w @ x + p.embed_b, atol=1e-12)
        np.testing.assert_array_equal(e[2:], [0.1, -0.9])

    def test_norm_unit_bias_unchanged(self):
        cfg = small_cfg(variant="cake_norm", k=2)
        p = init_params(cfg)
        p.embed_w[...] = 0.0
        p.embed_b[...] = (0.6, 0.8)  # already unit norm
        e = embed(p, cfg, np.ones(5))
        np.testing.assert_allclose(e, [0.6, 0.8], atol=1e-15)

    def test_norm_outputs_unit(self):
        cfg = ModelConfig(variant="cake_norm", k=3, dim=8, n_domains=1, seed=4)
        p = init_params(cfg)
        x = np.random.default_rng(1).normal(size=(10000, 8)) * 5
        e = embed_many(p, cfg, x)
        np.testing.assert_allclose(np.linalg.norm(e, axis=1), 1.0, atol=1e-9)

    def test_norm_degenerate_error(self):
        cfg = small_cfg(variant="cake_norm", k=2)
        p = init_params(cfg)
        p.embed_w[...] = 0.0
        p.embed_b[...] = 0.0
        with pytest.raises(ValueError, match="degenerate"):
            embed(p, cfg, np.ones(5))

    def test_dropout_hand_values(self):
        cfg = ModelConfig(variant="cake", k=1, dim=4, n_domains=1,
                          dropout_rate=0.5, seed=0)
        p = init_params(cfg)
        p.embed_w[...] = 1.0
        p.embed_b[...] = 0.0
        x = np.array([1.0, 2.0, 3.0, 4.0])
        mask = np.array([1.0, 0.0, 1.0, 0.0])
        # kept coords scaled by 1/(1-0.5): (2+6) = 8
        e = embed(p, cfg, x, dropout_mask=mask)
        np.testing.assert_allclose(e, [8.0], atol=1e-12)

    def test_dropout_rejected_for_av_variant(self):
        cfg = small_cfg(variant="av", k=0, dropout_rate=0.5)
        p = init_params(cfg)
        with pytest.raises(ValueError):
            embed(p, cfg, np.ones(5), av=(0.0, 0.0), dropout_mask=np.ones(5))

    def test_missing_av_error(self):
        cfg = small_cfg(variant="avk", k=2)
        p = init_params(cfg)
        with pytest.raises(ValueError, match="arousal-valence"):
            embed(p, cfg, np.ones(5))

    def test_regressed_av_fills_in(self):
        cfg = small_cfg(variant="avk", k=2, av_source="regressed")
        p = init_params(cfg)
        p.av_w[...] = 0.0
        p.av_b[...] = (0.25, -0.5)
        e = embed(p, cfg, np.ones(5))
        np.testing.assert_array_equal(e[2:], [0.25, -0.5])

    def test_dim_mismatch(self):
        cfg = small_cfg()
        p = init_params(cfg)
        with pytest.raises(ValueError):
            embed(p, cfg, np.ones(7))


class TestClassify:
    def test_zero_weights_bias_passthrough(self):
        cfg = small_cfg()
        p = init_params(cfg)
        p.clf_w[0][...] = 0.0
        p.clf_b[0][...] = np.arange(1.0, 8.0)
        logits = classify(p, np.ones(2), 0)
        np.testing.assert_array_equal(logits, np.arange(1.0, 8.0))

    def test_head_independence(self):
        cfg = small_cfg()
        p = init_params(cfg)
        e = np.array([0.4, -1.2])
        assert not np.array_equal(classify(p, e, 0), classify(p, e, 1))
        p.clf_w[1][...] = p.clf_w[0]
        p.clf_b[1][...] = p.clf_b[0]
        np.testing.assert_array_equal(classify(p, e, 0), classify(p, e, 1))

    def test_naive_recompute(self):
        cfg = small_cfg()
        p = init_params(cfg)
        e = np.random.default_rng(2).normal(size=2)
        naive = np.array([p.clf_w[1][c] @ e + p.clf_b[1][c] for c in range(7)])
        np.testing.assert_allclose(classify(p, e, 1), naive, atol=1e-12)

    def test_unknown_domain(self):
        cfg = small_cfg()
        p = init_params(cfg)
        with pytest.raises(ValueError, match="domain"):
            classify(p, np.ones(2), 2)
        with pytest.raises(ValueError, match="domain"):
            classify(p, np.ones(2), -1)


class TestPredict:
    def zero_logit_params(self):
        cfg = small_cfg()
        p = init_params(cfg)
        p.clf_w[0][...] = 0.0
        p.clf_b[0][...] = 0.0
        return cfg, p

    def test_tie_breaks_to_neutral(self):
        _, p = self.zero_logit_params()
        assert predict_from_embedding(p, np.ones(2), 0) == 0

    def test_unique_max_is_fear(self):
        _, p = self.zero_logit_params()
        p.clf_b[0][4] = 1.0
        assert predict_from_embedding(p, np.zeros(2), 0) == 4

    def test_increasing_transform_invariance(self):
        # scaling and shifting logits uniformly never moves the argmax
        cfg = small_cfg()
        p = init_params(cfg)
        rng = np.random.default_rng(5)
        for _ in range(20):
            e = rng.normal(size=2)
            got = predict_from_embedding(p, e, 0)
            logits = classify(p, e, 0)
            assert got == int(np.argmax(logits))
            assert got == int(np.argmax(3.0 * logits + 10.0))
            assert got == int(np.argmax(np.tanh(logits)))

    def test_matches_recomputed_logits_on_synth(self):
        synth = SynthConfig(n_domains=2, seed=5, dim=16,
                            train_counts=[60, 40], test_counts=[20, 20])
        train, _ = synth_generate(synth)
        cfg = ModelConfig(variant="cake", k=3, dim=16, n_domains=2, seed=8)
        p = init_params(cfg)
        for rec in train.records[:100]:
            e = p.embed_w @ rec.features + p.embed_b
            logits = p.clf_w[rec.domain_id] @ e + p.clf_b[rec.domain_id]
            assert predict(p, cfg, rec, rec.domain_id) == int(np.argmax(logits))

    def test_saturated_logits_stable(self):
        _, p = self.zero_logit_params()
        p.clf_b[0][...] = np.arange(7) * 500.0 + 1e4
        assert predict_from_embedding(p, np.zeros(2), 0) == 6


class TestAvRegress:
    def regressed_params(self):
        cfg = small_cfg(variant="avk", k=2, av_source="regressed")
        return cfg, init_params(cfg)

    def test_zero_head(self):
        _, p = self.regressed_params()
        p.av_w[...] = 0.0
        assert av_regress(p, np.ones(5)) == (0.0, 0.0)

    def test_clip(self):
        _, p = self.regressed_params()
        p.av_w[...] = 0.0
        p.av_b[...] = (1.7, -0.2)
        assert av_regress(p, np.ones(5)) == (1.0, -0.2)

    def test_absent_head(self):
        cfg = small_cfg()
        p = init_params(cfg)
        with pytest.raises(ValueError):
            av_regress(p, np.ones(5))

    def test_batch_matches_single(self):
        _, p = self.regressed_params()
        x = np.random.default_rng(3).normal(size=(6, 5))
        got = av_regress_batch(p, x)
        for i in range(6):
            np.testing.assert_allclose(got[i], av_regress(p, x[i]), atol=1e-15)


def random_batch(cfg, n, seed, with_av=False):
    rng = np.random.default_rng(seed)
    return Batch(
        x=rng.normal(size=(n, cfg.dim)),
        y=rng.integers(0, cfg.n_classes, size=n),
        dom=rng.integers(0, cfg.n_domains, size=n),
        av=np.clip(rng.normal(size=(n, 2)), -1, 1) if with_av else None,
    )


class TestBackprop:
    def test_saturated_correct_sample(self):
        cfg = ModelConfig(variant="cake", k=2, dim=5, n_domains=1, seed=1)
        p = init_params(cfg)
        p.embed_w[...] = 0.0
        p.embed_b[...] = (1.0, 0.0)
        p.clf_w[0][...] = 0.0
        p.clf_w[0][2, 0] = 100.0  # logit for class 2 is 100, others 0
        batch = Batch(x=np.ones((1, 5)), y=np.array([2]), dom=np.array([0]))
        loss, grads = backprop(p, cfg, batch, unit_weights(1))
        assert loss < 1e-12
        for g in grads.tensors():
            assert np.max(np.abs(g)) < 1e-12

    def test_uniform_logits_ln7(self):
        cfg = ModelConfig(variant="cake", k=2, dim=5, n_domains=1, seed=1)
        p = init_params(cfg)
        for w, b in zip(p.clf_w, p.clf_b):
            w[...] = 0.0
            b[...] = 0.0
        batch = Batch(x=np.ones((1, 5)), y=np.array([3]), dom=np.array([0]))
        loss, _ = backprop(p, cfg, batch, unit_weights(1))
        np.testing.assert_allclose(loss, np.log(7.0), atol=1e-12)

    def test_loss_equals_naive_assembly(self):
        from cake.objective import multidomain_loss

        cfg = small_cfg()
        p = init_params(cfg)
        batch = random_batch(cfg, 12, seed=7)
        rng = np.random.default_rng(8)
        weights = LossWeights(
            w_class=rng.uniform(0.5, 2.0, size=(2, 7)),
            w_dataset=rng.uniform(0.2, 1.0, size=2),
        )
        loss, _ = backprop(p, cfg, batch, weights)
        e = embed_many(p, cfg, batch.x)
        logits = np.array(
            [p.clf_w[j] @ ei + p.clf_b[j] for ei, j in zip(e, batch.dom)]
        )
        expect, _ = multidomain_loss(logits, batch.y, batch.dom, weights)
        np.testing.assert_allclose(loss, expect, atol=1e-12)

    def test_cross_head_isolation(self):
        # absent domains get exactly-zero gradients, all variants, 50 trials
        variants = [("cake", 2), ("cake_norm", 3), ("avk", 2), ("av", 0)]
        for trial in range(50):
            variant, k = variants[trial % len(variants)]
            cfg = ModelConfig(variant=variant, k=k, dim=6, n_domains=3,
                              seed=trial)
            p = init_params(cfg)
            batch = random_batch(cfg, 8, seed=100 + trial, with_av=cfg.uses_av)
            absent = trial % 3
            keep = batch.dom != absent
            if not np.any(keep):
                continue
            batch = Batch(x=batch.x[keep], y=batch.y[keep], dom=batch.dom[keep],
                          av=None if batch.av is None else batch.av[keep])
            _, grads = backprop(p, cfg, batch, unit_weights(3))
            assert np.all(grads.clf_w[absent] == 0.0)
            assert np.all(grads.clf_b[absent] == 0.0)

    def test_grads_match_finite_difference(self):
        cfg = ModelConfig(variant="cake_norm", k=2, dim=4, n_domains=2, seed=6)
        p = init_params(cfg)
        batch = random_batch(cfg, 5, seed=11)
        weights = unit_weights(2)
        _, grads = backprop(p, cfg, batch, weights)
        flat_g = np.concatenate(
            [g.ravel() for g in trainable_gradients(grads, cfg)]
        )

        def f(vec):
            loss, _ = backprop(set_trainable(p, cfg, vec), cfg, batch, weights)
            return loss

        numeric = finite_diff_grad(f, flatten_trainable(p, cfg))
        np.testing.assert_allclose(flat_g, numeric, rtol=1e-5, atol=1e-9)

    def test_av_head_frozen(self):
        cfg = small_cfg(variant="avk", k=2, av_source="regressed")
        p = init_params(cfg)
        batch = random_batch(cfg, 6, seed=13)
        _, grads = backprop(p, cfg, batch, unit_weights(2))
        assert np.all(grads.av_w == 0.0)
        assert np.all(grads.av_b == 0.0)

    def test_empty_batch(self):
        cfg = small_cfg()
        p = init_params(cfg)
        empty = Batch(x=np.zeros((0, 5)), y=np.zeros(0, dtype=int),
                      dom=np.zeros(0, dtype=int))
        with pytest.raises(ValueError):
            backprop(p, cfg, empty, unit_weights(2))

    def test_unknown_domain_in_batch(self):
        cfg = small_cfg()
        p = init_params(cfg)
        batch = Batch(x=np.zeros((1, 5)), y=np.array([0]), dom=np.array([5]))
        with pytest.raises(ValueError):
            backprop(p, cfg, batch, unit_weights(2))


class TestTrainableVector:
    def test_round_trip(self):
        cfg = small_cfg(variant="avk", k=2, av_source="regressed")
        p = init_params(cfg)
        vec = flatten_trainable(p, cfg)
        expect = 2 * 5 + 2 + 2 * (7 * 4 + 7)  # embed + two heads, av excluded
        assert vec.shape == (expect,)
        p2 = set_trainable(p, cfg, vec + 1.0)
        np.testing.assert_allclose(flatten_trainable(p2, cfg), vec + 1.0)
        # av head untouched, original untouched
        np.testing.assert_array_equal(p2.av_w, p.av_w)
        np.testing.assert_allclose(flatten_trainable(p, cfg), vec)

    def test_wrong_length(self):
        cfg = small_cfg()
        p = init_params(cfg)
        with pytest.raises(ValueError):
            set_trainable(p, cfg, np.zeros(3))

    def test_tensor_lists_align(self):
        cfg = small_cfg(variant="avk", k=2, av_source="regressed")
        p = init_params(cfg)
        g = zero_gradients(p)
        for t, gt in zip(trainable_tensors(p, cfg), trainable_gradients(g, cfg)):
            assert t.shape == gt.shape


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        cfg = ModelConfig(variant="avk", k=3, dim=9, n_domains=2,
                          dropout_rate=0.25, seed=42, av_source="regressed")
        p = init_params(cfg)
        p.embed_w += 0.125  # arbitrary but representable mutations
        p.clf_b[1][...] = np.arange(7) * 0.5
        path = str(tmp_path / "m.ckpt")
        save_checkpoint(path, cfg, p)
        cfg2, p2, adam2 = load_checkpoint(path)
        assert cfg2 == cfg
        assert adam2 is None
        for a, b in zip(p.tensors(), p2.tensors()):
            assert np.array_equal(a, b)

    def test_round_trip_with_adam(self, tmp_path):
        from cake.optim import adam_init, adam_step

        cfg = small_cfg()
        p = init_params(cfg)
        state = adam_init(p.tensors(), lr=0.01, beta1=0.8)
        grads = [np.full_like(t, 0.5) for t in p.tensors()]
        adam_step(state, p.tensors(), grads)
        path = str(tmp_path / "m.ckpt")
        save_checkpoint(path, cfg, p, adam_state=state)
        _, p2, state2 = load_checkpoint(path)
        assert state2.t == 1
        assert state2.lr == 0.01 and state2.beta1 == 0.8
        for a, b in zip(state.m + state.v, state2.m + state2.v):
            assert np.array_equal(a, b)
        for a, b in zip(p.tensors(), p2.tensors()):
            assert np.array_equal(a, b)

    def test_bad_magic(self, tmp_path):
        path = str(tmp_path / "bad.ckpt")
        with open(path, "wb") as fh:
            fh.write(b"NOTCKPT!" + b"\x00" * 64)
        with pytest.raises(ValueError, match="magic"):
            load_checkpoint(path)

    def test_trailing_bytes(self, tmp_path):
        cfg = small_cfg()
        path = str(tmp_path / "m.ckpt")
        save_checkpoint(path, cfg, init_params(cfg))
        with open(path, "ab") as fh:
            fh.write(b"\x00")
        with pytest.raises(ValueError, match="trailing"):
            load_checkpoint(path)

    def test_truncated(self, tmp_path):
        cfg = small_cfg()
        path = str(tmp_path / "m.ckpt")
        save_checkpoint(path, cfg, init_params(cfg))
        data = open(path, "rb").read()
        with open(path, "wb") as fh:
            fh.write(data[: len(data) // 2])
        with pytest.raises(ValueError):
            load_checkpoint(path)


class TestInferencePurity:
    def test_deterministic_and_nonmutating(self):
        cfg = small_cfg(variant="avk", k=2)
        p = init_params(cfg)
        rec = FeatureRecord(id="r0", domain_id=1,
                            features=np.random.default_rng(4).normal(size=5),
                            label=2, av=(0.1, 0.2))
        before = rec.features.copy()
        a = predict(p, cfg, rec, 1)
        b = predict(p, cfg, rec, 1)
        assert a == b
        np.testing.assert_array_equal(rec.features, before)
