"""ResNet-18 builder: shapes, baseline equivalence, attention placement
additivity, determinism, feature hooks, logit-level gradient check."""

import numpy as np
import pytest

from attnbench.attention import AttentionSpec
from attnbench.errors import ContractError, DimensionError
from attnbench.resnet import ResNet18, build_resnet18, load_model
from attnbench.tensor import Tape, Tensor
from attnbench.training import cross_entropy


def tiny(kind="none", seed=0, divisor=16):
    return build_resnet18(AttentionSpec(kind), rng_seed=seed, width_divisor=divisor)


def expected_baseline_manifest(widths):
    """Parameter name -> shape for the reference 18-layer residual network
    with a global-average head, derived from the stage arithmetic."""
    w1, w2, w3, w4 = widths
    names = {"stem.conv.weight": (w1, 3, 7, 7),
             "stem.bn.scale": (w1,), "stem.bn.shift": (w1,)}
    in_ch = w1
    for s, out_ch in enumerate(widths, start=1):
        for b in (1, 2):
            p = f"layer{s}.block{b}."
            stride = 2 if (s > 1 and b == 1) else 1
            names[p + "conv1.weight"] = (out_ch, in_ch, 3, 3)
            names[p + "bn1.scale"] = (out_ch,)
            names[p + "bn1.shift"] = (out_ch,)
            names[p + "conv2.weight"] = (out_ch, out_ch, 3, 3)
            names[p + "bn2.scale"] = (out_ch,)
            names[p + "bn2.shift"] = (out_ch,)
            if stride != 1 or in_ch != out_ch:
                names[p + "shortcut.conv.weight"] = (out_ch, in_ch, 1, 1)
                names[p + "shortcut.bn.scale"] = (out_ch,)
                names[p + "shortcut.bn.shift"] = (out_ch,)
            in_ch = out_ch
    names["head.fc.weight"] = (2, w4)
    names["head.fc.bias"] = (2,)
    return names


class TestBuild:
    @pytest.mark.parametrize("divisor", [1, 4])
    def test_baseline_matches_reference_manifest(self, divisor):
        model = build_resnet18(AttentionSpec("none"), 0, width_divisor=divisor)
        got = {k: v.data.shape for k, v in model.named_params().items()}
        assert got == expected_baseline_manifest(model.widths)

    def test_exactly_eight_blocks_with_one_attention_each(self):
        model = tiny("se")
        blocks = [b for stage in model.stages for b in stage]
        assert len(blocks) == 8
        assert all(b.attn.kind == "se" for b in blocks)

    def test_gc_at_init_equals_baseline_forward(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 32, 32)))
        out_none = tiny("none", seed=3).forward(x)
        out_gc = tiny("gc", seed=3).forward(x)
        assert np.array_equal(out_none.data, out_gc.data)

    @pytest.mark.parametrize("kind", ["se", "cbam", "gc"])
    def test_baseline_names_strict_subset_of_variant(self, kind):
        base = set(tiny("none").named_params())
        variant = set(tiny(kind).named_params())
        assert base < variant
        assert all("attn." in n for n in variant - base)

    @pytest.mark.parametrize("kind", ["se", "cbam", "gc"])
    def test_attention_changes_no_backbone_shapes(self, kind):
        base = {k: v.data.shape for k, v in tiny("none").named_params().items()}
        variant = {k: v.data.shape for k, v in tiny(kind).named_params().items()}
        assert all(variant[k] == shape for k, shape in base.items())

    def test_same_seed_identical_parameters(self):
        a, b = tiny("cbam", seed=5), tiny("cbam", seed=5)
        for (ka, va), (kb, vb) in zip(a.named_params().items(), b.named_params().items()):
            assert ka == kb and np.array_equal(va.data, vb.data)

    def test_stage_shapes_for_224_input(self, rng):
        model = build_resnet18(AttentionSpec("none"), 0, width_divisor=1)
        x = Tensor(rng.standard_normal((1, 3, 224, 224)))
        h = model.stem(x, training=False)
        assert h.shape == (1, 64, 56, 56)
        expected = [(64, 56, 56), (128, 28, 28), (256, 14, 14), (512, 7, 7)]
        for blocks, shape in zip(model.stages, expected):
            for block in blocks:
                h = block.forward(h, training=False)
            assert h.shape == (1,) + shape
        assert model.head(h).shape == (1, 2)


class TestForward:
    def test_min_input_enforced_before_compute(self):
        model = tiny()
        with pytest.raises(DimensionError, match=">= 32"):
            model.forward(Tensor(np.zeros((1, 3, 31, 40))))

    def test_any_size_at_least_32_works(self, rng):
        model = tiny()
        for hw in (32, 33, 48):
            out = model.forward(Tensor(rng.standard_normal((1, 3, hw, hw))))
            assert out.shape == (1, 2)

    def test_identical_images_identical_logits(self, rng):
        model = tiny("se")
        one = rng.standard_normal((1, 3, 32, 32))
        batch = Tensor(np.repeat(one, 3, axis=0))
        out = model.forward(batch, training=False).data
        assert np.array_equal(out[0], out[1]) and np.array_equal(out[1], out[2])

    def test_final_conv_map_is_512x2x2_for_64_input(self, rng):
        model = build_resnet18(AttentionSpec("none"), 0, width_divisor=1)
        feats = model.features(Tensor(rng.standard_normal((1, 3, 64, 64))))
        assert feats.shape == (1, 512, 2, 2)

    def test_eval_forward_is_pure(self, rng):
        model = tiny("se")
        x = Tensor(rng.standard_normal((2, 3, 32, 32)))
        stats_before = [(bn.running_mean.copy(), bn.running_var.copy())
                        for bn in model.all_batchnorms()]
        a = model.forward(x, training=False).data
        b = model.forward(x, training=False).data
        assert np.array_equal(a, b)
        for bn, (m, v) in zip(model.all_batchnorms(), stats_before):
            assert np.array_equal(bn.running_mean, m)
            assert np.array_equal(bn.running_var, v)

    def test_train_mode_updates_running_stats(self, rng):
        model = tiny()
        x = Tensor(rng.standard_normal((4, 3, 32, 32)))
        before = model.stem_bn.running_mean.copy()
        model.forward(x, training=True)
        assert not np.array_equal(model.stem_bn.running_mean, before)


class TestFeatureHook:
    def test_feature_shape_for_224(self, rng):
        model = tiny(divisor=8)
        logits, feats = model.forward_with_features(
            Tensor(rng.standard_normal((1, 3, 224, 224))))
        assert feats.shape == (1, model.widths[-1], 7, 7)

    def test_gradient_shape_equals_feature_shape(self, rng):
        from attnbench import tensor as T
        model = tiny("se")
        x = Tensor(rng.standard_normal((1, 3, 32, 32)))
        with Tape() as tape:
            logits, feats = model.forward_with_features(x)
            loss = T.tsum(T.mul(logits, Tensor(np.array([[0.0, 1.0]]))))
        tape.backward(loss)
        assert feats.grad is not None
        assert feats.grad.shape == feats.data.shape

    def test_two_eval_calls_identical_features(self, rng):
        model = tiny("cbam")
        x = Tensor(rng.standard_normal((1, 3, 32, 32)))
        _, f1 = model.forward_with_features(x)
        _, f2 = model.forward_with_features(x)
        assert np.array_equal(f1.data, f2.data)

    def test_gradients_before_backward_are_a_contract_error(self, rng):
        from attnbench.gradcam import feature_gradient
        model = tiny()
        _, feats = model.forward_with_features(Tensor(rng.standard_normal((1, 3, 32, 32))))
        assert feats.grad is None
        with pytest.raises(ContractError, match="before a backward"):
            feature_gradient(feats)


class TestCheckpointRoundTrip:
    def test_save_load_preserves_outputs(self, rng, tmp_path):
        model = tiny("gc", seed=9)
        # move it off the init point so running stats and params are non-trivial
        x = Tensor(rng.standard_normal((4, 3, 32, 32)))
        with Tape() as tape:
            loss = cross_entropy(model.forward(x, training=True), np.array([0, 1, 0, 1]))
        tape.backward(loss)
        for p in model.parameters():
            p.data = p.data - 0.01 * p.grad
        path = tmp_path / "model.ckpt"
        model.save(path)
        restored = load_model(path)
        assert restored.attention_spec.kind == "gc"
        a = model.forward(x, training=False).data
        b = restored.forward(x, training=False).data
        assert np.array_equal(a, b)


class TestLogitGradientCheck:
    def test_sampled_finite_differences(self):
        rng = np.random.default_rng(42)
        model = build_resnet18(AttentionSpec("se", reduction=4), rng_seed=1,
                               width_divisor=8)  # channels 8/16/32/64
        x_arr = rng.standard_normal((1, 3, 32, 32))

        def logit1():
            return model.forward(Tensor(x_arr), training=False).data[0, 1]

        x = Tensor(x_arr, requires_grad=True)
        with Tape() as tape:
            from attnbench import tensor as T
            logits = model.forward(x, training=False)
            loss = T.tsum(T.mul(logits, Tensor(np.array([[0.0, 1.0]]))))
        model.zero_grads()
        tape.backward(loss)

        named = model.named_params()
        h = 1e-4
        checked = 0
        for name in rng.choice(sorted(named), size=12, replace=False):
            p = named[name]
            flat = p.data.reshape(-1)
            idx = int(rng.integers(flat.size))
            orig = flat[idx]
            flat[idx] = orig + h
            fp = logit1()
            flat[idx] = orig - h
            fm = logit1()
            flat[idx] = orig
            numeric = (fp - fm) / (2 * h)
            analytic = p.grad.reshape(-1)[idx] if p.grad is not None else 0.0
            denom = max(abs(numeric), abs(analytic), 1e-3)
            assert abs(numeric - analytic) / denom < 1e-4, (name, numeric, analytic)
            checked += 1
        assert checked == 12
