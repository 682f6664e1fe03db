import numpy as np
import pytest

from src.errors import EngineError, ShapeError
from src.nn import (
    LayerSpec,
    ModelSpec,
    NoiseConfig,
    WeightSet,
    canonical_convnet_spec,
    combine_weights,
    forward,
    init_weights,
    linear_spec,
    mlp_spec,
    parameter_count,
)
from src.tensor import RandomSource, Tape, Tensor, backward
from src.tensor import ops


class TestModelSpec:
    def test_canonical_parameter_count(self):
        spec = canonical_convnet_spec()
        assert parameter_count(spec) == 3121812

    def test_canonical_layer_order(self):
        spec = canonical_convnet_spec()
        kinds = [layer.kind for layer in spec.layers]
        assert kinds[0] == "gaussian-input-noise"
        assert kinds.count("conv") == 9
        assert kinds.count("maxpool") == 2
        assert kinds.count("dropout") == 2
        assert kinds[-2:] == ["avgpool", "softmax-head"]
        assert spec.layer_shapes()[-2] == (1, 1, 128)
        assert spec.augment.translate_max == 2 and spec.augment.flip

    def test_small_input_drops_pooling_stages(self):
        spec = canonical_convnet_spec((16, 16, 1), flip_allowed=False)
        names = [layer.name for layer in spec.layers]
        assert "pool1" in names and "pool2" not in names
        assert spec.layer_shapes()[-2] == (1, 1, 128)
        assert not spec.augment.flip

        tiny = canonical_convnet_spec((8, 8, 1), translate_max=1)
        assert not any(layer.kind == "maxpool" for layer in tiny.layers)

    def test_too_small_input(self):
        with pytest.raises(ShapeError):
            canonical_convnet_spec((6, 6, 1))

    def test_width_scale(self):
        spec = canonical_convnet_spec((8, 8, 1), width_scale=0.5, translate_max=1)
        assert spec.parameter_shapes()["conv1_1.v"] == (3, 3, 1, 64)

    def test_head_must_be_last(self):
        dense = LayerSpec(kind="dense", name="d", units=3)
        head = LayerSpec(kind="softmax-head", name="head", units=2, activation=False)
        with pytest.raises(ShapeError):
            ModelSpec(input_shape=(2,), layers=(head, dense))

    def test_duplicate_names(self):
        dense = LayerSpec(kind="dense", name="d", units=3)
        head = LayerSpec(kind="softmax-head", name="d", units=2, activation=False)
        with pytest.raises(ShapeError):
            ModelSpec(input_shape=(2,), layers=(dense, head))

    def test_bad_layer(self):
        with pytest.raises(ShapeError):
            LayerSpec(kind="dropout", name="drop", p=1.0)
        with pytest.raises(ShapeError):
            LayerSpec(kind="conv", name="c", filters=0)

    def test_dict_round_trip_keeps_fingerprint(self):
        spec = canonical_convnet_spec((16, 16, 3), head_count=2)
        again = ModelSpec.from_dict(spec.to_dict())
        assert again == spec
        assert again.fingerprint() == spec.fingerprint()
        assert mlp_spec(2).fingerprint() != mlp_spec(3).fingerprint()

    def test_dual_head_parameters(self):
        spec = mlp_spec(2, hidden=(4,), head_count=2)
        shapes = spec.parameter_shapes()
        assert "head0.v" in shapes and "head1.v" in shapes
        assert shapes["head0.v"] == shapes["head1.v"] == (4, 2)
        assert "head1.running_mean" in spec.buffer_shapes()

    def test_linear_spec_is_plain(self):
        spec = linear_spec(1, 2)
        assert spec.parameter_shapes() == {"head0.w": (1, 2)}
        assert spec.buffer_shapes() == {}


class TestForward:
    def setup_method(self):
        self.spec = mlp_spec(3, hidden=(16, 8), n_classes=4, input_noise=0.3, dropout=0.5)
        self.src = RandomSource(11)
        self.calibration = np.random.default_rng(0).normal(size=(200, 3))
        self.weights = init_weights(self.spec, self.src, calibration=self.calibration)

    def test_probabilities_sum_to_one(self):
        result = forward(self.spec, self.weights, self.calibration[:10], src=self.src.child("step"))
        assert result.probabilities.shape == (10, 4)
        assert np.allclose(result.probabilities.data.sum(axis=1), 1.0)

    def test_init_gives_unit_variance_preactivations(self):
        result = forward(self.spec, self.weights, self.calibration, NoiseConfig.clean_training(), update_stats=False)
        for name in ("dense1", "dense2", "head0"):
            z = result.preactivations[name]
            assert np.allclose(z.mean(axis=0), 0.0, atol=1e-8)
            assert np.allclose(z.std(axis=0), 1.0, atol=1e-3)

    def test_eval_mode_matches_training_mode_on_calibration_batch(self):
        train = forward(self.spec, self.weights, self.calibration, NoiseConfig.clean_training(), update_stats=False)
        evaluation = forward(self.spec, self.weights, self.calibration, NoiseConfig.evaluation_mode())
        assert np.allclose(train.logits[0].data, evaluation.logits[0].data, atol=1e-8)

    def test_evaluation_is_deterministic(self):
        a = forward(self.spec, self.weights, self.calibration, NoiseConfig.evaluation_mode())
        b = forward(self.spec, self.weights, self.calibration, NoiseConfig.evaluation_mode())
        assert np.array_equal(a.probabilities.data, b.probabilities.data)

    def test_noise_depends_on_source(self):
        x = self.calibration[:5]
        a = forward(self.spec, self.weights.copy(), x, src=RandomSource(1))
        b = forward(self.spec, self.weights.copy(), x, src=RandomSource(1))
        c = forward(self.spec, self.weights.copy(), x, src=RandomSource(2))
        assert np.array_equal(a.logits[0].data, b.logits[0].data)
        assert not np.array_equal(a.logits[0].data, c.logits[0].data)

    def test_training_noise_needs_source(self):
        with pytest.raises(EngineError):
            forward(self.spec, self.weights, self.calibration[:4])

    def test_training_updates_running_means_only_when_asked(self):
        weights = self.weights.copy()
        before = weights.buffers["dense1.running_mean"].copy()
        forward(self.spec, weights, self.calibration[:8] + 3.0, NoiseConfig.clean_training(), update_stats=False)
        assert np.array_equal(weights.buffers["dense1.running_mean"], before)
        forward(self.spec, weights, self.calibration[:8] + 3.0, NoiseConfig.clean_training())
        assert not np.array_equal(weights.buffers["dense1.running_mean"], before)

    def test_weight_norm_scale_invariance(self):
        scaled = self.weights.copy()
        for name in scaled.params:
            if name.endswith(".v"):
                scaled.params[name] = scaled.params[name] * 3.0
        a = forward(self.spec, self.weights, self.calibration, NoiseConfig.evaluation_mode())
        b = forward(self.spec, scaled, self.calibration, NoiseConfig.evaluation_mode())
        assert np.allclose(a.logits[0].data, b.logits[0].data, atol=1e-10)

    def test_mean_only_batch_norm_centres_training_batches(self):
        shifted = np.random.default_rng(5).normal(loc=2.0, scale=3.0, size=(32, 3))
        result = forward(self.spec, self.weights.copy(), shifted, NoiseConfig.clean_training())
        for name in ("dense1", "dense2", "head0"):
            bias = self.weights.params.get(f"{name}.b", 0.0)
            assert np.all(np.abs(result.preactivations[name].mean(axis=0) - bias) <= 1e-6), name

    def test_second_head_parameters_get_no_gradient_from_first_head(self):
        spec = mlp_spec(3, hidden=(8,), head_count=2, input_noise=0.0, dropout=0.0)
        weights = init_weights(spec, self.src, calibration=self.calibration)
        tape = Tape()
        leaves = tape.watch(weights.params)
        result = forward(spec, weights, self.calibration[:16], NoiseConfig.clean_training(), tape=tape,
                         params=leaves, update_stats=False)
        with tape:
            loss = ops.reduce_sum(ops.log_softmax(result.logits[0]) * Tensor(np.eye(2)[np.arange(16) % 2]))
        grads = backward(tape, loss)
        assert np.any(grads["dense1.v"].data != 0.0)
        for name in weights.params:
            if name.startswith("head1."):
                assert name not in grads or not np.any(grads[name].data), name

    def test_wrong_input_shape(self):
        with pytest.raises(ShapeError):
            forward(self.spec, self.weights, np.ones((4, 5)), NoiseConfig.evaluation_mode())

    def test_dual_head_logits(self):
        spec = mlp_spec(3, hidden=(8,), head_count=2, input_noise=0.0, dropout=0.0)
        weights = init_weights(spec, self.src)
        result = forward(spec, weights, self.calibration[:6], NoiseConfig.evaluation_mode())
        assert len(result.logits) == 2
        assert len(result.head_probabilities) == 2
        assert not np.allclose(result.logits[0].data, result.logits[1].data)

    def test_convnet_forward_shapes(self):
        spec = canonical_convnet_spec((8, 8, 1), width_scale=1 / 16, n_classes=10, translate_max=1)
        weights = init_weights(spec, RandomSource(0), calibration_size=16, dtype=np.float32)
        images = np.random.default_rng(1).normal(size=(4, 8, 8, 1))
        result = forward(spec, weights, images, src=RandomSource(0))
        assert result.probabilities.shape == (4, 10)
        assert result.probabilities.dtype == np.float32

    def test_init_is_seeded(self):
        a = init_weights(self.spec, RandomSource(4))
        b = init_weights(self.spec, RandomSource(4))
        assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


class TestWeightSet:
    def test_zeros_match_spec(self):
        spec = mlp_spec(2)
        WeightSet.zeros(spec).check_against(spec)

    def test_combine_requires_same_spec(self):
        a = WeightSet.zeros(mlp_spec(2))
        b = WeightSet.zeros(mlp_spec(3))
        with pytest.raises(ShapeError):
            combine_weights(a, b, lambda x, y: x + y)

    def test_combine_never_aliases_inputs(self):
        spec = mlp_spec(2, hidden=(3,))
        a = init_weights(spec, RandomSource(0))
        b = init_weights(spec, RandomSource(1))
        out = combine_weights(a, b, lambda x, y: y)
        for name in b.params:
            assert np.array_equal(out.params[name], b.params[name])
            assert out.params[name] is not b.params[name]

    def test_check_against_reports_mismatch(self):
        spec = mlp_spec(2, hidden=(3,))
        weights = WeightSet.zeros(spec)
        del weights.params["dense1.v"]
        with pytest.raises(ShapeError, match="missing"):
            weights.check_against(spec)

    def test_combine_matches_scalar_oracle(self):
        spec = mlp_spec(2, hidden=(3,))
        a = init_weights(spec, RandomSource(0))
        b = init_weights(spec, RandomSource(1))
        b.buffers["dense1.running_mean"] = np.random.default_rng(2).normal(size=3)
        out = combine_weights(a, b, lambda x, y: 0.999 * x + 0.001 * y)
        for group in ("params", "buffers"):
            for name, value in getattr(out, group).items():
                left, right = getattr(a, group)[name].ravel(), getattr(b, group)[name].ravel()
                expected = [0.999 * float(left[i]) + 0.001 * float(right[i]) for i in range(left.size)]
                assert np.allclose(value.ravel(), expected, rtol=0, atol=1e-12), name
