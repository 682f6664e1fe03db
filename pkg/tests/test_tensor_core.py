import numpy as np
import pytest

from src.errors import NonFiniteError, PrimitiveError, ShapeError, TapeError
from src.nn.forward import NoiseConfig, forward, init_weights
from src.nn.spec import canonical_convnet_spec
from src.objectives.costs import classification_cost
from src.tensor import (
    Bernoulli,
    Gaussian,
    RandomSource,
    Tape,
    Tensor,
    UniformInt,
    apply_primitive,
    backward,
    draw_noise,
    numerical_gradient,
    relative_error,
    stop_gradient,
)
from src.tensor import ops
from src.tensor.primitives import conv_output_size


def gradients_agree(analytic, numeric, rtol=1e-4, atol=1e-8):
    rel = relative_error(analytic, numeric)
    return bool(np.all((rel < rtol) | (np.abs(analytic - numeric) < atol)))


def check_primitive(op, inputs, attrs=None, seed=0):
    """Compare every input gradient of ``sum(op(inputs) * r)`` with central differences"""
    attrs = attrs or {}
    out = apply_primitive(op, [Tensor(x) for x in inputs], attrs).data
    projection = np.random.default_rng(seed).normal(size=out.shape)

    def loss_of(index):
        def fn(x):
            args = [Tensor(a) for a in inputs]
            args[index] = Tensor(x)
            return float(np.sum(apply_primitive(op, args, attrs).data * projection))
        return fn

    tape = Tape()
    with tape:
        leaves = [tape.leaf(x, f"x{i}") for i, x in enumerate(inputs)]
        loss = ops.reduce_sum(apply_primitive(op, leaves, attrs) * Tensor(projection))
    grads = backward(tape, loss)
    for index, x in enumerate(inputs):
        numeric = numerical_gradient(loss_of(index), x, eps=1e-6)
        assert gradients_agree(grads[f"x{index}"].data, numeric), f"{op} input {index}"


CASES = range(50)


def case_rng(case):
    return np.random.default_rng(1000 + case)


def small_shape(rng, ndim, low=1, high=5):
    return tuple(int(s) for s in rng.integers(low, high, size=ndim))


def away_from_zero(rng, shape, low=0.2, high=2.0):
    return rng.uniform(low, high, size=shape) * rng.choice([-1.0, 1.0], size=shape)


class TestPrimitiveGradients:
    """Every differentiable primitive against central differences at 64-bit"""

    @pytest.mark.parametrize("case", CASES)
    def test_elementwise_binary(self, case):
        rng = case_rng(case)
        rows, cols = small_shape(rng, 2)
        a = rng.normal(size=(rows, cols))
        b = rng.normal(size=(cols,) if case % 2 else (rows, cols))
        for op in ("add", "sub", "mul"):
            check_primitive(op, [a, b], seed=case)
        check_primitive("div", [a, away_from_zero(rng, (rows, cols))], seed=case)

    @pytest.mark.parametrize("case", CASES)
    def test_elementwise_unary(self, case):
        rng = case_rng(case)
        shape = small_shape(rng, 2)
        x = rng.normal(size=shape)
        positive = rng.uniform(0.5, 2.0, size=shape)
        check_primitive("neg", [x], seed=case)
        check_primitive("square", [x], seed=case)
        check_primitive("exp", [x], seed=case)
        check_primitive("sqrt", [positive], seed=case)
        check_primitive("log", [positive], seed=case)
        check_primitive("leaky_relu", [away_from_zero(rng, shape)], {"slope": 0.1}, seed=case)
        check_primitive("clip_min", [away_from_zero(rng, shape)], {"floor": 0.0}, seed=case)

    @pytest.mark.parametrize("case", CASES)
    def test_reductions_and_reshape(self, case):
        rng = case_rng(case)
        d0, d1, d2 = small_shape(rng, 3, low=2)
        x = rng.normal(size=(d0, d1, d2))
        check_primitive("sum", [x], {"axis": (0, 2)}, seed=case)
        check_primitive("mean", [x], {"axis": 1, "keepdims": True}, seed=case)
        check_primitive("mean", [x], {"axis": None}, seed=case)
        check_primitive("reshape", [x], {"shape": (d0 * d1, d2)}, seed=case)

    @pytest.mark.parametrize("case", CASES)
    def test_matmul_and_softmax(self, case):
        rng = case_rng(case)
        m, k, n = small_shape(rng, 3)
        check_primitive("matmul", [rng.normal(size=(m, k)), rng.normal(size=(k, n))], seed=case)
        rows, classes = small_shape(rng, 2, low=2, high=6)
        check_primitive("softmax", [rng.normal(size=(rows, classes))], seed=case)
        check_primitive("log_softmax", [rng.normal(size=(rows, classes))], seed=case)

    @pytest.mark.parametrize("padding", ["same", "valid"])
    @pytest.mark.parametrize("case", range(25))
    def test_conv2d(self, padding, case):
        rng = case_rng(case)
        n, c_in, c_out = small_shape(rng, 3, high=4)
        side = int(rng.integers(3, 6))
        x = rng.normal(size=(n, side, side, c_in))
        k = rng.normal(size=(3, 3, c_in, c_out))
        check_primitive("conv2d", [x, k], {"padding": padding}, seed=case)

    @pytest.mark.parametrize("case", CASES)
    def test_pooling(self, case):
        rng = case_rng(case)
        n, c = small_shape(rng, 2, high=3)
        side = 2 * int(rng.integers(1, 3))
        # distinct values keep the max away from ties under perturbation
        x = rng.permutation(np.arange(n * side * side * c, dtype=np.float64)).reshape(n, side, side, c) * 0.1
        check_primitive("maxpool2d", [x], {"size": 2}, seed=case)
        check_primitive("avgpool2d", [rng.normal(size=(n, side, side, c))], {"size": side}, seed=case)

    def test_gradient_of_sum_is_sum_of_gradients(self):
        rng = np.random.default_rng(21)
        tape = Tape()
        with tape:
            x = tape.leaf(rng.normal(size=(3, 4)), "x")
            w = tape.leaf(rng.normal(size=(4, 2)), "w")
            first = ops.reduce_sum(ops.softmax(x @ w) * Tensor(rng.normal(size=(3, 2))))
            second = ops.reduce_mean(ops.square(x) * ops.exp(x))
            both = first + second
        total = backward(tape, both)
        a, b = backward(tape, first), backward(tape, second)
        assert np.allclose(total["x"].data, a["x"].data + b["x"].data, rtol=0, atol=1e-12)
        assert np.allclose(total["w"].data, a["w"].data, rtol=0, atol=1e-12)
        assert "w" not in b

    def test_convnet_loss_gradient(self):
        spec = canonical_convnet_spec((8, 8, 1), width_scale=1 / 32, n_classes=3, input_noise=0.0, dropout=0.0,
                                      translate_max=1)
        weights = init_weights(spec, RandomSource(3), dtype=np.float64)
        inputs = np.random.default_rng(7).normal(size=(6, 8, 8, 1))
        labels = np.array([0, 1, 2, 0, 1, 2])
        mask = np.ones(6, dtype=bool)
        noise = NoiseConfig.clean_training()

        def loss(params):
            tape = Tape()
            leaves = tape.watch(params)
            result = forward(spec, weights, inputs, noise, tape=tape, params=leaves, update_stats=False)
            with tape:
                cost, _ = classification_cost(result.probabilities, labels, mask, 1.0)
            return tape, cost

        tape, cost = loss(weights.params)
        grads = backward(tape, cost)

        entries = [(name, index) for name, param in sorted(weights.params.items()) for index in np.ndindex(*param.shape)]
        picked = RandomSource(3).child("gradcheck").generator.choice(len(entries), size=200, replace=False)
        by_name = {}
        for position in picked:
            name, index = entries[position]
            by_name.setdefault(name, []).append(index)

        for name, indices in by_name.items():
            def fn(x, name=name):
                params = dict(weights.params)
                params[name] = x
                return loss(params)[1].item()

            numeric = numerical_gradient(fn, weights.params[name], eps=1e-7, indices=indices)
            analytic = grads[name].data
            assert gradients_agree(np.array([analytic[i] for i in indices]),
                                   np.array([numeric[i] for i in indices])), name
        assert sum(len(indices) for indices in by_name.values()) == 200


class TestTapeContract:
    def test_unknown_primitive(self):
        with pytest.raises(PrimitiveError):
            apply_primitive("fft", [Tensor([1.0])])

    def test_broadcast_mismatch_is_shape_error(self):
        with pytest.raises(ShapeError):
            Tensor(np.ones((2, 3))) + Tensor(np.ones((4,)))

    def test_conv_channel_mismatch(self):
        with pytest.raises(ShapeError):
            ops.conv2d(Tensor(np.ones((1, 4, 4, 2))), Tensor(np.ones((3, 3, 3, 1))))

    def test_log_of_zero_is_non_finite(self):
        with pytest.raises(NonFiniteError):
            ops.log(Tensor([0.0, 1.0]))

    def test_tensors_are_immutable(self):
        t = Tensor([1.0, 2.0])
        with pytest.raises(ValueError):
            t.data[0] = 5.0

    def test_duplicate_leaf_name(self):
        tape = Tape()
        tape.leaf(np.ones(2), "w")
        with pytest.raises(TapeError):
            tape.leaf(np.ones(2), "w")

    def test_backward_needs_scalar(self):
        tape = Tape()
        with tape:
            x = tape.leaf(np.ones(3), "x")
            y = x * 2.0
        with pytest.raises(ShapeError):
            backward(tape, y)

    def test_stop_gradient_blocks_flow(self):
        tape = Tape()
        with tape:
            a = tape.leaf(np.array([2.0]), "a")
            b = tape.leaf(np.array([3.0]), "b")
            loss = ops.reduce_sum(a * stop_gradient(b))
        grads = backward(tape, loss)
        assert np.allclose(grads["a"].data, [3.0])
        assert "b" not in grads

    def test_gradient_accumulates_over_reuse(self):
        tape = Tape()
        with tape:
            x = tape.leaf(np.array([1.5]), "x")
            loss = ops.reduce_sum(x * x + x)
        grads = backward(tape, loss)
        assert np.allclose(grads["x"].data, [4.0])

    def test_no_tape_records_nothing(self):
        out = Tensor([1.0]) * 2.0
        assert not out.tracked

    def test_unreached_leaf_has_no_gradient(self):
        tape = Tape()
        with tape:
            x = tape.leaf(np.array([1.0]), "x")
            tape.leaf(np.array([1.0]), "unused")
            loss = ops.reduce_sum(x)
        assert set(backward(tape, loss)) == {"x"}

    def test_conv_output_sizes(self):
        assert conv_output_size(32, 3, 1, "same") == (32, 1, 1)
        assert conv_output_size(8, 3, 1, "valid") == (6, 0, 0)
        with pytest.raises(ShapeError):
            conv_output_size(8, 3, 1, "full")


class TestRandomSource:
    def test_same_seed_same_draws(self):
        a = draw_noise(RandomSource(5).child("noise", 3), Gaussian(1.0), (4,))
        b = draw_noise(RandomSource(5).child("noise", 3), Gaussian(1.0), (4,))
        assert np.array_equal(a.data, b.data)

    def test_sub_streams_are_independent(self):
        src = RandomSource(5)
        first = draw_noise(src.child("dropout"), Bernoulli(0.5), (100,)).data
        draw_noise(src.child("input_noise"), Gaussian(1.0), (1000,))
        again = draw_noise(src.child("dropout"), Bernoulli(0.5), (100,)).data
        assert np.array_equal(first, again)
        assert not np.array_equal(src.child("a").generator.random(4), src.child("b").generator.random(4))

    def test_uniform_int_bounds_inclusive(self):
        draws = draw_noise(RandomSource(0).child("t"), UniformInt(-2, 2), (2000,)).data
        assert set(np.unique(draws)) == {-2.0, -1.0, 0.0, 1.0, 2.0}

    def test_bad_parameters(self):
        with pytest.raises(ShapeError):
            draw_noise(RandomSource(0), Bernoulli(1.5), (2,))
        with pytest.raises(ValueError):
            RandomSource(-1)

    def test_float_width(self):
        assert draw_noise(RandomSource(0), Gaussian(1.0), (3,), dtype=np.float32).dtype == np.float32

    def test_gaussian_spread(self):
        draws = draw_noise(RandomSource(0).child("input_noise"), Gaussian(0.15), (10 ** 6,)).data
        assert abs(draws.std() - 0.15) < 0.001

    def test_degenerate_parameters(self):
        assert np.array_equal(draw_noise(RandomSource(0), Gaussian(0.0), (3, 4)).data, np.zeros((3, 4)))
        assert np.array_equal(draw_noise(RandomSource(0), Bernoulli(1.0), (3, 4)).data, np.ones((3, 4)))
