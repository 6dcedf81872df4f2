import math

import numpy as np
import pytest

from pixeldefer.gridmath import (
    CLAMP_LO, DualGrid, GridError, ShapeError, Tape, TapeError, ValueGrid,
    available_backends, scalar,
)
from reference import conv2d_reference, max_relative_gradient_error, softmax_reference


def _conv_args(rng, in_ch, out_ch, k, h, w):
    x = DualGrid(ValueGrid(rng.uniform(-2, 2, size=(in_ch, h, w))))
    kern = DualGrid(ValueGrid(rng.uniform(-2, 2, size=(out_ch * in_ch, k, k))))
    bias = DualGrid(ValueGrid(rng.uniform(-2, 2, size=(out_ch, 1, 1))))
    return x, kern, bias


class TestValueGrid:
    def test_shape_and_properties(self):
        g = ValueGrid(np.zeros((3, 4, 5)))
        assert (g.channels, g.height, g.width) == (3, 4, 5)

    def test_2d_promotes_to_single_channel(self):
        assert ValueGrid(np.zeros((4, 5))).shape == (1, 4, 5)

    def test_rejects_nan(self):
        with pytest.raises(GridError):
            ValueGrid(np.array([[[np.nan]]]))

    def test_rejects_bad_rank(self):
        with pytest.raises(GridError):
            ValueGrid(np.zeros(4))


class TestConv2d:
    def test_zero_input_gives_zero_output(self, rng):
        t = Tape(record=False)
        x = DualGrid(ValueGrid.zeros(1, 3, 3))
        kern = DualGrid(ValueGrid(rng.normal(size=(1, 3, 3))))
        bias = DualGrid(ValueGrid.zeros(1, 1, 1))
        out = t.conv2d(x, kern, bias, padding=1)
        assert np.all(out.value.data == 0.0)

    def test_identity_1x1_kernel(self, rng):
        t = Tape(record=False)
        x = DualGrid(ValueGrid(rng.uniform(size=(1, 5, 5))))
        kern = DualGrid(ValueGrid(np.ones((1, 1, 1))))
        bias = DualGrid(ValueGrid.zeros(1, 1, 1))
        out = t.conv2d(x, kern, bias, padding=0)
        np.testing.assert_array_equal(out.value.data, x.value.data)

    def test_matches_nested_loop_oracle_1ch(self, rng):
        x, kern, bias = _conv_args(rng, 1, 1, 3, 4, 4)
        out = Tape(record=False).conv2d(x, kern, bias, padding=1)
        ref = conv2d_reference(x.value.data, kern.value.data.reshape(1, 1, 3, 3),
                               bias.value.data.ravel(), 1)
        assert np.abs(out.value.data - ref).max() < 1e-12

    @pytest.mark.parametrize("in_ch,out_ch,k,h,w", [(3, 4, 3, 8, 8), (2, 5, 1, 6, 7)])
    def test_matches_nested_loop_oracle_multi(self, rng, in_ch, out_ch, k, h, w):
        x, kern, bias = _conv_args(rng, in_ch, out_ch, k, h, w)
        out = Tape(record=False).conv2d(x, kern, bias, padding=k // 2)
        ref = conv2d_reference(x.value.data, kern.value.data.reshape(out_ch, in_ch, k, k),
                               bias.value.data.ravel(), k // 2)
        assert np.abs(out.value.data - ref).max() < 1e-12

    def test_channel_mismatch_raises(self, rng):
        x, _, bias = _conv_args(rng, 3, 1, 3, 4, 4)
        kern = DualGrid(ValueGrid(rng.normal(size=(2, 3, 3))))  # wants 2 input channels
        with pytest.raises(ShapeError):
            Tape(record=False).conv2d(x, kern, bias, padding=1)

    def test_padding_must_preserve_size(self, rng):
        x, kern, bias = _conv_args(rng, 1, 1, 3, 4, 4)
        with pytest.raises(ShapeError):
            Tape(record=False).conv2d(x, kern, bias, padding=0)

    def test_backends_agree(self, rng):
        backends = available_backends()
        if len(backends) < 2:
            pytest.skip("compiled extension not built")
        x = rng.uniform(-2, 2, size=(4, 9, 9))
        w4 = rng.uniform(-2, 2, size=(3, 4, 3, 3))
        b = rng.uniform(-1, 1, size=3)
        g = rng.uniform(-1, 1, size=(3, 9, 9))
        results = {}
        for name, mod in backends.items():
            results[name] = (mod.conv2d_forward(x, w4, b, 1),
                             mod.conv2d_grad_input(g, w4, 1),
                             mod.conv2d_grad_kernel(g, x, 3, 3, 1))
        a, b_ = results["python"], results["compiled"]
        for lhs, rhs in zip(a, b_):
            assert np.abs(lhs - rhs).max() < 1e-10


class TestActivations:
    def test_relu_values(self):
        t = Tape(record=False)
        out = t.relu(DualGrid(ValueGrid(np.array([[[-2.0, 3.5]]]))))
        np.testing.assert_array_equal(out.value.data, [[[0.0, 3.5]]])

    def test_sigmoid_range_and_symmetry(self, rng):
        t = Tape(record=False)
        x = rng.uniform(-30, 30, size=(2, 5, 5))
        out = t.sigmoid(DualGrid(ValueGrid(x))).value.data
        assert np.all((out > 0) & (out < 1))
        mid = t.sigmoid(DualGrid(ValueGrid(np.zeros((1, 1, 1))))).value.data
        assert mid[0, 0, 0] == pytest.approx(0.5)

    def test_softmax_uniform_logits(self):
        t = Tape(record=False)
        out = t.channel_softmax(DualGrid(ValueGrid.zeros(3, 2, 2)))
        np.testing.assert_allclose(out.value.data, 1.0 / 3.0)

    def test_softmax_known_values(self):
        t = Tape(record=False)
        logits = np.array([1.0, 2.0, 3.0]).reshape(3, 1, 1)
        out = t.channel_softmax(DualGrid(ValueGrid(logits))).value.data[:, 0, 0]
        expected = softmax_reference([1.0, 2.0, 3.0])
        np.testing.assert_allclose(out, expected, atol=1e-12)
        np.testing.assert_allclose(out, [0.0900, 0.2447, 0.6652], atol=1e-4)

    def test_softmax_sums_to_one(self, rng):
        t = Tape(record=False)
        for _ in range(5):
            x = rng.uniform(-30, 30, size=(4, 6, 6))
            out = t.channel_softmax(DualGrid(ValueGrid(x))).value.data
            np.testing.assert_allclose(out.sum(axis=0), 1.0, atol=1e-6)
            assert out.min() >= 0.0

    def test_clamped_log_is_finite_at_zero_and_one(self):
        t = Tape(record=False)
        out = t.clamped_log(DualGrid(ValueGrid(np.array([[[0.0, 1.0]]]))))
        np.testing.assert_allclose(out.value.data[0, 0], [math.log(CLAMP_LO),
                                                          math.log(1 - CLAMP_LO)])


class TestBackward:
    def test_sum_gradient_is_ones(self, rng):
        t = Tape()
        x = t.dual(ValueGrid(rng.normal(size=(2, 3, 3))))
        t.backward(t.total_sum(x))
        np.testing.assert_array_equal(x.grad.data, np.ones((2, 3, 3)))

    def test_inactive_relu_gets_zero_gradient(self):
        t = Tape()
        x = t.dual(ValueGrid(np.array([[[-1.0]]])))
        t.backward(t.total_sum(t.relu(x)))
        assert x.grad.data[0, 0, 0] == 0.0

    def test_unreachable_grid_keeps_zero_gradient(self, rng):
        t = Tape()
        x = t.dual(ValueGrid(rng.normal(size=(1, 2, 2))))
        other = t.dual(ValueGrid(rng.normal(size=(1, 2, 2))))
        t.relu(other)  # recorded but not part of the loss
        t.backward(t.total_sum(x))
        np.testing.assert_array_equal(other.grad.data, 0.0)

    def test_double_backward_raises(self, rng):
        t = Tape()
        x = t.dual(ValueGrid(rng.normal(size=(1, 2, 2))))
        loss = t.total_sum(x)
        t.backward(loss)
        with pytest.raises(TapeError):
            t.backward(loss)
        t.reset()
        np.testing.assert_array_equal(x.grad.data, 0.0)
        t.backward(loss)  # allowed again after reset

    def test_backward_needs_scalar(self, rng):
        t = Tape()
        x = t.dual(ValueGrid(rng.normal(size=(1, 2, 2))))
        with pytest.raises(ShapeError):
            t.backward(t.relu(x))

    def test_reused_node_accumulates(self, rng):
        t = Tape()
        x = t.dual(ValueGrid(np.full((1, 1, 1), 3.0)))
        t.backward(t.total_sum(t.mul(x, x)))  # d(x^2)/dx = 2x
        assert x.grad.data[0, 0, 0] == pytest.approx(6.0)


PRIMITIVES = [
    ("conv2d", lambda t, x, aux: t.conv2d(x, aux["kern"], aux["bias"], padding=1)),
    ("relu", lambda t, x, aux: t.relu(x)),
    ("sigmoid", lambda t, x, aux: t.sigmoid(x)),
    ("channel_softmax", lambda t, x, aux: t.channel_softmax(x)),
    ("clamped_log", lambda t, x, aux: t.clamped_log(t.sigmoid(x))),
    ("add", lambda t, x, aux: t.add(x, aux["other"])),
    ("mul", lambda t, x, aux: t.mul(x, aux["other"])),
    ("affine", lambda t, x, aux: t.affine(x, -1.7, 0.4)),
    ("add_const", lambda t, x, aux: t.add_const(x, aux["cgrid"])),
    ("mul_const", lambda t, x, aux: t.mul_const(x, aux["cgrid"])),
    ("channel_slice", lambda t, x, aux: t.channel_slice(x, 1, 3)),
    ("channel_sum", lambda t, x, aux: t.channel_sum(x, 1, 3)),
    ("spatial_sum", lambda t, x, aux: t.spatial_sum(x)),
]


@pytest.mark.parametrize("name,apply", PRIMITIVES, ids=[p[0] for p in PRIMITIVES])
def test_gradient_check_per_primitive(name, apply, rng):
    """Every primitive's analytic gradient matches central differences."""
    x = DualGrid(ValueGrid(rng.uniform(-2, 2, size=(3, 4, 4))))
    aux = {
        "kern": DualGrid(ValueGrid(rng.uniform(-2, 2, size=(2 * 3, 3, 3)))),
        "bias": DualGrid(ValueGrid(rng.uniform(-2, 2, size=(2, 1, 1)))),
        "other": DualGrid(ValueGrid(rng.uniform(-2, 2, size=(3, 4, 4)))),
        "cgrid": rng.uniform(-2, 2, size=(3, 1, 1)),
    }
    weights = rng.normal(size=(64,))  # fixed projection so the loss is a plain scalar

    def build(record):
        # the same dual objects are reused so perturbing x.value.data
        # propagates into re-evaluations
        t = Tape(record=record)
        out = apply(t, t.dual(x), aux)
        proj = np.resize(weights, out.value.shape)
        return t, t.total_sum(t.mul_const(out, proj))

    t, loss = build(record=True)
    t.backward(loss)
    params = [("x", x)] + ([("kern", aux["kern"]), ("bias", aux["bias"])]
                           if name == "conv2d" else [])

    def eval_fn():
        _, node = build(record=False)
        return scalar(node)

    err = max_relative_gradient_error(eval_fn, params, h=1e-4)
    assert err < 1e-4, f"{name}: worst relative gradient error {err}"
