import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from relsar import tensor as T
from relsar.errors import DegenerateInputError, ShapeError
from relsar.tensor import Tensor, backward

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def test_default_precision_and_switch():
    assert Tensor([1.0]).dtype == np.float32
    with T.default_dtype(np.float64):
        assert Tensor([1.0]).dtype == np.float64
    assert Tensor([1.0]).dtype == np.float32


class TestMatmul:
    def test_identity(self, rng):
        b = rng.standard_normal((3, 4))
        np.testing.assert_allclose(T.matmul(np.eye(3), b).data, b, rtol=1e-6)

    def test_hand_arithmetic(self):
        out = T.matmul([[1, 2], [3, 4]], [[1], [1]])
        np.testing.assert_array_equal(out.data, [[3], [7]])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            T.matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_grad_both_inputs(self, f64, rng):
        a = Tensor(rng.standard_normal((4, 5)), requires_grad=True)
        b = Tensor(rng.standard_normal((5, 2)), requires_grad=True)
        backward(T.tsum(T.matmul(a, b)))
        np.testing.assert_allclose(a.grad, np.ones((4, 2)) @ b.data.T)
        np.testing.assert_allclose(b.grad, a.data.T @ np.ones((4, 2)))


class TestSoftmax:
    def test_single_element(self):
        assert T.softmax([3.7]).data[0] == pytest.approx(1.0)

    def test_symmetric_pair(self):
        np.testing.assert_allclose(T.softmax([0.0, 0.0]).data, [0.5, 0.5])

    def test_log_inputs(self, f64):
        out = T.softmax(np.log([1.0, 2.0, 3.0])).data
        np.testing.assert_allclose(out, [1 / 6, 2 / 6, 3 / 6], rtol=1e-12)

    def test_bad_axis(self):
        with pytest.raises(ShapeError):
            T.softmax(np.ones((2, 3)), axis=2)

    @given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=3, max_side=6), elements=finite),
           st.floats(-100, 100))
    @settings(max_examples=60, deadline=None)
    def test_rows_sum_to_one_and_shift_invariant(self, x, c):
        with T.default_dtype(np.float64):
            s = T.softmax(x, axis=-1).data
            np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-6)
            np.testing.assert_allclose(T.softmax(x + c, axis=-1).data, s, atol=1e-6)


class TestActivations:
    def test_selu_zero(self):
        assert T.selu([0.0]).data[0] == 0.0

    def test_selu_branches(self, f64):
        out = T.selu([1.0, -1.0]).data
        np.testing.assert_allclose(out, [T.SELU_SCALE, T.SELU_SCALE * T.SELU_ALPHA * (math.exp(-1) - 1)])

    def test_gelu_matches_erf_form(self, f64):
        x = np.linspace(-3, 3, 13)
        ref = [0.5 * v * (1 + math.erf(v / math.sqrt(2))) for v in x]
        np.testing.assert_allclose(T.gelu(x).data, ref, rtol=1e-12)

    def test_l2_normalize_3_4(self):
        np.testing.assert_allclose(T.l2_normalize([3.0, 4.0]).data, [0.6, 0.8], rtol=1e-6)

    def test_l2_normalize_zero_vector(self):
        assert np.all(np.isfinite(T.l2_normalize(np.zeros(3)).data))
        with pytest.raises(DegenerateInputError):
            T.l2_normalize(np.zeros(3), eps=None)

    @given(hnp.arrays(np.float64, (4, 5), elements=finite))
    @settings(max_examples=60, deadline=None)
    def test_unit_norm(self, x):
        norms = np.linalg.norm(x, axis=1)
        with T.default_dtype(np.float64):
            out = T.l2_normalize(x, axis=1).data
        keep = norms > 1e-3
        np.testing.assert_allclose(np.linalg.norm(out[keep], axis=1), 1.0, atol=1e-6)


class TestBackward:
    def test_sum_gives_ones(self, f64, rng):
        x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        grads = backward(T.tsum(x))
        np.testing.assert_array_equal(grads[x], np.ones((3, 4)))

    def test_squared_norm_gives_2x(self, f64, rng):
        x = Tensor(rng.standard_normal(5), requires_grad=True)
        backward(T.tsum(x * x))
        np.testing.assert_allclose(x.grad, 2 * x.data)

    def test_non_scalar_loss(self):
        with pytest.raises(ShapeError):
            backward(Tensor(np.ones(3), requires_grad=True) * 2)

    def test_unreachable_leaf_has_zero_gradient(self, f64):
        x = Tensor([1.0, 2.0], requires_grad=True)
        y = Tensor([3.0], requires_grad=True)
        grads = backward(T.tsum(x * x))
        assert y not in grads and y.grad is None

    def test_shared_node_visited_once(self, f64):
        # y is used twice; its gradient must accumulate, not be propagated twice
        x = Tensor([2.0], requires_grad=True)
        y = x * x
        backward(T.tsum(y + y))
        np.testing.assert_allclose(x.grad, [8.0])

    def test_repeat_backward_is_deterministic(self, f64, rng):
        w = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
        x = rng.standard_normal((4, 3))

        def run():
            w.zero_grad()
            backward(T.tsum(T.gelu(T.matmul(x, w)) ** 2))
            return w.grad.copy()

        np.testing.assert_array_equal(run(), run())

    def test_broadcast_gradient_is_reduced(self, f64):
        a = Tensor(np.ones((3, 4)), requires_grad=True)
        b = Tensor(np.ones(4), requires_grad=True)
        backward(T.tsum(a * b))
        assert b.grad.shape == (4,)
        np.testing.assert_array_equal(b.grad, np.full(4, 3.0))
