import numpy as np
import pytest

from autoadv.core.autodiff import (Graph, absolute, broadcast_to, conv2d, detach, matmul, mean, relu, reshape,
                                   scale, sigmoid, softmax_cross_entropy, total)
from autoadv.core.exceptions import ContractError, DimensionError, NumericError
from autoadv.methods.encoder import EncoderSpec, encode, init_encoder
from autoadv.methods.steps import scaled_sigmoid_mask, total_loss
from autoadv.utils.gradcheck import check_gradients
from tests.conftest import linear_instance

TOLERANCE = 1e-5


class TestForwardValues:
    """
    Forward values of the recorded operations.
    """
    def setup_method(self, method):
        self.graph = Graph()

    def test_add_sub_mul(self):
        a = self.graph.constant([1.0, 2.0, 3.0])
        b = self.graph.constant([4.0, 5.0, 6.0])
        np.testing.assert_array_equal((a + b).value, [5.0, 7.0, 9.0])
        np.testing.assert_array_equal((a - b).value, [-3.0, -3.0, -3.0])
        np.testing.assert_array_equal((a * b).value, [4.0, 10.0, 18.0])
        np.testing.assert_array_equal((a * 2.0).value, [2.0, 4.0, 6.0])
        np.testing.assert_array_equal((-a).value, [-1.0, -2.0, -3.0])

    def test_shape_mismatch_raises(self):
        a = self.graph.constant(np.zeros(3))
        b = self.graph.constant(np.zeros(4))
        with pytest.raises(DimensionError):
            a + b

    def test_relu_sigmoid_abs(self):
        v = self.graph.constant([-2.0, 0.0, 3.0])
        np.testing.assert_array_equal(relu(v).value, [0.0, 0.0, 3.0])
        np.testing.assert_allclose(sigmoid(v).value, 1 / (1 + np.exp(-np.array([-2.0, 0.0, 3.0]))))
        np.testing.assert_array_equal(absolute(v).value, [2.0, 0.0, 3.0])

    def test_sigmoid_is_stable_for_large_inputs(self):
        out = sigmoid(self.graph.constant([-1000.0, 1000.0])).value
        np.testing.assert_array_equal(out, [0.0, 1.0])

    def test_matmul_and_reductions(self):
        a = self.graph.constant([[1.0, 2.0], [3.0, 4.0]])
        b = self.graph.constant([[1.0], [1.0]])
        np.testing.assert_array_equal(matmul(a, b).value, [[3.0], [7.0]])
        assert total(a).item() == 10.0
        assert mean(a).item() == 2.5

    def test_matmul_inner_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            matmul(self.graph.constant(np.zeros((2, 3))), self.graph.constant(np.zeros((2, 3))))

    def test_conv2d_identity_kernel(self):
        x = np.arange(16, dtype=float).reshape(4, 4, 1)
        kernel = np.zeros((3, 3, 1, 1))
        kernel[1, 1, 0, 0] = 1.0
        out = conv2d(self.graph.constant(x), self.graph.constant(kernel), stride=1, padding=1)
        np.testing.assert_array_equal(out.value, x)

    def test_conv2d_output_shape_with_stride(self):
        x = self.graph.constant(np.ones((5, 5, 2)))
        k = self.graph.constant(np.ones((3, 3, 2, 4)))
        assert conv2d(x, k, stride=2, padding=1).shape == (3, 3, 4)
        assert conv2d(x, k, stride=1, padding=0).shape == (3, 3, 4)

    def test_cross_entropy_value(self):
        logits = np.array([1.0, 2.0, 0.5])
        expected = -(logits[1] - np.log(np.sum(np.exp(logits))))
        assert softmax_cross_entropy(self.graph.constant(logits), 1).item() == pytest.approx(expected)

    def test_cross_entropy_target_out_of_range(self):
        with pytest.raises(IndexError):
            softmax_cross_entropy(self.graph.constant([0.0, 1.0]), 2)

    def test_non_finite_value_raises(self):
        with pytest.raises(NumericError):
            scale(self.graph.constant([1e308]), 10.0)

    def test_item_needs_single_element(self):
        with pytest.raises(ContractError):
            self.graph.constant([1.0, 2.0]).item()

    def test_data_is_flat_row_major(self):
        t = self.graph.constant([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(t.data, [1.0, 2.0, 3.0, 4.0])
        assert t.shape == (2, 2)


class TestBackward:
    """
    Reverse-mode accumulation.
    """
    def setup_method(self, method):
        self.graph = Graph()

    def test_backward_requires_scalar(self):
        v = self.graph.variable([1.0, 2.0])
        with pytest.raises(ContractError):
            self.graph.backward(v * 2.0)

    def test_operand_from_other_graph(self):
        other = Graph().constant([1.0])
        with pytest.raises(ContractError):
            self.graph.variable([1.0]) + other

    def test_fan_out_accumulates(self):
        x = self.graph.variable([3.0])
        loss = total(x * x + x)
        self.graph.backward(loss)
        np.testing.assert_allclose(x.grad, [7.0])

    def test_constants_get_no_gradient(self):
        x = self.graph.variable([1.0, 2.0])
        c = self.graph.constant([5.0, 6.0])
        self.graph.backward(total(x * c))
        assert c.grad is None
        np.testing.assert_array_equal(x.grad, [5.0, 6.0])

    def test_detach_cuts_gradient(self):
        x = self.graph.variable([2.0])
        self.graph.backward(total(x * detach(x)))
        np.testing.assert_array_equal(x.grad, [2.0])

    def test_abs_gradient_at_zero_is_zero(self):
        x = self.graph.variable([-1.0, 0.0, 2.0])
        self.graph.backward(total(absolute(x)))
        np.testing.assert_array_equal(x.grad, [-1.0, 0.0, 1.0])

    def test_broadcast_gradient_sums(self):
        b = self.graph.variable([1.0, 2.0, 3.0])
        self.graph.backward(total(broadcast_to(b, (4, 3))))
        np.testing.assert_array_equal(b.grad, [4.0, 4.0, 4.0])

    def test_zero_grad(self):
        x = self.graph.variable([1.0])
        self.graph.backward(total(x))
        self.graph.zero_grad()
        assert x.grad is None


class TestGradientCheck:
    """
    Backpropagated gradients against central finite differences (h = 1e-5).
    """
    def setup_method(self, method):
        self.rng = np.random.default_rng(7)

    def away_from_zero(self, shape):
        values = self.rng.uniform(0.2, 1.0, size=shape)
        return values * self.rng.choice([-1.0, 1.0], size=shape)

    def test_elementwise(self):
        a, b = self.rng.normal(size=(2, 3)), self.rng.normal(size=(2, 3))
        assert check_gradients(lambda x, y: total((x + y) * (x - y)), [a, b]) <= TOLERANCE
        assert check_gradients(lambda x: total(sigmoid(scale(x, 3.0))), [a]) <= TOLERANCE

    def test_relu_and_abs(self):
        a = self.away_from_zero((3, 4))
        assert check_gradients(lambda x: total(relu(x) * x), [a]) <= TOLERANCE
        assert check_gradients(lambda x: total(absolute(x) * x), [a]) <= TOLERANCE

    def test_matmul_reshape_broadcast(self):
        a, w, bias = self.rng.normal(size=(2, 6)), self.rng.normal(size=(6, 3)), self.rng.normal(size=3)

        def build(x, weight, b):
            out = matmul(reshape(x, (2, 6)), weight)
            return mean(sigmoid(out + broadcast_to(b, out.shape)))

        assert check_gradients(build, [a, w, bias]) <= TOLERANCE

    @pytest.mark.parametrize("stride,padding", [(1, 1), (2, 1), (1, 0)])
    def test_conv2d(self, stride, padding):
        x, k = self.rng.normal(size=(5, 5, 2)), self.rng.normal(size=(3, 3, 2, 3))
        size = (5 + 2 * padding - 3) // stride + 1
        weights = self.rng.normal(size=(size, size, 3))
        build = lambda a, b: total(conv2d(a, b, stride, padding) * a.graph.constant(weights))
        assert check_gradients(build, [x, k]) <= TOLERANCE

    def test_batched_conv2d(self):
        x, k = self.rng.normal(size=(2, 4, 4, 1)), self.rng.normal(size=(3, 3, 1, 2))
        weights = self.rng.normal(size=(2, 4, 4, 2))
        build = lambda a, b: total(conv2d(a, b, 1, 1) * a.graph.constant(weights))
        assert check_gradients(build, [x, k]) <= TOLERANCE

    def test_cross_entropy(self):
        logits = self.rng.normal(size=5)
        assert check_gradients(lambda z: softmax_cross_entropy(z, 3), [logits]) <= TOLERANCE
        batch = self.rng.normal(size=(4, 5))
        assert check_gradients(lambda z: softmax_cross_entropy(z, np.array([0, 1, 4, 2])), [batch]) <= TOLERANCE

    def test_full_attack_loss_on_linear_model(self):
        model, x, target = linear_instance(3)
        delta = self.rng.uniform(-0.05, 0.05, size=x.shape)
        pre_mask = self.rng.normal(size=x.shape)

        def build(d, z):
            graph = d.graph
            mask = sigmoid(scale(z, 2.0))
            return total_loss(model, graph.constant(x), d, mask, target, lam=0.4, n=x.size)

        assert check_gradients(build, [delta, pre_mask]) <= TOLERANCE


class TestGradientPaths:
    """
    The perturbation reaches the loss directly and through the encoder that builds the mask.
    """
    def setup_method(self, method):
        self.model, self.x, self.target = linear_instance(5)
        self.delta = np.random.default_rng(3).uniform(-0.05, 0.05, size=self.x.shape)
        self.encoder = init_encoder(EncoderSpec("fc", self.x.shape, input_scale=20.0, seed=4))

    def gradient(self, direct: bool, through_encoder: bool) -> np.ndarray:
        graph = Graph()
        d = graph.variable(self.delta)
        frozen = graph.constant(self.delta)
        mask = scaled_sigmoid_mask(encode(self.encoder, d if through_encoder else frozen), 2.0)
        loss = total_loss(self.model, graph.constant(self.x), d if direct else frozen, mask, self.target,
                          lam=0.6, n=self.x.size)
        graph.backward(loss)
        return d.grad

    def test_both_paths_contribute(self):
        both = self.gradient(True, True)
        direct = self.gradient(True, False)
        encoder = self.gradient(False, True)
        assert np.max(np.abs(both - direct)) > 1e-6
        assert np.max(np.abs(both - encoder)) > 1e-6
        np.testing.assert_allclose(both, direct + encoder, atol=1e-12)
