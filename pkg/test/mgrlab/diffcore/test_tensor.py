"""Tests for the tape, tensors and backward pass."""

import numpy as np
import pytest

from mgrlab.diffcore import (
    ContractError,
    NumericError,
    ShapeError,
    Tape,
    Tensor,
    backward,
    gradient,
    no_record,
    ops,
)


# This class keeps the test tape data and behavior in one place.
class TestTape:
    def test_gradient_of_square_sum(self):
        x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
        with Tape() as tape:
            y = ops.sum_(ops.mul(x, x))
        (g,) = gradient(tape, y, [x])

        np.testing.assert_array_equal(g.values, [2.0, -4.0, 6.0])

    def test_tape_is_single_use(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = ops.sum_(ops.exp(x))
        gradient(tape, y, [x])

        with pytest.raises(ContractError, match="consumed"):
            gradient(tape, y, [x])

    def test_unreachable_source_gets_exact_zeros(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        unused = Tensor([[5.0, 6.0]], requires_grad=True)
        with Tape() as tape:
            y = ops.sum_(x)
        _, g = gradient(tape, y, [x, unused])

        assert g.shape == (1, 2)
        assert np.all(g.values == 0.0)

    def test_gradient_sources_must_be_leaves(self):
        x = Tensor([1.0])
        with Tape() as tape:
            y = ops.sum_(ops.mul(x, Tensor([2.0], requires_grad=True)))

        with pytest.raises(ContractError, match="requires_grad"):
            gradient(tape, y, [x])

    def test_backward_fills_grad(self):
        w = Tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
        x = Tensor([[1.0, 1.0]])
        with Tape() as tape:
            y = ops.sum_(ops.matmul(x, w))
        backward(tape, y)

        np.testing.assert_array_equal(w.grad.values, np.ones((2, 2)))

    def test_backward_needs_scalar(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = ops.mul(x, 3.0)

        with pytest.raises(ContractError, match="scalar"):
            backward(tape, y)

    def test_no_record_leaves_tape_empty(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            with no_record():
                ops.tanh(x)

        assert len(tape) == 0

    def test_second_derivative_through_create_graph(self):
        x = Tensor([0.5, -1.5], requires_grad=True)
        with Tape() as outer:
            with Tape() as inner:
                y = ops.sum_(ops.mul(ops.mul(x, x), x))
            (g,) = gradient(inner, y, [x], create_graph=True)
            s = ops.sum_(g)
        (h,) = gradient(outer, s, [x])

        np.testing.assert_allclose(h.values, 6.0 * x.values)

    def test_item_needs_single_element(self):
        assert Tensor([[2.5]]).item() == 2.5
        with pytest.raises(ContractError):
            Tensor([1.0, 2.0]).item()

    def test_detach_is_untracked_copy(self):
        x = Tensor([1.0], requires_grad=True)
        d = x.detach()
        d.values[0] = 9.0

        assert not d.requires_grad
        assert x.values[0] == 1.0


# This class keeps the test numeric guards data and behavior in one place.
class TestGuards:
    def test_log_of_negative_raises(self):
        with pytest.raises(NumericError, match="'log'"):
            ops.log(Tensor([-1.0]))

    def test_division_by_zero_raises(self):
        with pytest.raises(NumericError):
            ops.div(Tensor([1.0]), Tensor([0.0]))

    def test_mismatched_shapes_raise(self):
        with pytest.raises(ShapeError):
            ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))

    def test_column_broadcast(self):
        out = ops.mul(Tensor(np.ones((2, 3))), Tensor([[2.0], [3.0]]))

        np.testing.assert_array_equal(out.values[:, 0], [2.0, 3.0])

    def test_matmul_rejects_inner_mismatch(self):
        with pytest.raises(ShapeError):
            ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
