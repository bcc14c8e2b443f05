"""This file handles the op table for the diffcore part of the project.

Each op kind pairs a NumPy forward rule with a vector-Jacobian rule written
in terms of other registered ops, which is what lets a ``create_graph``
backward pass be recorded and differentiated again.

Broadcasting is deliberately narrow.  Two operands combine when they have
the same shape, when one is a scalar, when one is a row that repeats over
the leading batch dimension, or when one is a ``(batch, 1)`` column that
repeats over the columns of a ``(batch, k)`` matrix.
"""

from __future__ import annotations

from collections.abc import Sequence
from typing import Any

import numpy as np

from mgrlab.diffcore.errors import ShapeError
from mgrlab.diffcore.tensor import (
    OpRecord,
    Tensor,
    as_tensor,
    record_op,
    register_op,
)

Shape = tuple[int, ...]


# ---------------------------------------------------------------------------
# Shape rules
# ---------------------------------------------------------------------------

def _broadcast_shape(kind: str, a: Shape, b: Shape) -> Shape:
    if a == b:
        return a
    if a == ():
        return b
    if b == ():
        return a
    if len(a) == len(b) + 1 and a[1:] == b:
        return a
    if len(b) == len(a) + 1 and b[1:] == a:
        return b
    if len(a) == len(b) == 2 and a[0] == b[0] and 1 in (a[1], b[1]):
        return a[0], max(a[1], b[1])
    raise ShapeError(f"{kind}: cannot broadcast shapes {a} and {b}")


def _unbroadcast(grad: Tensor, shape: Shape) -> Tensor:
    """Sum ``grad`` back down to ``shape`` after a broadcast forward."""
    if grad.shape == shape:
        return grad
    if shape == ():
        return sum_(grad)
    if grad.shape[1:] == shape:
        return sum_(grad, axis=0)
    if len(shape) == 2 and shape[1] == 1 and grad.shape[0] == shape[0]:
        return sum_(grad, axis=1, keepdims=True)
    raise ShapeError(f"cannot reduce gradient {grad.shape} to {shape}")


# ---------------------------------------------------------------------------
# Elementwise binary ops
# ---------------------------------------------------------------------------

def _binary_forward(kind, fn):
    def forward(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _broadcast_shape(kind, a.shape, b.shape)
        return fn(a, b)

    return forward


def _add_vjp(rec: OpRecord, g: Tensor, needs: tuple[bool, ...]):
    a, b = rec.inputs
    return (
        _unbroadcast(g, a.shape) if needs[0] else None,
        _unbroadcast(g, b.shape) if needs[1] else None,
    )


def _sub_vjp(rec: OpRecord, g: Tensor, needs: tuple[bool, ...]):
    a, b = rec.inputs
    return (
        _unbroadcast(g, a.shape) if needs[0] else None,
        _unbroadcast(neg(g), b.shape) if needs[1] else None,
    )


def _mul_vjp(rec: OpRecord, g: Tensor, needs: tuple[bool, ...]):
    a, b = rec.inputs
    return (
        _unbroadcast(mul(g, b), a.shape) if needs[0] else None,
        _unbroadcast(mul(g, a), b.shape) if needs[1] else None,
    )


def _div_vjp(rec: OpRecord, g: Tensor, needs: tuple[bool, ...]):
    a, b = rec.inputs
    grad_a = _unbroadcast(div(g, b), a.shape) if needs[0] else None
    grad_b = None
    if needs[1]:
        grad_b = _unbroadcast(neg(div(mul(g, rec.output), b)), b.shape)
    return grad_a, grad_b


register_op("add", _binary_forward("add", np.add), _add_vjp)
register_op("sub", _binary_forward("sub", np.subtract), _sub_vjp)
register_op("mul", _binary_forward("mul", np.multiply), _mul_vjp)
register_op("div", _binary_forward("div", np.divide), _div_vjp)


# This function adds the tensors work used in this file.
def add(a: Any, b: Any) -> Tensor:
    return record_op("add", (a, b))


def sub(a: Any, b: Any) -> Tensor:
    return record_op("sub", (a, b))


def mul(a: Any, b: Any) -> Tensor:
    return record_op("mul", (a, b))


def div(a: Any, b: Any) -> Tensor:
    return record_op("div", (a, b))


# ---------------------------------------------------------------------------
# Elementwise unary ops
# ---------------------------------------------------------------------------

register_op(
    "neg",
    np.negative,
    lambda rec, g, needs: (neg(g),),
)
register_op(
    "tanh",
    np.tanh,
    lambda rec, g, needs: (
        mul(g, sub(1.0, mul(rec.output, rec.output))),
    ),
)
register_op(
    "exp",
    np.exp,
    lambda rec, g, needs: (mul(g, rec.output),),
)
register_op(
    "log",
    np.log,
    lambda rec, g, needs: (div(g, rec.inputs[0]),),
)


def _sigmoid_forward(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    exp_x = np.exp(x[~positive])
    out[~positive] = exp_x / (1.0 + exp_x)
    return out


register_op(
    "sigmoid",
    _sigmoid_forward,
    lambda rec, g, needs: (
        mul(g, mul(rec.output, sub(1.0, rec.output))),
    ),
)


def _leaky_relu_forward(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, x, slope * x)


def _leaky_relu_vjp(rec: OpRecord, g: Tensor, needs: tuple[bool, ...]):
    slope = rec.attrs["slope"]
    mask = np.where(rec.inputs[0].values > 0, 1.0, slope)
    return (mul(g, Tensor.wrap(mask)),)


register_op("leaky_relu", _leaky_relu_forward, _leaky_relu_vjp)


def neg(x: Any) -> Tensor:
    return record_op("neg", (x,))


def tanh(x: Any) -> Tensor:
    return record_op("tanh", (x,))


def exp(x: Any) -> Tensor:
    return record_op("exp", (x,))


def log(x: Any) -> Tensor:
    return record_op("log", (x,))


def sigmoid(x: Any) -> Tensor:
    return record_op("sigmoid", (x,))


def leaky_relu(x: Any, slope: float = 0.01) -> Tensor:
    return record_op("leaky_relu", (x,), slope=float(slope))


# ---------------------------------------------------------------------------
# Linear algebra and layout
# ---------------------------------------------------------------------------

def _matmul_forward(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul: expected (n, k) @ (k, m), got {a.shape} @ {b.shape}"
        )
    return a @ b


def _matmul_vjp(rec: OpRecord, g: Tensor, needs: tuple[bool, ...]):
    a, b = rec.inputs
    return (
        matmul(g, transpose(b)) if needs[0] else None,
        matmul(transpose(a), g) if needs[1] else None,
    )


def _transpose_forward(x: np.ndarray) -> np.ndarray:
    if x.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got {x.shape}")
    return np.ascontiguousarray(x.T)


register_op("matmul", _matmul_forward, _matmul_vjp)
register_op(
    "transpose",
    _transpose_forward,
    lambda rec, g, needs: (transpose(g),),
)


def _reshape_forward(x: np.ndarray, shape: Shape) -> np.ndarray:
    if int(np.prod(shape, dtype=np.int64)) != x.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")
    return x.reshape(shape).copy()


register_op(
    "reshape",
    _reshape_forward,
    lambda rec, g, needs: (reshape(g, rec.inputs[0].shape),),
)


def _expand_forward(x: np.ndarray, shape: Shape) -> np.ndarray:
    if _broadcast_shape("expand", x.shape, shape) != shape:
        raise ShapeError(f"expand: cannot expand {x.shape} to {shape}")
    return np.broadcast_to(x, shape).copy()


register_op(
    "expand",
    _expand_forward,
    lambda rec, g, needs: (_unbroadcast(g, rec.inputs[0].shape),),
)


def _take_forward(
    x: np.ndarray, start: int, stop: int, axis: int
) -> np.ndarray:
    if not 0 <= start < stop <= x.shape[axis]:
        raise ShapeError(
            f"take: range [{start}, {stop}) outside axis {axis} of {x.shape}"
        )
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    return x[tuple(index)].copy()


def _embed_forward(
    x: np.ndarray, start: int, total: int, axis: int
) -> np.ndarray:
    shape = list(x.shape)
    if start + shape[axis] > total:
        raise ShapeError(
            f"embed: block of {shape[axis]} at {start} exceeds {total}"
        )
    shape[axis] = total
    out = np.zeros(shape)
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, start + x.shape[axis])
    out[tuple(index)] = x
    return out


register_op(
    "take",
    _take_forward,
    lambda rec, g, needs: (
        embed(
            g,
            rec.attrs["start"],
            rec.inputs[0].shape[rec.attrs["axis"]],
            rec.attrs["axis"],
        ),
    ),
)
register_op(
    "embed",
    _embed_forward,
    lambda rec, g, needs: (
        take(
            g,
            rec.attrs["start"],
            rec.attrs["start"] + rec.inputs[0].shape[rec.attrs["axis"]],
            rec.attrs["axis"],
        ),
    ),
)


def _concat_forward(*xs: np.ndarray, axis: int) -> np.ndarray:
    for x in xs[1:]:
        if x.ndim != xs[0].ndim or any(
            x.shape[d] != xs[0].shape[d] for d in range(x.ndim) if d != axis
        ):
            raise ShapeError(
                f"concat: incompatible shapes {[y.shape for y in xs]}"
            )
    return np.concatenate(xs, axis=axis)


def _concat_vjp(rec: OpRecord, g: Tensor, needs: tuple[bool, ...]):
    axis = rec.attrs["axis"]
    grads, start = [], 0
    for tensor, need in zip(rec.inputs, needs, strict=True):
        stop = start + tensor.shape[axis]
        grads.append(take(g, start, stop, axis) if need else None)
        start = stop
    return grads


register_op("concat", _concat_forward, _concat_vjp)


def matmul(a: Any, b: Any) -> Tensor:
    return record_op("matmul", (a, b))


def transpose(x: Any) -> Tensor:
    return record_op("transpose", (x,))


def reshape(x: Any, shape: Sequence[int]) -> Tensor:
    return record_op("reshape", (x,), shape=tuple(int(s) for s in shape))


def expand(x: Any, shape: Sequence[int]) -> Tensor:
    return record_op("expand", (x,), shape=tuple(int(s) for s in shape))


def take(x: Any, start: int, stop: int, axis: int = 1) -> Tensor:
    """Slice ``[start, stop)`` along ``axis``."""
    return record_op("take", (x,), start=start, stop=stop, axis=axis)


def embed(x: Any, start: int, total: int, axis: int = 1) -> Tensor:
    """Place ``x`` at ``start`` inside zeros of size ``total`` on ``axis``."""
    return record_op("embed", (x,), start=start, total=total, axis=axis)


def concat(tensors: Sequence[Any], axis: int = 1) -> Tensor:
    return record_op("concat", tuple(tensors), axis=axis)


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------

def _reduced_shape(x_shape: Shape, axis: int | None, keepdims: bool) -> Shape:
    if axis is None:
        return ()
    if keepdims:
        return tuple(1 if d == axis else s for d, s in enumerate(x_shape))
    return tuple(s for d, s in enumerate(x_shape) if d != axis)


def _spread(g: Tensor, x_shape: Shape, axis: int | None) -> Tensor:
    """Broadcast a reduced gradient back over the reduced axis.

    ``g`` arrives with or without the kept axis.  Full and axis-0
    reductions drop it so the leading-axis broadcast applies; any other
    axis keeps it as size 1.
    """
    if axis is None:
        return expand(reshape(g, ()), x_shape)
    axis %= len(x_shape)
    if axis == 0:
        g = reshape(g, x_shape[1:])
    else:
        g = reshape(g, _reduced_shape(x_shape, axis, keepdims=True))
    return expand(g, x_shape)


def _sum_forward(
    x: np.ndarray, axis: int | None, keepdims: bool
) -> np.ndarray:
    return np.sum(x, axis=axis, keepdims=keepdims)


def _mean_forward(
    x: np.ndarray, axis: int | None, keepdims: bool
) -> np.ndarray:
    if x.size == 0:
        raise ShapeError("mean: empty tensor")
    return np.mean(x, axis=axis, keepdims=keepdims)


def _count(shape: Shape, axis: int | None) -> int:
    if axis is None:
        return int(np.prod(shape, dtype=np.int64))
    return shape[axis]


register_op(
    "sum",
    _sum_forward,
    lambda rec, g, needs: (
        _spread(g, rec.inputs[0].shape, rec.attrs["axis"]),
    ),
)
register_op(
    "mean",
    _mean_forward,
    lambda rec, g, needs: (
        _spread(
            mul(g, 1.0 / _count(rec.inputs[0].shape, rec.attrs["axis"])),
            rec.inputs[0].shape,
            rec.attrs["axis"],
        ),
    ),
)


def _sqnorm_forward(x: np.ndarray, axis: int | None) -> np.ndarray:
    return np.sum(x * x, axis=axis)


register_op(
    "sqnorm",
    _sqnorm_forward,
    lambda rec, g, needs: (
        mul(
            _spread(g, rec.inputs[0].shape, rec.attrs["axis"]),
            mul(2.0, rec.inputs[0]),
        ),
    ),
)


def sum_(x: Any, axis: int | None = None, keepdims: bool = False) -> Tensor:
    return record_op("sum", (x,), axis=axis, keepdims=keepdims)


def mean(x: Any, axis: int | None = None, keepdims: bool = False) -> Tensor:
    return record_op("mean", (x,), axis=axis, keepdims=keepdims)


def sqnorm(x: Any, axis: int | None = None) -> Tensor:
    """Squared L2 norm of everything (``axis=None``) or of each row."""
    return record_op("sqnorm", (x,), axis=axis)


# ---------------------------------------------------------------------------
# Softmax and interpolation
# ---------------------------------------------------------------------------

def _log_softmax_forward(x: np.ndarray) -> np.ndarray:
    if x.ndim != 2:
        raise ShapeError(f"log_softmax: expected (batch, k), got {x.shape}")
    shifted = x - x.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _log_softmax_vjp(rec: OpRecord, g: Tensor, needs: tuple[bool, ...]):
    probs = exp(rec.output)
    return (sub(g, mul(probs, sum_(g, axis=1, keepdims=True))),)


register_op("log_softmax", _log_softmax_forward, _log_softmax_vjp)


def _lerp_forward(a: np.ndarray, b: np.ndarray, t: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeError(f"lerp: endpoints differ, {a.shape} vs {b.shape}")
    _broadcast_shape("lerp", a.shape, t.shape)
    return a + t * (b - a)


def _lerp_vjp(rec: OpRecord, g: Tensor, needs: tuple[bool, ...]):
    a, b, t = rec.inputs
    return (
        _unbroadcast(mul(g, sub(1.0, t)), a.shape) if needs[0] else None,
        _unbroadcast(mul(g, t), b.shape) if needs[1] else None,
        _unbroadcast(mul(g, sub(b, a)), t.shape) if needs[2] else None,
    )


register_op("lerp", _lerp_forward, _lerp_vjp)


def log_softmax(x: Any) -> Tensor:
    return record_op("log_softmax", (x,))


def lerp(a: Any, b: Any, t: Any) -> Tensor:
    """Affine interpolation ``a + t * (b - a)``."""
    return record_op("lerp", (a, b, t))


# ---------------------------------------------------------------------------
# Composites
# ---------------------------------------------------------------------------

# This function handles the variance work for this file.
def batch_variance(x: Tensor) -> tuple[Tensor, Tensor]:
    """Per-column mean and (population) variance over the batch axis."""
    mu = mean(x, axis=0)
    centered = sub(x, mu)
    return mu, mean(mul(centered, centered), axis=0)


def stop_gradient(x: Any) -> Tensor:
    return as_tensor(x).detach()


# ---------------------------------------------------------------------------
# Operator sugar
# ---------------------------------------------------------------------------

Tensor.__add__ = lambda self, other: add(self, other)
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = lambda self, other: sub(self, other)
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = lambda self, other: mul(self, other)
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__truediv__ = lambda self, other: div(self, other)
Tensor.__rtruediv__ = lambda self, other: div(other, self)
Tensor.__matmul__ = lambda self, other: matmul(self, other)
Tensor.__rmatmul__ = lambda self, other: matmul(other, self)
Tensor.__neg__ = lambda self: neg(self)
Tensor.T = property(lambda self: transpose(self))
Tensor.sum = lambda self, axis=None, keepdims=False: sum_(self, axis, keepdims)
Tensor.mean = lambda self, axis=None, keepdims=False: mean(
    self, axis, keepdims
)
