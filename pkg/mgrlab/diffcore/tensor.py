"""Tensors and explicit, single-use tapes for reverse-mode differentiation.

Every differentiable operation goes through ``record_op``.  The operation
is evaluated eagerly and then appended to each *active* tape that tracks
at least one of its inputs.  A tape tracks:

1. leaves created with ``requires_grad=True`` (parameters, inputs under
   test), and
2. every tensor produced by an operation it recorded.

Tapes nest.  When ``backward`` runs with ``create_graph=True`` the
vector-Jacobian products are themselves evaluated through ``record_op``, so
an outer tape sees the gradient computation as ordinary recorded work and
can differentiate through it.  That is the only route to second-order
derivatives in the engine.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from mgrlab.diffcore.errors import ContractError, NumericError

logger = logging.getLogger(__name__)

_TAPE_SERIALS = itertools.count(1)
_ACTIVE: list[Tape] = []
_REGISTRY: dict[str, OpDef] = {}


# ---------------------------------------------------------------------------
# Tensors
# ---------------------------------------------------------------------------

# This class keeps the tensor data and behavior in one place.
class Tensor:
    """Dense double-precision array with a gradient slot.

    ``values`` is row-major float64.  ``grad`` stays ``None`` until a
    backward pass reaches the tensor, then holds a ``Tensor`` of the same
    shape.
    """

    __slots__ = ("values", "grad", "requires_grad", "name", "_nodes")
    __array_priority__ = 100

    def __init__(
        self,
        values: Any,
        requires_grad: bool = False,
        name: str | None = None,
    ) -> None:
        self.values = np.array(values, dtype=np.float64)
        self.grad: Tensor | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._nodes: dict[int, int] = {}

    @classmethod
    def wrap(cls, values: np.ndarray) -> Tensor:
        """Adopt an already-owned float64 array without copying it."""
        tensor = cls.__new__(cls)
        tensor.values = values
        tensor.grad = None
        tensor.requires_grad = False
        tensor.name = None
        tensor._nodes = {}
        return tensor

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def node_id(self) -> tuple[int, int] | None:
        """(tape serial, record index) on the innermost tape holding it."""
        for tape in reversed(_ACTIVE):
            index = self._nodes.get(tape.serial)
            if index is not None:
                return tape.serial, index
        if self._nodes:
            serial, index = next(reversed(self._nodes.items()))
            return serial, index
        return None

    def item(self) -> float:
        if self.values.size != 1:
            raise ContractError(
                f"item() needs a single element, tensor has shape {self.shape}"
            )
        return float(self.values.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.values.copy()

    def detach(self) -> Tensor:
        """Return a constant copy that no tape tracks."""
        return Tensor(self.values)

    def zero_grad(self) -> None:
        self.grad = None

    def __len__(self) -> int:
        return len(self.values)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{flag}{label})"


# This function handles the as tensor work for this file.
def as_tensor(value: Any) -> Tensor:
    """Return ``value`` unchanged if it is a Tensor, else a constant."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


# ---------------------------------------------------------------------------
# Tapes and records
# ---------------------------------------------------------------------------

# This class keeps the op record data and behavior in one place.
@dataclass(slots=True)
class OpRecord:
    kind: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    attrs: dict[str, Any] = field(default_factory=dict)


# This class keeps the op definition data and behavior in one place.
@dataclass(frozen=True)
class OpDef:
    """Forward rule on raw arrays and vector-Jacobian rule on Tensors.

    ``vjp(record, upstream, needs)`` returns one entry per input; entries
    whose ``needs`` flag is false may be ``None``.
    """

    kind: str
    forward: Callable[..., np.ndarray]
    vjp: Callable[[OpRecord, Tensor, tuple[bool, ...]], Sequence[Any]]


# This class keeps the tape data and behavior in one place.
class Tape:
    """Ordered record of operations, consumed by exactly one backward pass."""

    def __init__(self) -> None:
        self.serial = next(_TAPE_SERIALS)
        self.records: list[OpRecord] = []
        self.consumed = False

    def __enter__(self) -> Tape:
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc: Any) -> None:
        for position in range(len(_ACTIVE) - 1, -1, -1):
            if _ACTIVE[position] is self:
                del _ACTIVE[position]
                break

    def __len__(self) -> int:
        return len(self.records)

    def tracks(self, tensor: Tensor) -> bool:
        return tensor.requires_grad or self.serial in tensor._nodes

    def _append(self, record: OpRecord) -> int:
        self.records.append(record)
        return len(self.records) - 1

    def __repr__(self) -> str:
        state = "consumed" if self.consumed else "open"
        return f"<Tape {self.serial} records={len(self.records)} {state}>"


# This function handles the register op work for this file.
def register_op(
    kind: str,
    forward: Callable[..., np.ndarray],
    vjp: Callable[[OpRecord, Tensor, tuple[bool, ...]], Sequence[Any]],
) -> None:
    if kind in _REGISTRY:
        raise ContractError(f"op kind '{kind}' is already registered")
    _REGISTRY[kind] = OpDef(kind, forward, vjp)


# This function handles the registered kinds work for this file.
def registered_kinds() -> list[str]:
    return sorted(_REGISTRY)


# This function records the op work used in this file.
def record_op(kind: str, inputs: Sequence[Any], **attrs: Any) -> Tensor:
    """Evaluate ``kind`` on ``inputs`` and append it to the active tapes."""
    op = _REGISTRY.get(kind)
    if op is None:
        raise ContractError(f"unknown op kind '{kind}'")

    tensors = tuple(as_tensor(value) for value in inputs)
    with np.errstate(all="ignore"):
        values = op.forward(*(t.values for t in tensors), **attrs)
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NumericError(kind, f"output shape {values.shape}")

    out = Tensor.wrap(values)
    for tape in _ACTIVE:
        if tape.consumed:
            continue
        if any(tape.tracks(t) for t in tensors):
            record = OpRecord(kind, tensors, out, attrs)
            out._nodes[tape.serial] = tape._append(record)
    return out


@contextmanager
def no_record() -> Iterator[None]:
    """Evaluate operations without appending them to any tape."""
    saved = list(_ACTIVE)
    _ACTIVE.clear()
    try:
        yield
    finally:
        _ACTIVE[:] = saved


@contextmanager
def _recording_without(tape: Tape) -> Iterator[None]:
    saved = list(_ACTIVE)
    _ACTIVE[:] = [t for t in saved if t is not tape]
    try:
        yield
    finally:
        _ACTIVE[:] = saved


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------

def _backprop(
    tape: Tape,
    output: Tensor,
    create_graph: bool,
) -> dict[int, tuple[Tensor, Tensor]]:
    if output.size != 1:
        raise ContractError(
            f"backward needs a scalar output, got shape {output.shape}"
        )
    start = output._nodes.get(tape.serial)
    if start is None:
        raise ContractError("output was not recorded on this tape")
    if tape.consumed:
        raise ContractError(
            "tape already consumed by a backward pass; re-record the "
            "computation"
        )
    tape.consumed = True

    # Local import keeps the op table free of import cycles.
    from mgrlab.diffcore import ops

    pending: dict[int, Tensor] = {
        start: Tensor.wrap(np.ones_like(output.values))
    }
    leaves: dict[int, tuple[Tensor, Tensor]] = {}

    scope = _recording_without(tape) if create_graph else no_record()
    with scope:
        for index in range(start, -1, -1):
            upstream = pending.pop(index, None)
            if upstream is None:
                continue
            record = tape.records[index]
            needs = tuple(tape.tracks(t) for t in record.inputs)
            contributions = _REGISTRY[record.kind].vjp(
                record, upstream, needs
            )
            for tensor, need, grad in zip(
                record.inputs, needs, contributions, strict=True
            ):
                if not need or grad is None:
                    continue
                parent = tensor._nodes.get(tape.serial)
                if parent is not None:
                    previous = pending.get(parent)
                    pending[parent] = (
                        grad if previous is None else ops.add(previous, grad)
                    )
                    continue
                previous_leaf = leaves.get(id(tensor))
                leaves[id(tensor)] = (
                    tensor,
                    grad
                    if previous_leaf is None
                    else ops.add(previous_leaf[1], grad),
                )
    return leaves


# This function runs the backward work used in this file.
def backward(
    tape: Tape,
    output: Tensor,
    create_graph: bool = False,
) -> None:
    """Fill ``grad`` on every leaf reachable from ``output``.

    Leaves the pass never reaches keep whatever ``grad`` they had (``None``
    for fresh tensors).
    """
    for tensor, grad in _backprop(tape, output, create_graph).values():
        tensor.grad = grad


# This function computes the gradient work used in this file.
def gradient(
    tape: Tape,
    output: Tensor,
    sources: Sequence[Tensor],
    create_graph: bool = False,
) -> list[Tensor]:
    """Return d(output)/d(source) for each leaf in ``sources``.

    Unreachable sources get exact zeros.  With ``create_graph`` the returned
    tensors are tracked by the tapes still active, so they can feed a
    further differentiable computation.
    """
    for source in sources:
        if not source.requires_grad:
            raise ContractError(
                "gradient sources must be leaves created with "
                "requires_grad=True"
            )
    leaves = _backprop(tape, output, create_graph)
    grads = []
    for source in sources:
        entry = leaves.get(id(source))
        if entry is None:
            grads.append(Tensor.wrap(np.zeros_like(source.values)))
            continue
        source.grad = entry[1]
        grads.append(entry[1])
    return grads
