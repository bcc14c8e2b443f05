"""Deterministic reverse-mode differentiation for the laboratory models."""

from mgrlab.diffcore import ops
from mgrlab.diffcore.errors import ContractError, NumericError, ShapeError
from mgrlab.diffcore.gradcheck import grad_check
from mgrlab.diffcore.optim import (
    OptState,
    adam_state,
    optimizer_step,
    sgd_state,
    step_decay,
)
from mgrlab.diffcore.rng import RngStream
from mgrlab.diffcore.tensor import (
    Tape,
    Tensor,
    as_tensor,
    backward,
    gradient,
    no_record,
    record_op,
    registered_kinds,
)

__all__ = [
    "ContractError",
    "NumericError",
    "OptState",
    "RngStream",
    "ShapeError",
    "Tape",
    "Tensor",
    "adam_state",
    "as_tensor",
    "backward",
    "grad_check",
    "gradient",
    "no_record",
    "ops",
    "optimizer_step",
    "record_op",
    "registered_kinds",
    "sgd_state",
    "step_decay",
]
