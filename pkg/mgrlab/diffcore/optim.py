"""This file handles the optimizers for the diffcore part of the project."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from mgrlab.diffcore.errors import ContractError
from mgrlab.diffcore.tensor import Tensor


# This class keeps the optimizer state data and behavior in one place.
@dataclass
class OptState:
    """Buffers for momentum SGD (``kind="sgd"``) or Adam (``kind="adam"``).

    ``first`` holds momentum buffers for SGD and first moments for Adam;
    ``second`` is only used by Adam.
    """

    kind: str
    lr: float
    momentum: float = 0.0
    nesterov: bool = False
    weight_decay: float = 0.0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    first: list[np.ndarray] = field(default_factory=list)
    second: list[np.ndarray] = field(default_factory=list)


# This function creates the sgd state work used in this file.
def sgd_state(
    params: Sequence[Tensor],
    lr: float,
    momentum: float = 0.9,
    nesterov: bool = False,
    weight_decay: float = 0.0,
) -> OptState:
    return OptState(
        kind="sgd",
        lr=lr,
        momentum=momentum,
        nesterov=nesterov,
        weight_decay=weight_decay,
        first=[np.zeros_like(p.values) for p in params],
    )


# This function creates the adam state work used in this file.
def adam_state(
    params: Sequence[Tensor],
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> OptState:
    return OptState(
        kind="adam",
        lr=lr,
        betas=betas,
        eps=eps,
        first=[np.zeros_like(p.values) for p in params],
        second=[np.zeros_like(p.values) for p in params],
    )


def _grad_values(grad: Tensor | np.ndarray) -> np.ndarray:
    return grad.values if isinstance(grad, Tensor) else np.asarray(grad)


# This function applies the optimizer step work used in this file.
def optimizer_step(
    state: OptState,
    params: Sequence[Tensor],
    grads: Sequence[Tensor | np.ndarray],
) -> None:
    """Update ``params`` in place and advance the buffers in ``state``."""
    if len(params) != len(grads) or len(params) != len(state.first):
        raise ContractError(
            f"optimizer_step: {len(params)} params, {len(grads)} grads, "
            f"{len(state.first)} buffers"
        )
    state.step += 1
    for index, (param, grad) in enumerate(zip(params, grads, strict=True)):
        g = _grad_values(grad)
        if g.shape != param.shape:
            raise ContractError(
                f"optimizer_step: grad {g.shape} does not match param "
                f"{param.shape}"
            )
        if state.kind == "sgd":
            _sgd_update(state, index, param, g)
        elif state.kind == "adam":
            _adam_update(state, index, param, g)
        else:
            raise ContractError(f"unknown optimizer kind '{state.kind}'")


def _sgd_update(
    state: OptState, index: int, param: Tensor, g: np.ndarray
) -> None:
    if state.weight_decay:
        g = g + state.weight_decay * param.values
    buf = state.first[index]
    buf *= state.momentum
    buf += g
    direction = g + state.momentum * buf if state.nesterov else buf
    param.values -= state.lr * direction


def _adam_update(
    state: OptState, index: int, param: Tensor, g: np.ndarray
) -> None:
    beta1, beta2 = state.betas
    m, v = state.first[index], state.second[index]
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1**state.step)
    v_hat = v / (1.0 - beta2**state.step)
    param.values -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


# This function handles the step decay work for this file.
def step_decay(
    base_lr: float,
    epoch: int,
    milestones: Sequence[int],
    gamma: float = 0.1,
) -> float:
    """Learning rate after decaying by ``gamma`` at each passed milestone."""
    passed = sum(1 for m in milestones if epoch >= m)
    return base_lr * gamma**passed
