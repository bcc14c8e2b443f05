"""Hypergradients of the validation loss with respect to the finder.

The classifier takes one virtual step on its training objective,

    theta' = theta - eta * grad_theta(L(theta) + lam * L_p(theta, phi)),

and the finder is scored by the validation loss at ``theta'``.  The only
route from ``phi`` to that loss runs through the pseudo term ``L_p``, so

    d L_val(theta') / d phi = -eta * lam * d2 L_p / d phi d theta . v,
    v = grad L_val(theta').

``meta_gradient_fd`` approximates the mixed second derivative with a
central difference of first-order finder gradients at
``theta +- eps * v``, ``eps = eps_const / |v|``.  ``meta_gradient_exact``
differentiates the unrolled virtual step with nested tapes and serves as
the oracle.

Everything is written against a ``BilevelProblem`` of plain callables, so
the same code handles PCR, pseudo cross-entropy, latent augmentation and
hand-built quadratics.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from mgrlab.diffcore import Tape, Tensor, gradient, ops
from mgrlab.metalearn.errors import DegenerateEpsilonError

logger = logging.getLogger(__name__)

MIN_VAL_GRAD_NORM = 1e-12

ThetaFn = Callable[[Sequence[Tensor]], Tensor]
PseudoFn = Callable[[Sequence[Tensor], Sequence[Tensor]], Tensor]


# This class keeps the bilevel problem data and behavior in one place.
@dataclass
class BilevelProblem:
    """One finder meta step, with every random draw already fixed.

    ``theta`` and ``phi`` are the live parameter leaves; the callables
    receive replacement tensor lists in the same order.
    """

    theta: list[Tensor]
    phi: list[Tensor]
    train_loss: ThetaFn
    pseudo_loss: PseudoFn
    val_loss: ThetaFn
    lam: float
    inner_lr: float
    penalty: Callable[[Sequence[Tensor]], Tensor] | None = None
    lam_kl: float = 0.0
    trace: Callable[[str], None] | None = None

    def inner_objective(
        self, theta: Sequence[Tensor], phi: Sequence[Tensor]
    ) -> Tensor:
        loss = self.train_loss(theta)
        if self.lam == 0:
            return loss
        return ops.add(loss, ops.mul(self.lam, self.pseudo_loss(theta, phi)))

    def _emit(self, event: str) -> None:
        if self.trace is not None:
            self.trace(event)


def _zeros(tensors: Sequence[Tensor]) -> list[np.ndarray]:
    return [np.zeros_like(t.values) for t in tensors]


def _penalty_grads(problem: BilevelProblem) -> list[np.ndarray] | None:
    if problem.penalty is None or problem.lam_kl == 0:
        return None
    with Tape() as tape:
        penalty = problem.penalty(problem.phi)
    grads = gradient(tape, penalty, problem.phi)
    return [problem.lam_kl * g.values for g in grads]


# This function computes the inner update work used in this file.
def inner_update(
    problem: BilevelProblem,
    create_graph: bool = False,
) -> list[Tensor]:
    """Virtual plain-SGD step; the live ``theta`` is never written.

    Without ``create_graph`` the result is a list of fresh leaves.  With
    it, the step is recorded on the enclosing tapes so they can
    differentiate through it.
    """
    with Tape() as tape:
        objective = problem.inner_objective(problem.theta, problem.phi)
    grads = gradient(tape, objective, problem.theta, create_graph=create_graph)
    for param in problem.theta:
        param.zero_grad()
    problem._emit("virtual_step")

    eta = problem.inner_lr
    if create_graph:
        return [
            ops.sub(param, ops.mul(eta, grad))
            for param, grad in zip(problem.theta, grads, strict=True)
        ]
    return [
        Tensor(param.values - eta * grad.values, requires_grad=True)
        for param, grad in zip(problem.theta, grads, strict=True)
    ]


def _finder_grads(
    problem: BilevelProblem, theta: Sequence[Tensor]
) -> list[np.ndarray]:
    with Tape() as tape:
        loss = problem.pseudo_loss(theta, problem.phi)
    grads = gradient(tape, loss, problem.phi)
    for param in problem.phi:
        param.zero_grad()
    return [g.values for g in grads]


# This function computes the finite-difference meta gradient work.
def meta_gradient_fd(
    problem: BilevelProblem,
    eps_const: float = 0.01,
) -> list[np.ndarray]:
    """Finite-difference hypergradient plus the finder penalty gradient.

    Raises ``DegenerateEpsilonError`` when the validation gradient at the
    virtual parameters vanishes.
    """
    if not problem.phi:
        return []
    virtual = inner_update(problem)
    result = _zeros(problem.phi)

    if problem.lam != 0 and problem.inner_lr != 0:
        with Tape() as tape:
            val = problem.val_loss(virtual)
        direction = [g.values for g in gradient(tape, val, virtual)]
        norm = float(np.sqrt(sum(np.sum(d * d) for d in direction)))
        if norm < MIN_VAL_GRAD_NORM:
            raise DegenerateEpsilonError(norm)
        eps = eps_const / norm

        plus = [
            Tensor(p.values + eps * d)
            for p, d in zip(problem.theta, direction, strict=True)
        ]
        minus = [
            Tensor(p.values - eps * d)
            for p, d in zip(problem.theta, direction, strict=True)
        ]
        grad_plus = _finder_grads(problem, plus)
        grad_minus = _finder_grads(problem, minus)
        scale = -problem.inner_lr * problem.lam / (2.0 * eps)
        result = [
            scale * (gp - gm)
            for gp, gm in zip(grad_plus, grad_minus, strict=True)
        ]
        logger.debug("fd meta step: |v|=%.3e eps=%.3e", norm, eps)

    penalty = _penalty_grads(problem)
    if penalty is not None:
        result = [r + p for r, p in zip(result, penalty, strict=True)]
    return result


# This function computes the exact meta gradient work used in this file.
def meta_gradient_exact(problem: BilevelProblem) -> list[np.ndarray]:
    """Second-order hypergradient through the unrolled virtual step."""
    if not problem.phi:
        return []
    with Tape() as outer:
        virtual = inner_update(problem, create_graph=True)
        val = problem.val_loss(virtual)
    grads = gradient(outer, val, problem.phi)
    for param in (*problem.theta, *problem.phi):
        param.zero_grad()
    result = [g.values.copy() for g in grads]

    penalty = _penalty_grads(problem)
    if penalty is not None:
        result = [r + p for r, p in zip(result, penalty, strict=True)]
    return result


# This function computes the meta gradient work used in this file.
def meta_gradient(
    problem: BilevelProblem,
    mode: str = "fd",
    eps_const: float = 0.01,
) -> list[np.ndarray]:
    if mode == "exact":
        return meta_gradient_exact(problem)
    return meta_gradient_fd(problem, eps_const)


# This function computes the validation objective work used in this file.
def validation_after_step(
    problem: BilevelProblem, phi: Sequence[Tensor]
) -> float:
    """L_val(theta') with the finder replaced by ``phi``.

    Used by tests to finite-difference the whole pipeline over ``phi``.
    """
    shadow = BilevelProblem(
        theta=problem.theta,
        phi=list(problem.phi),
        train_loss=problem.train_loss,
        pseudo_loss=lambda theta, _phi: problem.pseudo_loss(theta, phi),
        val_loss=problem.val_loss,
        lam=problem.lam,
        inner_lr=problem.inner_lr,
    )
    virtual = inner_update(shadow)
    return problem.val_loss(virtual).item()
