"""This file handles the loss functions for the objectives part of the project.

Every loss returns a scalar ``Tensor`` recorded on whatever tapes are
active, so the same function serves plain training, the virtual inner
step and both hypergradient modes.  Callers that need the random draws of
a transformation to stay fixed pass a ``TransformDraw`` instead of a spec
and stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mgrlab.augment import (
    LATENT_NOISE_VARIANCE,
    TransformDraw,
    TransformSpec,
    apply_transform,
    draw_latent_noise,
    draw_transform,
)
from mgrlab.diffcore import RngStream, Tensor, no_record, ops
from mgrlab.models import FeatureExtractor, LeakyGenerator, MainModel
from mgrlab.models.networks import Params
from mgrlab.objectives.errors import LossError

KL_FORMS = ("printed", "stddev")
SSL_FORMS = ("kl", "squared-logits")
LAMBDA_RANGE = (0.1, 1.0)


# This class keeps the loss weights data and behavior in one place.
@dataclass(frozen=True)
class LossWeights:
    lam: float = 0.5
    lam_kl: float = 0.01

    def validate(self) -> None:
        low, high = LAMBDA_RANGE
        if not low - 1e-12 <= self.lam <= high + 1e-12:
            raise LossError(
                f"lambda must lie in the grid domain [{low}, {high}], "
                f"got {self.lam}"
            )
        if self.lam_kl < 0:
            raise LossError(f"lambda_kl must be >= 0, got {self.lam_kl}")


# This class keeps the batch data and behavior in one place.
@dataclass(frozen=True)
class Batch:
    """Inputs with integer labels; pseudo batches carry conditioning labels."""

    x: Tensor
    y: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "y", np.asarray(self.y, dtype=np.int64))
        if self.x.shape[0] != self.y.shape[0]:
            raise LossError(
                f"batch has {self.x.shape[0]} rows but {self.y.shape[0]} "
                f"labels"
            )

    def __len__(self) -> int:
        return int(self.y.shape[0])

    @classmethod
    def empty(cls, dim: int) -> Batch:
        return cls(Tensor(np.zeros((0, dim))), np.zeros(0, dtype=np.int64))


def _features(
    net: FeatureExtractor | MainModel,
    x: Tensor,
    params: Params | None,
) -> Tensor:
    if isinstance(net, MainModel):
        return net.features(x, params)
    return net.forward(x, params)


def _resolve_draw(
    x: Tensor,
    transform: TransformSpec | TransformDraw,
    rng: RngStream | None,
) -> TransformDraw:
    if isinstance(transform, TransformDraw):
        return transform
    if rng is None:
        raise LossError("a transform spec needs an rng stream to draw from")
    return draw_transform(x.shape[0], x.shape[1], transform, rng)


# ---------------------------------------------------------------------------
# Supervised terms
# ---------------------------------------------------------------------------

# This function computes the task loss work used in this file.
def task_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy over the batch."""
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise LossError(f"expected {n} labels, got shape {labels.shape}")
    if n == 0:
        raise LossError("cross-entropy needs at least one row")
    if labels.min() < 0 or labels.max() >= k:
        raise LossError(
            f"labels must lie in [0, {k}), got [{labels.min()}, "
            f"{labels.max()}]"
        )
    one_hot = np.zeros((n, k))
    one_hot[np.arange(n), labels] = 1.0
    log_probs = ops.log_softmax(logits)
    picked = ops.sum_(ops.mul(Tensor(one_hot), log_probs), axis=1)
    return ops.neg(ops.mean(picked))


# This function computes the pseudo cross-entropy work used in this file.
def pseudo_cross_entropy(
    model: MainModel,
    pseudo: Batch,
    params: Params | None = None,
    aux: bool = False,
) -> Tensor:
    """Cross-entropy on synthetic samples; zero for an empty batch."""
    if len(pseudo) == 0:
        return Tensor(0.0)
    forward = model.classify_aux if aux else model.classify
    return task_loss(forward(pseudo.x, params), pseudo.y)


# This function computes the gda objective work used in this file.
def gda_objective(
    model: MainModel,
    real: Batch,
    pseudo: Batch,
    lam: float,
    params: Params | None = None,
) -> Tensor:
    """L + lambda * L_p with cross-entropy on both terms."""
    loss = task_loss(model.classify(real.x, params), real.y)
    if lam == 0 or len(pseudo) == 0:
        return loss
    return ops.add(
        loss, ops.mul(lam, pseudo_cross_entropy(model, pseudo, params))
    )


# This function computes the multihead loss work used in this file.
def multihead_loss(
    model: MainModel,
    real: Batch,
    pseudo: Batch,
    lam: float,
    params: Params | None = None,
) -> Tensor:
    """Real samples through h_omega, synthetic ones through h_omega_p."""
    if model.aux_head is None:
        raise LossError("multi-head loss needs a model with an aux head")
    loss = task_loss(model.classify(real.x, params), real.y)
    if lam == 0 or len(pseudo) == 0:
        return loss
    return ops.add(
        loss,
        ops.mul(lam, pseudo_cross_entropy(model, pseudo, params, aux=True)),
    )


# ---------------------------------------------------------------------------
# Consistency terms
# ---------------------------------------------------------------------------

# This function computes the pcr loss work used in this file.
def pcr_loss(
    net: FeatureExtractor | MainModel,
    x_p: Tensor,
    transform: TransformSpec | TransformDraw,
    rng: RngStream | None = None,
    params: Params | None = None,
) -> Tensor:
    """Mean squared feature distance between T(x_p) and x_p.

    Only the feature extractor is read, so the head never receives
    gradient.  Neither branch is detached.
    """
    if x_p.shape[0] == 0:
        return Tensor(0.0)
    draw = _resolve_draw(x_p, transform, rng)
    clean = _features(net, x_p, params)
    strong = _features(net, apply_transform(x_p, draw), params)
    return ops.mean(ops.sqnorm(ops.sub(strong, clean), axis=1))


# This function computes the ssl consistency loss work used in this file.
def ssl_consistency_loss(
    model: MainModel,
    x_p: Tensor,
    transform: TransformSpec | TransformDraw,
    rng: RngStream | None = None,
    form: str = "kl",
    params: Params | None = None,
    clean_logits: np.ndarray | None = None,
) -> Tensor:
    """UDA-style consistency on the whole classifier.

    ``kl`` is KL(p(y|x_p) || p(y|T(x_p))) with the clean prediction held
    constant; ``squared-logits`` is the squared distance between the
    strong logits and the constant clean logits.

    ``clean_logits`` supplies that constant target directly.  Pass it when
    ``x_p`` is perturbed but the target must stay fixed, as in a gradient
    check.
    """
    if form not in SSL_FORMS:
        raise LossError(
            f"unknown ssl form '{form}', expected one of {SSL_FORMS}"
        )
    if x_p.shape[0] == 0:
        return Tensor(0.0)
    draw = _resolve_draw(x_p, transform, rng)
    if clean_logits is None:
        with no_record():
            clean_logits = model.classify(x_p.detach(), params).values
    else:
        clean_logits = np.asarray(clean_logits, dtype=np.float64)
        if clean_logits.shape != (x_p.shape[0], model.num_classes):
            raise LossError(
                f"clean logits must have shape "
                f"{(x_p.shape[0], model.num_classes)}, got "
                f"{clean_logits.shape}"
            )
    strong_logits = model.classify(apply_transform(x_p, draw), params)

    if form == "squared-logits":
        diff = ops.sub(strong_logits, Tensor(clean_logits))
        return ops.mean(ops.sqnorm(diff, axis=1))

    shifted = clean_logits - clean_logits.max(axis=1, keepdims=True)
    log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    p = np.exp(log_p)
    cross = ops.sum_(
        ops.mul(Tensor(p), ops.log_softmax(strong_logits)), axis=1
    )
    entropy = Tensor((p * log_p).sum(axis=1))
    return ops.mean(ops.sub(entropy, cross))


# This function computes the latent augment loss work used in this file.
def latent_augment_loss(
    net: FeatureExtractor | MainModel,
    gen: LeakyGenerator,
    z: Tensor,
    labels: np.ndarray,
    rng: RngStream | None = None,
    noise: np.ndarray | None = None,
    variance: float = LATENT_NOISE_VARIANCE,
    params: Params | None = None,
) -> Tensor:
    """Mean squared feature distance between G(z, y) and G(z + s, y)."""
    if z.shape[0] == 0:
        return Tensor(0.0)
    if noise is None:
        if rng is None:
            raise LossError("latent augmentation needs noise or an rng")
        noise = draw_latent_noise(z.shape, rng, variance)
    clean = _features(net, gen.generate(z, labels), params)
    shifted = gen.generate(ops.add(z, Tensor(noise)), labels)
    moved = _features(net, shifted, params)
    return ops.mean(ops.sqnorm(ops.sub(moved, clean), axis=1))


# ---------------------------------------------------------------------------
# Finder penalty
# ---------------------------------------------------------------------------

# This function computes the kl penalty work used in this file.
def kl_penalty(z_out: Tensor, form: str = "printed") -> Tensor:
    """-1/2 (1 + log s - mu^2 - s) averaged over latent coordinates.

    ``mu`` and the batch variance are taken per coordinate over the finder
    outputs.  ``printed`` uses the variance for ``s``; ``stddev`` uses its
    square root.
    """
    if form not in KL_FORMS:
        raise LossError(
            f"unknown kl form '{form}', expected one of {KL_FORMS}"
        )
    if z_out.ndim != 2 or z_out.shape[0] < 2:
        raise LossError(
            f"kl penalty needs a batch of at least 2 rows, got {z_out.shape}"
        )
    mu, var = ops.batch_variance(z_out)
    log_var = ops.log(var)
    if form == "printed":
        sigma, log_sigma = var, log_var
    else:
        log_sigma = ops.mul(0.5, log_var)
        sigma = ops.exp(log_sigma)
    inner = ops.sub(
        ops.sub(ops.add(1.0, log_sigma), ops.mul(mu, mu)), sigma
    )
    return ops.mul(-0.5, ops.mean(inner))
