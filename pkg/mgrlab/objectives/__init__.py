"""Task, pseudo, consistency and finder losses."""

from mgrlab.objectives.errors import LossError
from mgrlab.objectives.losses import (
    KL_FORMS,
    LAMBDA_RANGE,
    SSL_FORMS,
    Batch,
    LossWeights,
    gda_objective,
    kl_penalty,
    latent_augment_loss,
    multihead_loss,
    pcr_loss,
    pseudo_cross_entropy,
    ssl_consistency_loss,
    task_loss,
)

__all__ = [
    "KL_FORMS",
    "LAMBDA_RANGE",
    "SSL_FORMS",
    "Batch",
    "LossError",
    "LossWeights",
    "gda_objective",
    "kl_penalty",
    "latent_augment_loss",
    "multihead_loss",
    "pcr_loss",
    "pseudo_cross_entropy",
    "ssl_consistency_loss",
    "task_loss",
]
