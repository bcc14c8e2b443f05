"""Strong transformations and latent perturbations."""

from mgrlab.augment.errors import AugmentError
from mgrlab.augment.transforms import (
    LATENT_NOISE_VARIANCE,
    TransformDraw,
    TransformSpec,
    apply_transform,
    draw_latent_noise,
    draw_transform,
    latent_perturb,
    strong_transform,
)

__all__ = [
    "LATENT_NOISE_VARIANCE",
    "AugmentError",
    "TransformDraw",
    "TransformSpec",
    "apply_transform",
    "draw_latent_noise",
    "draw_transform",
    "latent_perturb",
    "strong_transform",
]
