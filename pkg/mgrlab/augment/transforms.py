"""This file handles the strong transformation for the augment part.

RandAugment's job in consistency regularization is a strong, random,
input-differentiable perturbation.  On point data that job is done by a
per-sample composition of a planar rotation (first two coordinates), an
isotropic scaling and additive Gaussian noise.  Each sample draws
``ops_per_sample`` of the three operations in a random order.

Draws are separated from application: ``draw_transform`` samples the
random constants once and ``apply_transform`` replays them, which lets the
meta-gradient evaluate the same transformation at several parameter
points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mgrlab.augment.errors import AugmentError
from mgrlab.diffcore import RngStream, Tensor, ops

LATENT_NOISE_VARIANCE = 1e-3
_OPERATIONS = ("rotate", "scale", "noise")


# This class keeps the transform spec data and behavior in one place.
@dataclass(frozen=True)
class TransformSpec:
    rotation_max: float = 0.5
    scale_range: tuple[float, float] = (0.8, 1.2)
    noise_std: float = 0.05
    ops_per_sample: int = 2

    def validate(self) -> None:
        low, high = self.scale_range
        if low <= 0 or high <= 0 or low > high:
            raise AugmentError(
                f"scale range must be positive and ordered, got "
                f"{self.scale_range}"
            )
        if self.rotation_max < 0:
            raise AugmentError("rotation max must be non-negative")
        if self.noise_std < 0:
            raise AugmentError("noise std must be non-negative")
        if self.ops_per_sample < 1:
            raise AugmentError("ops per sample must be at least 1")

    @property
    def is_identity(self) -> bool:
        return (
            self.rotation_max == 0
            and self.scale_range == (1.0, 1.0)
            and self.noise_std == 0
        )


# This class keeps the transform draw data and behavior in one place.
@dataclass(frozen=True)
class TransformDraw:
    """Per-sample constants of x' = scale * R(angle) x + offset."""

    angle: np.ndarray
    scale: np.ndarray
    offset: np.ndarray

    def jacobian(self, row: int) -> np.ndarray:
        dim = self.offset.shape[1]
        jac = np.eye(dim) * self.scale[row]
        c, s = np.cos(self.angle[row]), np.sin(self.angle[row])
        if dim >= 2:
            jac[:2, :2] = self.scale[row] * np.array([[c, -s], [s, c]])
        return jac


def _rotate(vec: np.ndarray, angle: float) -> np.ndarray:
    out = vec.copy()
    c, s = np.cos(angle), np.sin(angle)
    out[0], out[1] = c * vec[0] - s * vec[1], s * vec[0] + c * vec[1]
    return out


# This function draws the transform work used in this file.
def draw_transform(
    batch: int,
    dim: int,
    spec: TransformSpec,
    rng: RngStream,
) -> TransformDraw:
    spec.validate()
    if dim < 2 and spec.rotation_max > 0:
        raise AugmentError("rotation needs at least two data dimensions")

    count = min(spec.ops_per_sample, len(_OPERATIONS))
    keys = rng.uniform(0.0, 1.0, (batch, len(_OPERATIONS)))
    order = np.argsort(keys, axis=1)
    angles = rng.uniform(-spec.rotation_max, spec.rotation_max, batch)
    scales = rng.uniform(spec.scale_range[0], spec.scale_range[1], batch)
    noise = rng.normal((batch, dim), scale=spec.noise_std)

    angle = np.zeros(batch)
    scale = np.ones(batch)
    offset = np.zeros((batch, dim))
    for i in range(batch):
        for op in order[i, :count]:
            name = _OPERATIONS[op]
            if name == "rotate" and dim >= 2:
                angle[i] += angles[i]
                offset[i] = _rotate(offset[i], angles[i])
            elif name == "scale":
                scale[i] *= scales[i]
                offset[i] *= scales[i]
            elif name == "noise":
                offset[i] += noise[i]
    return TransformDraw(angle=angle, scale=scale, offset=offset)


# This function applies the transform work used in this file.
def apply_transform(x: Tensor, draw: TransformDraw) -> Tensor:
    """Differentiable in ``x``; the drawn constants carry no gradient."""
    n, dim = x.shape
    scale = draw.scale[:, None]
    if dim < 2:
        return ops.add(ops.mul(Tensor(scale), x), Tensor(draw.offset))

    cos = Tensor(scale * np.cos(draw.angle)[:, None])
    sin = Tensor(scale * np.sin(draw.angle)[:, None])
    x0 = ops.take(x, 0, 1)
    x1 = ops.take(x, 1, 2)
    parts = [
        ops.sub(ops.mul(cos, x0), ops.mul(sin, x1)),
        ops.add(ops.mul(sin, x0), ops.mul(cos, x1)),
    ]
    if dim > 2:
        parts.append(ops.mul(Tensor(scale), ops.take(x, 2, dim)))
    return ops.add(ops.concat(parts, axis=1), Tensor(draw.offset))


# This function applies the strong transform work used in this file.
def strong_transform(x: Tensor, spec: TransformSpec, rng: RngStream) -> Tensor:
    draw = draw_transform(x.shape[0], x.shape[1], spec, rng)
    return apply_transform(x, draw)


# This function draws the latent noise work used in this file.
def draw_latent_noise(
    shape: tuple[int, int],
    rng: RngStream,
    variance: float = LATENT_NOISE_VARIANCE,
) -> np.ndarray:
    return rng.normal(shape, scale=float(np.sqrt(variance)))


# This function perturbs the latent work used in this file.
def latent_perturb(
    z: Tensor,
    rng: RngStream,
    variance: float = LATENT_NOISE_VARIANCE,
) -> Tensor:
    """z' = z + s with s ~ N(0, variance) per coordinate."""
    return ops.add(z, Tensor(draw_latent_noise(z.shape, rng, variance)))
