"""Analytic conditional generator with a latent-controlled leakage region.

The generator stands in for a trained conditional GAN.  For class ``y`` it
produces a point near the class mode, shaped by the latent tail ``z[:, 1:]``
through a fixed per-class projection.  The first latent coordinate drives a
sigmoid gate; above the threshold the sample slides toward the mode of the
leak target ``(y + 1) mod K``, which is exactly the class-leakage failure a
real generator exhibits.  Because the gate is smooth, gradients flow from
the sample back to ``z`` everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from mgrlab.diffcore import RngStream, Tensor, ops
from mgrlab.models.errors import ModelError

# Gate threshold used when the requested leak rate is zero.
MAX_THRESHOLD = 8.0


# This function handles the leak threshold work for this file.
def leak_threshold(leak_rate: float) -> float:
    """Standard-normal quantile giving ``P(z1 > tau) = leak_rate``."""
    if not 0.0 <= leak_rate < 1.0:
        raise ModelError(f"leak rate must lie in [0, 1), got {leak_rate}")
    if leak_rate == 0.0:
        return MAX_THRESHOLD
    return float(min(ndtri(1.0 - leak_rate), MAX_THRESHOLD))


# This function builds the projections work used in this file.
def random_projections(
    num_classes: int,
    latent_dim: int,
    data_dim: int,
    rng: RngStream,
) -> np.ndarray:
    """Per-class maps from the latent tail to data space.

    When the tail is at least as wide as the data the columns are
    orthonormal, so ``z_tail @ P`` is standard normal in data space.
    """
    tail = latent_dim - 1
    projections = np.empty((num_classes, tail, data_dim))
    for c in range(num_classes):
        raw = rng.normal((max(tail, data_dim), max(tail, data_dim)))
        q, r = np.linalg.qr(raw)
        q = q * np.sign(np.diag(r))
        projections[c] = q[:tail, :data_dim]
    return projections


# This class keeps the leaky generator data and behavior in one place.
@dataclass
class LeakyGenerator:
    modes: np.ndarray
    spread: float
    threshold: float
    sharpness: float
    projections: np.ndarray
    latent_dim: int
    leak_targets: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.modes = np.asarray(self.modes, dtype=np.float64)
        if self.latent_dim < 2:
            raise ModelError("latent dim must be at least 2")
        if self.projections.shape != (
            self.num_classes,
            self.latent_dim - 1,
            self.data_dim,
        ):
            raise ModelError(
                f"projections have shape {self.projections.shape}, expected "
                f"{(self.num_classes, self.latent_dim - 1, self.data_dim)}"
            )
        k = self.num_classes
        self.leak_targets = (np.arange(k) + 1) % k

    @property
    def num_classes(self) -> int:
        return self.modes.shape[0]

    @property
    def data_dim(self) -> int:
        return self.modes.shape[1]

    def leak_weight(self, z: Tensor) -> Tensor:
        """w(z) = sigmoid(alpha * (z1 - tau)), shape (batch, 1)."""
        z1 = ops.take(z, 0, 1, axis=1)
        gate = ops.mul(self.sharpness, ops.sub(z1, self.threshold))
        return ops.sigmoid(gate)

    def _branch(self, tail: Tensor, labels: np.ndarray) -> Tensor:
        """mu_c + spread * tail @ P_c, selected row-wise by ``labels``."""
        out = Tensor(self.modes[labels])
        for c in np.unique(labels):
            mask = (labels == c).astype(np.float64)[:, None]
            projected = ops.matmul(tail, Tensor(self.projections[c]))
            out = ops.add(
                out, ops.mul(Tensor(mask * self.spread), projected)
            )
        return out

    def generate(self, z: Tensor, labels: np.ndarray) -> Tensor:
        labels = np.asarray(labels, dtype=np.int64)
        if z.ndim != 2 or z.shape[1] != self.latent_dim:
            raise ModelError(
                f"generator expects z of shape (batch, {self.latent_dim}), "
                f"got {z.shape}"
            )
        if labels.shape != (z.shape[0],):
            raise ModelError(
                f"need one label per latent row, got {labels.shape}"
            )
        if labels.size and (
            labels.min() < 0 or labels.max() >= self.num_classes
        ):
            raise ModelError(
                f"labels must lie in [0, {self.num_classes}), got "
                f"[{labels.min()}, {labels.max()}]"
            )
        tail = ops.take(z, 1, self.latent_dim, axis=1)
        own = self._branch(tail, labels)
        leaked = self._branch(tail, self.leak_targets[labels])
        return ops.lerp(own, leaked, self.leak_weight(z))

    def lipschitz_bound(self, tail_norm: float) -> float:
        """Bound on |dx/dz| for latent tails no longer than ``tail_norm``."""
        mode_gap = np.max(
            np.linalg.norm(self.modes - self.modes[self.leak_targets], axis=1)
        )
        proj_norm = max(
            np.linalg.norm(p, ord=2) for p in self.projections
        )
        gate = self.sharpness / 4.0 * (
            mode_gap + 2.0 * self.spread * proj_norm * tail_norm
        )
        return float(gate + self.spread * proj_norm)


# This function generates the samples work used in this file.
def generate(z: Tensor, labels: np.ndarray, gen: LeakyGenerator) -> Tensor:
    return gen.generate(z, labels)


# ---------------------------------------------------------------------------
# Latent prior
# ---------------------------------------------------------------------------

# This class keeps the latent prior data and behavior in one place.
@dataclass(frozen=True)
class LatentPrior:
    """Standard normal p(z) = N(0, I) of the given dimension."""

    dim: int

    def sample(self, n: int, rng: RngStream) -> Tensor:
        if n < 1:
            raise ModelError(f"need at least one latent draw, got n={n}")
        return Tensor(rng.normal((n, self.dim)))


# This function samples the prior work used in this file.
def sample_prior(n: int, rng: RngStream, dim: int) -> Tensor:
    return LatentPrior(dim).sample(n, rng)
