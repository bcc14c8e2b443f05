"""This file handles the training configuration for the metalearn part."""

from __future__ import annotations

from dataclasses import dataclass

from mgrlab.augment import TransformSpec
from mgrlab.metalearn.errors import MetaConfigError
from mgrlab.models import FINDER_VARIANTS
from mgrlab.objectives import KL_FORMS, LAMBDA_RANGE, SSL_FORMS

METHODS = (
    "base",
    "gda",
    "gda-mh",
    "gda-ssl",
    "pcr",
    "gda-mps",
    "mgr",
    "f-hard-ce",
    "f-hard-pcr",
    "mgr-latentaug",
    "mgr-latentonly",
    "real-cr",
)
META_METHODS = frozenset(
    {"gda-mps", "mgr", "mgr-latentaug", "mgr-latentonly"}
)
HARD_METHODS = {"f-hard-ce": "ce", "f-hard-pcr": "pcr"}
PCR_METHODS = frozenset(
    {"pcr", "mgr", "f-hard-ce", "f-hard-pcr", "mgr-latentaug"}
)
LATENT_AUG_METHODS = frozenset({"mgr-latentaug", "mgr-latentonly"})
META_MODES = ("fd", "exact")


# This class keeps the meta config data and behavior in one place.
@dataclass(frozen=True)
class MetaConfig:
    """Every knob of one training run.

    ``inner_lr`` of ``None`` makes the virtual step use the classifier's
    current (decayed) learning rate.  ``noise_scale`` is relative to the
    generator's mode spread.
    """

    method: str = "mgr"
    lr: float = 0.01
    momentum: float = 0.9
    nesterov: bool = True
    weight_decay: float = 0.0
    inner_lr: float | None = None
    finder_lr: float = 1e-4
    lam: float = 0.5
    lam_kl: float = 0.01
    kl_enabled: bool = True
    kl_form: str = "printed"
    ssl_form: str = "kl"
    eps_const: float = 0.01
    batch_size: int = 64
    pseudo_batch_size: int = 64
    val_batch_size: int = 64
    epochs: int = 200
    decay_fractions: tuple[float, ...] = (0.3, 0.6, 0.8)
    gamma: float = 0.1
    meta_mode: str = "fd"
    finder_variant: str = "residual-mlp"
    finder_hidden: int | None = None
    hidden: tuple[int, ...] = (64, 64)
    feature_dim: int = 16
    rotation_max: float = 0.5
    scale_range: tuple[float, float] = (0.8, 1.2)
    noise_scale: float = 0.1
    ops_per_sample: int = 2
    latent_noise_variance: float = 1e-3
    frechet_samples: int = 1024

    # -- derived ------------------------------------------------------------

    @property
    def uses_finder(self) -> bool:
        return self.method in META_METHODS or self.method in HARD_METHODS

    @property
    def uses_meta(self) -> bool:
        return self.method in META_METHODS

    @property
    def uses_pseudo(self) -> bool:
        return self.method not in ("base", "real-cr")

    @property
    def needs_aux_head(self) -> bool:
        return self.method == "gda-mh"

    @property
    def milestones(self) -> tuple[int, ...]:
        """Epoch counts after which the classifier rate decays."""
        marks = {
            int(round(fraction * self.epochs))
            for fraction in self.decay_fractions
        }
        return tuple(sorted(m for m in marks if 0 < m < self.epochs))

    def transform_spec(self, spread: float) -> TransformSpec:
        return TransformSpec(
            rotation_max=self.rotation_max,
            scale_range=tuple(self.scale_range),
            noise_std=self.noise_scale * spread,
            ops_per_sample=self.ops_per_sample,
        )

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        if self.method not in METHODS:
            raise MetaConfigError(
                f"unknown method '{self.method}', expected one of "
                f"{', '.join(METHODS)}"
            )
        if self.meta_mode not in META_MODES:
            raise MetaConfigError(
                f"meta mode must be one of {META_MODES}, got "
                f"'{self.meta_mode}'"
            )
        if self.finder_variant not in FINDER_VARIANTS:
            raise MetaConfigError(
                f"unknown finder variant '{self.finder_variant}'"
            )
        if self.kl_form not in KL_FORMS:
            raise MetaConfigError(f"kl form must be one of {KL_FORMS}")
        if self.ssl_form not in SSL_FORMS:
            raise MetaConfigError(f"ssl form must be one of {SSL_FORMS}")

        low, high = LAMBDA_RANGE
        if not low - 1e-12 <= self.lam <= high + 1e-12:
            raise MetaConfigError(
                f"lambda must lie in the grid domain [{low}, {high}], "
                f"got {self.lam}"
            )
        if self.lam_kl < 0:
            raise MetaConfigError("lambda_kl must be >= 0")
        if self.eps_const <= 0:
            raise MetaConfigError("epsilon constant must be > 0")
        for name in ("lr", "finder_lr"):
            if getattr(self, name) <= 0:
                raise MetaConfigError(f"{name} must be > 0")
        if self.inner_lr is not None and self.inner_lr < 0:
            raise MetaConfigError("inner_lr must be >= 0")
        if not 0 <= self.momentum < 1:
            raise MetaConfigError("momentum must lie in [0, 1)")
        for name in ("batch_size", "pseudo_batch_size", "val_batch_size"):
            if getattr(self, name) < 1:
                raise MetaConfigError(f"{name} must be >= 1")
        if (
            self.uses_finder
            and self.kl_enabled
            and self.pseudo_batch_size < 2
        ):
            raise MetaConfigError(
                "pseudo_batch_size must be >= 2 when the KL penalty is on"
            )
        if self.epochs < 1:
            raise MetaConfigError("epochs must be >= 1")
        if any(not 0 < f < 1 for f in self.decay_fractions):
            raise MetaConfigError("decay fractions must lie in (0, 1)")
        if self.feature_dim < 1 or any(w < 1 for w in self.hidden):
            raise MetaConfigError("layer widths must be >= 1")
        if self.frechet_samples < 2:
            raise MetaConfigError("frechet_samples must be >= 2")
        if self.latent_noise_variance < 0:
            raise MetaConfigError("latent noise variance must be >= 0")
        try:
            self.transform_spec(1.0).validate()
        except ValueError as exc:
            raise MetaConfigError(str(exc)) from exc
