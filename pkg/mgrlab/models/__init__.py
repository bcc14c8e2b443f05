"""Classifier, finder and generator components."""

from mgrlab.models.checkpoint import (
    checkpoint_arrays,
    read_checkpoint,
    restore_checkpoint,
    write_checkpoint,
)
from mgrlab.models.errors import CheckpointError, ModelError
from mgrlab.models.generator import (
    LatentPrior,
    LeakyGenerator,
    generate,
    leak_threshold,
    random_projections,
    sample_prior,
)
from mgrlab.models.networks import (
    FINDER_VARIANTS,
    FeatureExtractor,
    Finder,
    Head,
    MainModel,
    build_main_model,
    classify,
    extract,
    find,
)

__all__ = [
    "FINDER_VARIANTS",
    "CheckpointError",
    "FeatureExtractor",
    "Finder",
    "Head",
    "LatentPrior",
    "LeakyGenerator",
    "MainModel",
    "ModelError",
    "build_main_model",
    "checkpoint_arrays",
    "classify",
    "extract",
    "find",
    "generate",
    "leak_threshold",
    "random_projections",
    "read_checkpoint",
    "restore_checkpoint",
    "sample_prior",
    "write_checkpoint",
]
