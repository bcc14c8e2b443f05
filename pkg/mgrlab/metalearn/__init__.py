"""Finder meta-learning, hypergradients and the training loop."""

from mgrlab.metalearn.config import (
    HARD_METHODS,
    META_METHODS,
    METHODS,
    MetaConfig,
)
from mgrlab.metalearn.errors import DegenerateEpsilonError, MetaConfigError
from mgrlab.metalearn.hypergrad import (
    BilevelProblem,
    inner_update,
    meta_gradient,
    meta_gradient_exact,
    meta_gradient_fd,
)
from mgrlab.metalearn.records import METRIC_COLUMNS, EpochRow, RunRecord
from mgrlab.metalearn.trainer import (
    PseudoDraw,
    TrainResult,
    TrainState,
    build_state,
    hard_example_f_update,
    main_step,
    mps_step,
    seed_stream,
    train,
)

__all__ = [
    "HARD_METHODS",
    "META_METHODS",
    "METHODS",
    "METRIC_COLUMNS",
    "BilevelProblem",
    "DegenerateEpsilonError",
    "EpochRow",
    "MetaConfig",
    "MetaConfigError",
    "PseudoDraw",
    "RunRecord",
    "TrainResult",
    "TrainState",
    "build_state",
    "hard_example_f_update",
    "inner_update",
    "main_step",
    "meta_gradient",
    "meta_gradient_exact",
    "meta_gradient_fd",
    "mps_step",
    "seed_stream",
    "train",
]
