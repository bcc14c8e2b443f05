"""Experiment configuration, orchestration and command line verbs."""

from mgrlab.experiment.config import (
    TABLE_METHODS,
    ExperimentConfig,
    ExperimentSettings,
    load_config,
    parse_config,
)
from mgrlab.experiment.errors import CheckError, ConfigError, RunError
from mgrlab.experiment.runner import (
    LAMBDA_GRID,
    GridChoice,
    RunManifest,
    export_from_checkpoint,
    lambda_grid,
    run,
    summarize,
)

__all__ = [
    "LAMBDA_GRID",
    "TABLE_METHODS",
    "CheckError",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentSettings",
    "GridChoice",
    "RunError",
    "RunManifest",
    "export_from_checkpoint",
    "lambda_grid",
    "load_config",
    "parse_config",
    "run",
    "summarize",
]
