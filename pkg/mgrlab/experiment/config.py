"""Experiment files: YAML with ``benchmark``, ``training`` and ``experiment``.

Every key is optional; an empty file is a valid experiment made entirely of
defaults.  Keys are the field names of ``BenchmarkSpec`` and ``MetaConfig``
(``method`` excepted: methods are listed under ``experiment``).  Errors name
the offending key and, when the YAML node is known, its line.

Example::

    benchmark:
      num_classes: 8
      leak_rate: 0.3
    training:
      epochs: 200
      lam: 0.5
    experiment:
      methods: [base, gda, pcr, mgr]
      seeds: [0, 1, 2, 3, 4]
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from mgrlab.bench import BenchmarkError, BenchmarkSpec
from mgrlab.experiment.errors import ConfigError
from mgrlab.metalearn import METHODS, MetaConfig, MetaConfigError
from mgrlab.objectives import LAMBDA_RANGE

logger = logging.getLogger(__name__)

SECTIONS = ("benchmark", "training", "experiment")
TABLE_METHODS = ("base", "gda", "gda-mh", "gda-ssl", "gda-mps", "pcr", "mgr")
OPTIONAL_FIELDS = {"inner_lr": float, "finder_hidden": int}
TUPLE_ITEMS = {
    "hidden": int,
    "decay_fractions": float,
    "scale_range": float,
    "methods": str,
    "seeds": int,
    "sweep_fractions": float,
}


# This class keeps the experiment settings data and behavior in one place.
@dataclass(frozen=True)
class ExperimentSettings:
    methods: tuple[str, ...] = TABLE_METHODS
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    output_dir: str = "runs"
    lambda_grid: bool = False
    sweep_fractions: tuple[float, ...] = (0.1, 0.25, 0.5, 0.75, 1.0)


# This class keeps the experiment config data and behavior in one place.
@dataclass(frozen=True)
class ExperimentConfig:
    benchmark: BenchmarkSpec = field(default_factory=BenchmarkSpec)
    training: MetaConfig = field(default_factory=MetaConfig)
    experiment: ExperimentSettings = field(
        default_factory=ExperimentSettings
    )

    @property
    def methods(self) -> tuple[str, ...]:
        return self.experiment.methods

    @property
    def seeds(self) -> tuple[int, ...]:
        return self.experiment.seeds

    @property
    def output_dir(self) -> Path:
        return Path(self.experiment.output_dir)

    def with_output_dir(self, output_dir: str | Path) -> ExperimentConfig:
        return replace(
            self,
            experiment=replace(self.experiment, output_dir=str(output_dir)),
        )

    def to_dict(self) -> dict[str, Any]:
        training = asdict(self.training)
        training.pop("method")
        return {
            "benchmark": _plain(asdict(self.benchmark)),
            "training": _plain(training),
            "experiment": _plain(asdict(self.experiment)),
        }

    def canonical_json(self) -> str:
        return json.dumps(
            self.to_dict(), sort_keys=True, separators=(",", ":")
        )

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    @classmethod
    def from_dict(
        cls,
        data: dict[str, Any] | None,
        lines: dict[tuple[str, ...], int] | None = None,
    ) -> ExperimentConfig:
        return _build(data or {}, lines or {})


def _plain(value: Any) -> Any:
    if isinstance(value, tuple | list):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


# ---------------------------------------------------------------------------
# Coercion
# ---------------------------------------------------------------------------

def _coerce_scalar(kind: type, value: Any, where: str, line: int | None):
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false", line)
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer", line)
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, int | float):
            raise ConfigError(f"{where} must be a number", line)
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{where} must be a string", line)
    return value


def _coerce(
    name: str, default: Any, value: Any, where: str, line: int | None
) -> Any:
    if name in OPTIONAL_FIELDS:
        if value is None:
            return None
        return _coerce_scalar(OPTIONAL_FIELDS[name], value, where, line)
    if isinstance(default, tuple):
        if not isinstance(value, list | tuple):
            raise ConfigError(f"{where} must be a list", line)
        item = TUPLE_ITEMS[name]
        return tuple(
            _coerce_scalar(item, v, f"{where}[{i}]", line)
            for i, v in enumerate(value)
        )
    return _coerce_scalar(type(default), value, where, line)


def _section(
    cls: type,
    section: str,
    raw: Any,
    lines: dict[tuple[str, ...], int],
    skip: tuple[str, ...] = (),
) -> Any:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(
            f"section '{section}' must be a mapping", lines.get((section,))
        )
    defaults = cls()
    known = {f.name for f in fields(cls)} - set(skip)
    values = {}
    for key, value in raw.items():
        line = lines.get((section, str(key)))
        if key not in known:
            raise ConfigError(f"unknown key '{section}.{key}'", line)
        values[key] = _coerce(
            key, getattr(defaults, key), value, f"{section}.{key}", line
        )
    return replace(defaults, **values)


def _build(
    data: dict[str, Any], lines: dict[tuple[str, ...], int]
) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("experiment file must be a mapping of sections", 1)
    for section in data:
        if section not in SECTIONS:
            raise ConfigError(
                f"unknown section '{section}', expected one of "
                f"{', '.join(SECTIONS)}",
                lines.get((str(section),)),
            )

    benchmark = _section(
        BenchmarkSpec, "benchmark", data.get("benchmark"), lines
    )
    training = _section(
        MetaConfig, "training", data.get("training"), lines, skip=("method",)
    )
    experiment = _section(
        ExperimentSettings, "experiment", data.get("experiment"), lines
    )
    config = ExperimentConfig(benchmark, training, experiment)
    validate_config(config, lines)
    return config


# This function validates the config work used in this file.
def validate_config(
    config: ExperimentConfig,
    lines: dict[tuple[str, ...], int] | None = None,
) -> None:
    """Every range check, run before any compute."""
    lines = lines or {}
    low, high = LAMBDA_RANGE
    lam = config.training.lam
    if not low - 1e-12 <= lam <= high + 1e-12:
        raise ConfigError(
            f"training.lam={lam} is outside the lambda grid domain "
            f"[{low}, {high}]",
            lines.get(("training", "lam")),
        )
    try:
        config.benchmark.validate()
    except BenchmarkError as exc:
        raise ConfigError(
            f"benchmark: {exc}", lines.get(("benchmark",))
        ) from exc

    settings = config.experiment
    methods_line = lines.get(("experiment", "methods"))
    if not settings.methods:
        raise ConfigError("experiment.methods must not be empty", methods_line)
    for method in settings.methods:
        if method not in METHODS:
            raise ConfigError(
                f"unknown method '{method}', expected one of "
                f"{', '.join(METHODS)}",
                methods_line,
            )
    if len(set(settings.methods)) != len(settings.methods):
        raise ConfigError("experiment.methods has duplicates", methods_line)
    if not settings.seeds:
        raise ConfigError(
            "experiment.seeds must not be empty",
            lines.get(("experiment", "seeds")),
        )
    if len(set(settings.seeds)) != len(settings.seeds):
        raise ConfigError(
            "experiment.seeds has duplicates",
            lines.get(("experiment", "seeds")),
        )
    for fraction in settings.sweep_fractions:
        if not 0.0 < fraction <= 1.0:
            raise ConfigError(
                f"sweep fraction {fraction} is outside (0, 1]",
                lines.get(("experiment", "sweep_fractions")),
            )

    for method in settings.methods:
        try:
            replace(config.training, method=method).validate()
        except MetaConfigError as exc:
            raise ConfigError(
                f"training ({method}): {exc}", lines.get(("training",))
            ) from exc


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def _key_lines(text: str) -> dict[tuple[str, ...], int]:
    """1-based line of every section and key in the document."""
    root = yaml.compose(text, Loader=yaml.SafeLoader)
    lines: dict[tuple[str, ...], int] = {}
    if not isinstance(root, yaml.MappingNode):
        return lines
    for key_node, value_node in root.value:
        section = str(key_node.value)
        lines[(section,)] = key_node.start_mark.line + 1
        if isinstance(value_node, yaml.MappingNode):
            for sub_key, _ in value_node.value:
                lines[(section, str(sub_key.value))] = (
                    sub_key.start_mark.line + 1
                )
    return lines


# This function parses the config text work used in this file.
def parse_config(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
        lines = _key_lines(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(
            f"cannot parse YAML: {exc.problem or exc}", line
        ) from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse YAML: {exc}") from exc
    return ExperimentConfig.from_dict(data, lines)


# This function loads the config work used in this file.
def load_config(path: Path | str) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    config = parse_config(text)
    logger.info(
        "Loaded %s: %d methods x %d seeds, hash %s",
        path,
        len(config.methods),
        len(config.seeds),
        config.config_hash()[:12],
    )
    return config
