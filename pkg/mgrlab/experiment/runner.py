"""This file handles the run orchestration for the experiment part.

Output layout under the output directory::

    resolved_config.json
    <method>/seed-<seed>/metrics.csv
    <method>/seed-<seed>/cell.json
    <method>/seed-<seed>/checkpoints/{milestone-<epoch>,best}.mgrl
    grid/<method>/lam-<lam>/seed-<seed>/...     (lambda grid only)
    summary.json
    grid.json                                   (lambda grid only)
    manifest.json                               (always written last)
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

import mgrlab
from mgrlab.atomic import atomic_write_text
from mgrlab.bench import export_embeddings, make_benchmark
from mgrlab.diffcore import RngStream, no_record
from mgrlab.experiment.config import ExperimentConfig
from mgrlab.experiment.errors import ConfigError, RunError
from mgrlab.experiment.models import record_cell
from mgrlab.metalearn import METHODS, METRIC_COLUMNS, build_state, train
from mgrlab.metalearn.trainer import seed_stream
from mgrlab.models import read_checkpoint, restore_checkpoint
from mgrlab.objectives import Batch

logger = logging.getLogger(__name__)

LAMBDA_GRID = tuple(round(0.1 * i, 1) for i in range(1, 11))
LAMBDA_SOURCE = {
    "mgr": "pcr",
    "mgr-latentaug": "pcr",
    "mgr-latentonly": "pcr",
    "gda-mps": "gda",
}
RESOLVED_CONFIG = "resolved_config.json"
EXPORT_SYNTHETIC = 512


# This class keeps the run manifest data and behavior in one place.
@dataclass
class RunManifest:
    config_hash: str
    artifacts: list[str]
    version: str
    wall_clock: float
    status: str
    cells: list[dict] = field(default_factory=list)
    grid: dict | None = None

    def to_dict(self) -> dict:
        data = asdict(self)
        if self.grid is None:
            data.pop("grid")
        return data

    def write(self, output_dir: Path) -> Path:
        return atomic_write_text(
            output_dir / "manifest.json",
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
        )


# This class keeps the grid choice data and behavior in one place.
@dataclass(frozen=True)
class GridChoice:
    method: str
    lam: float | None
    source: str
    val_acc: float | None
    test_acc: float | None


# ---------------------------------------------------------------------------
# Cells
# ---------------------------------------------------------------------------

# This function builds the cell directory work used in this file.
def cell_directory(
    output_dir: Path, method: str, seed: int, lam: float | None = None
) -> Path:
    if lam is None:
        return Path(output_dir) / method / f"seed-{seed}"
    grid = Path(output_dir) / "grid" / method / f"lam-{lam:.1f}"
    return grid / f"seed-{seed}"


# This function writes the metrics csv work used in this file.
def write_metrics_csv(path: Path, rows: Iterable) -> Path:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for row in rows:
        writer.writerow(row.as_csv())
    return atomic_write_text(path, buffer.getvalue())


# This function executes the cell work used in this file.
def execute_cell(
    config_data: dict,
    method: str,
    seed: int,
    lam: float | None,
    cell_dir: str,
) -> dict:
    """Train one cell and write its files; failures are returned."""
    cell_path = Path(cell_dir)
    summary = {
        "method": method,
        "seed": seed,
        "lam": lam,
        "cell_dir": str(cell_path),
        "status": "failed",
        "error": None,
        "rows": [],
        "selected": None,
        "selected_epoch": None,
        "wall_clock": None,
        "skipped_meta_steps": 0,
        "artifacts": [],
    }
    try:
        config = ExperimentConfig.from_dict(config_data)
        training = config.training
        if lam is not None:
            training = replace(training, lam=lam)
        summary["lam"] = training.lam
        benchmark = make_benchmark(config.benchmark)
        result = train(
            method,
            benchmark,
            training,
            seed_stream(seed),
            checkpoint_dir=cell_path / "checkpoints",
        )
        record = result.record
        write_metrics_csv(cell_path / "metrics.csv", record.rows)
        atomic_write_text(
            cell_path / "cell.json",
            json.dumps(
                {"method": method, "seed": seed, "lam": training.lam},
                sort_keys=True,
            )
            + "\n",
        )
        summary.update(
            status="complete",
            rows=[asdict(row) for row in record.rows],
            selected=asdict(record.selected),
            selected_epoch=record.selected_epoch,
            wall_clock=record.wall_clock,
            skipped_meta_steps=record.skipped_meta_steps,
            artifacts=sorted(
                str(p) for p in cell_path.rglob("*") if p.is_file()
            ),
        )
    except Exception as exc:
        logger.exception("Cell %s seed=%d failed", method, seed)
        summary["error"] = f"{type(exc).__name__}: {exc}"
    return summary


def _dispatch(
    config: ExperimentConfig,
    output_dir: Path,
    cells: Sequence[tuple[str, int, float | None]],
) -> list[dict]:
    """Submit every cell, then collect; eager mode runs them in order."""
    from mgrlab.app import celery_app
    from mgrlab.experiment.tasks import run_cell

    task = celery_app.tasks[run_cell.name]
    data = config.to_dict()
    pending = [
        task.delay(
            data,
            method,
            seed,
            lam,
            str(cell_directory(output_dir, method, seed, lam)),
        )
        for method, seed, lam in cells
    ]
    return [result.get() for result in pending]


def _register(config_hash: str, results: Iterable[dict]) -> None:
    for cell in results:
        record_cell(config_hash, cell)


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------

def _stats(values: Sequence[float]) -> dict[str, float]:
    return {
        "mean": float(np.mean(values)),
        "std": float(np.std(values)),
    }


# This function summarizes the results work used in this file.
def summarize(results: Iterable[dict]) -> dict[str, dict]:
    """Mean and population std across seeds of the selected-epoch metrics."""
    grouped: dict[str, list[dict]] = {}
    for cell in results:
        if cell["status"] == "complete":
            grouped.setdefault(cell["method"], []).append(cell)
    order = {method: i for i, method in enumerate(METHODS)}
    summary = {}
    for method in sorted(grouped, key=order.get):
        cells = grouped[method]
        selected = [c["selected"] for c in cells]
        summary[method] = {
            "lam": cells[0]["lam"],
            "seeds": [c["seed"] for c in cells],
            "n": len(cells),
            "test_acc": _stats([s["test_acc"] for s in selected]),
            "val_acc": _stats([s["val_acc"] for s in selected]),
            "frechet": _stats([s["frechet"] for s in selected]),
            "leak_rate": _stats([s["leak_rate"] for s in selected]),
        }
    return summary


def _write_json(path: Path, payload: dict) -> Path:
    return atomic_write_text(
        path, json.dumps(payload, indent=2, sort_keys=True) + "\n"
    )


def _relative(paths: Iterable[str | Path], root: Path) -> list[str]:
    out = []
    for path in paths:
        path = Path(path)
        try:
            out.append(str(path.relative_to(root)))
        except ValueError:
            out.append(str(path))
    return sorted(set(out))


def _finish(
    config: ExperimentConfig,
    output_dir: Path,
    results: list[dict],
    extra_files: Sequence[Path],
    started: float,
    grid: dict | None = None,
) -> RunManifest:
    artifacts = [output_dir / RESOLVED_CONFIG, *extra_files]
    for cell in results:
        artifacts.extend(cell["artifacts"])
    failed = [c for c in results if c["status"] != "complete"]
    manifest = RunManifest(
        config_hash=config.config_hash(),
        artifacts=_relative(artifacts, output_dir),
        version=mgrlab.__version__,
        wall_clock=time.perf_counter() - started,
        status="failed" if failed else "complete",
        cells=[
            {
                "method": c["method"],
                "seed": c["seed"],
                "lam": c["lam"],
                "status": c["status"],
                "error": c["error"],
            }
            for c in results
        ],
        grid=grid,
    )
    manifest.write(output_dir)
    if failed:
        logger.error(
            "%d of %d cells failed; see manifest.json",
            len(failed),
            len(results),
        )
    return manifest


def _start(config: ExperimentConfig, output_dir: Path) -> None:
    output_dir.mkdir(parents=True, exist_ok=True)
    _write_json(output_dir / RESOLVED_CONFIG, config.to_dict())


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

# This function runs the experiment work used in this file.
def run(
    config: ExperimentConfig, output_dir: Path | str | None = None
) -> RunManifest:
    """Train every (method, seed) cell and write all artifacts."""
    output_dir = Path(output_dir or config.output_dir)
    started = time.perf_counter()
    _start(config, output_dir)

    cells = [(m, s, None) for m in config.methods for s in config.seeds]
    logger.info("Running %d cells into %s", len(cells), output_dir)
    results = _dispatch(config, output_dir, cells)
    _register(config.config_hash(), results)

    summary_path = _write_json(output_dir / "summary.json", summarize(results))
    return _finish(config, output_dir, results, [summary_path], started)


# This function runs the lambda grid work used in this file.
def lambda_grid(
    config: ExperimentConfig, output_dir: Path | str | None = None
) -> tuple[dict[str, GridChoice], RunManifest]:
    """Select lambda per method on validation accuracy.

    The score of a lambda is the final-epoch validation accuracy averaged
    over seeds; ties go to the smaller lambda.  MGR variants take the PCR
    choice and GDA+MPS the GDA choice instead of searching their own.
    """
    output_dir = Path(output_dir or config.output_dir)
    started = time.perf_counter()
    _start(config, output_dir)
    config_hash = config.config_hash()

    searched = []
    for method in config.methods:
        target = LAMBDA_SOURCE.get(method, method)
        if target != "base" and target not in searched:
            searched.append(target)

    cells = [
        (m, s, lam)
        for m in searched
        for lam in LAMBDA_GRID
        for s in config.seeds
    ]
    logger.info(
        "Lambda grid: %d methods x %d values x %d seeds",
        len(searched),
        len(LAMBDA_GRID),
        len(config.seeds),
    )
    results = _dispatch(config, output_dir, cells)
    _register(config_hash, results)

    scores: dict[str, dict[float, float]] = {}
    choices: dict[str, GridChoice] = {}
    for method in searched:
        by_lam = {}
        for lam in LAMBDA_GRID:
            finals = [
                c["rows"][-1]["val_acc"]
                for c in results
                if c["method"] == method
                and c["lam"] == lam
                and c["status"] == "complete"
            ]
            if finals:
                by_lam[lam] = float(np.mean(finals))
        if not by_lam:
            raise RunError(f"every lambda cell of {method} failed")
        scores[method] = by_lam
        best = max(by_lam, key=lambda lam: (by_lam[lam], -lam))
        chosen = [
            c
            for c in results
            if c["method"] == method
            and c["lam"] == best
            and c["status"] == "complete"
        ]
        choices[method] = GridChoice(
            method=method,
            lam=best,
            source=method,
            val_acc=by_lam[best],
            test_acc=float(
                np.mean([c["selected"]["test_acc"] for c in chosen])
            ),
        )

    followers = [
        (m, s, choices[LAMBDA_SOURCE[m]].lam if m != "base" else None)
        for m in config.methods
        if m == "base" or m in LAMBDA_SOURCE
        for s in config.seeds
    ]
    follower_results = _dispatch(config, output_dir, followers)
    _register(config_hash, follower_results)
    for method in config.methods:
        if method != "base" and method not in LAMBDA_SOURCE:
            continue
        source = "none" if method == "base" else LAMBDA_SOURCE[method]
        done = [
            c
            for c in follower_results
            if c["method"] == method and c["status"] == "complete"
        ]
        choices[method] = GridChoice(
            method=method,
            lam=None if method == "base" else choices[source].lam,
            source=source,
            val_acc=None,
            test_acc=(
                float(np.mean([c["selected"]["test_acc"] for c in done]))
                if done
                else None
            ),
        )

    reported = [
        c
        for c in [*results, *follower_results]
        if c["method"] in config.methods
        and (
            c["method"] == "base"
            or c["lam"] == choices[c["method"]].lam
        )
    ]
    summary = summarize(reported)
    for method, entry in summary.items():
        entry["lam_source"] = choices[method].source
    summary_path = _write_json(output_dir / "summary.json", summary)
    grid_path = _write_json(
        output_dir / "grid.json",
        {
            "grid": list(LAMBDA_GRID),
            "scores": {
                m: {f"{lam:.1f}": v for lam, v in by_lam.items()}
                for m, by_lam in scores.items()
            },
            "selected": {m: asdict(c) for m, c in choices.items()},
        },
    )
    grid_section = {
        "selected": {m: choices[m].lam for m in config.methods},
        "source": {m: choices[m].source for m in config.methods},
    }
    manifest = _finish(
        config,
        output_dir,
        [*results, *follower_results],
        [summary_path, grid_path],
        started,
        grid=grid_section,
    )
    return {m: choices[m] for m in config.methods}, manifest


# ---------------------------------------------------------------------------
# Embedding export
# ---------------------------------------------------------------------------

# This function finds the resolved config work used in this file.
def find_resolved_config(start: Path) -> Path:
    for directory in [start, *start.parents]:
        candidate = directory / RESOLVED_CONFIG
        if candidate.is_file():
            return candidate
    raise ConfigError(f"no {RESOLVED_CONFIG} above {start}")


# This function exports the embeddings from a checkpoint.
def export_from_checkpoint(
    checkpoint: Path | str,
    out: Path | str,
    synthetic: int = EXPORT_SYNTHETIC,
) -> int:
    """Rebuild a cell from its run directory and export its features.

    Real rows cover the train, val and test splits; synthetic rows come
    from a fixed prior stream pushed through the checkpoint's finder.
    """
    checkpoint = Path(checkpoint).resolve()
    cell_dir = checkpoint.parent.parent
    cell_file = cell_dir / "cell.json"
    if not cell_file.is_file():
        raise ConfigError(f"no cell.json next to {checkpoint.parent}")
    cell = json.loads(cell_file.read_text(encoding="utf-8"))
    config = ExperimentConfig.from_dict(
        json.loads(find_resolved_config(cell_dir).read_text(encoding="utf-8"))
    )

    arrays = read_checkpoint(checkpoint)
    benchmark = make_benchmark(config.benchmark)
    training = replace(
        config.training, method=cell["method"], lam=cell["lam"]
    )
    state = build_state(training, benchmark, seed_stream(cell["seed"]))
    restore_checkpoint(arrays, state.model, state.finder)

    rng = RngStream(cell["seed"], "export")
    with no_record():
        z = state.prior.sample(synthetic, rng)
        labels = rng.integers(0, benchmark.spec.num_classes, synthetic)
        if state.finder is not None:
            z = state.finder.forward(z)
        x_p = benchmark.generator.generate(z, labels)
    return export_embeddings(
        state.model,
        [benchmark.train, benchmark.val, benchmark.test],
        [Batch(x_p.detach(), labels)],
        out,
    )
