"""This file handles the command line verbs for the experiment part.

Exit codes: 0 on success, 2 when the configuration is rejected, 3 when
training, checks or export fail.
"""

from __future__ import annotations

import functools
import json
import logging
from contextlib import nullcontext
from pathlib import Path

import click
from flask import current_app, has_app_context

from mgrlab.atomic import atomic_write_text
from mgrlab.bench import BenchmarkError, size_sweep, sweep_table
from mgrlab.experiment.checks import meta_step_timing, run_checks
from mgrlab.experiment.config import ExperimentConfig, load_config
from mgrlab.experiment.errors import ConfigError, RunError
from mgrlab.experiment.runner import (
    export_from_checkpoint,
    lambda_grid,
    run,
)

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_FAILURE = 3


def _app_context():
    """Reuse the active app context, else build the app for this call."""
    if has_app_context():
        return nullcontext()
    from mgrlab.app import create_app

    return create_app().app_context()


def _output_dir(config: ExperimentConfig, override: str | None) -> Path:
    if override:
        return Path(override)
    setting = current_app.config.get("MGRLAB_OUTPUT_DIR")
    return Path(setting) if setting else config.output_dir


# This function maps failures onto exit codes for every verb.
def _exit_codes(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            with _app_context():
                return fn(*args, **kwargs)
        except (ConfigError, BenchmarkError) as exc:
            click.echo(f"config error: {exc}", err=True)
            raise SystemExit(EXIT_CONFIG) from exc
        except click.exceptions.Exit:
            raise
        except Exception as exc:
            logger.exception("Command failed")
            click.echo(f"failed: {exc}", err=True)
            raise SystemExit(EXIT_FAILURE) from exc

    return wrapper


def _report(manifest, output_dir: Path) -> None:
    click.echo(
        f"{manifest.status}: {len(manifest.cells)} cells, "
        f"{manifest.wall_clock:.1f}s, hash {manifest.config_hash[:12]}"
    )
    click.echo(f"manifest: {output_dir / 'manifest.json'}")
    if manifest.status != "complete":
        raise RunError("one or more cells failed")


@click.group()
def cli():
    """Pseudo-sample regularization lab."""


@cli.command("run")
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("--output-dir", default=None, help="Overrides the config.")
@_exit_codes
def run_command(config_path, output_dir):
    """Train every method and seed listed in CONFIG_PATH."""
    config = load_config(config_path)
    out = _output_dir(config, output_dir)
    if config.experiment.lambda_grid:
        _, manifest = lambda_grid(config, out)
    else:
        manifest = run(config, out)
    _report(manifest, out)


@cli.command("grid")
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("--output-dir", default=None, help="Overrides the config.")
@_exit_codes
def grid_command(config_path, output_dir):
    """Pick lambda per method on validation accuracy, then report."""
    config = load_config(config_path)
    out = _output_dir(config, output_dir)
    choices, manifest = lambda_grid(config, out)
    for method, choice in choices.items():
        lam = "-" if choice.lam is None else f"{choice.lam:.1f}"
        click.echo(f"  {method:<16} lam={lam} (from {choice.source})")
    _report(manifest, out)


@cli.command("export-embeddings")
@click.argument("checkpoint", type=click.Path(dir_okay=False))
@click.argument("out", type=click.Path(dir_okay=False))
@click.option("--synthetic", default=512, show_default=True, type=int)
@_exit_codes
def export_command(checkpoint, out, synthetic):
    """Write penultimate features of a checkpoint as CSV."""
    rows = export_from_checkpoint(checkpoint, out, synthetic=synthetic)
    click.echo(f"wrote {rows} rows to {out}")


@cli.command("check")
@click.option("--instances", default=5, show_default=True, type=int)
@click.option("--timing", is_flag=True, help="Also time FD vs exact.")
@_exit_codes
def check_command(instances, timing):
    """Run the gradient and invariant checks."""
    results = run_checks(instances)
    for result in results:
        mark = "ok" if result.passed else "FAIL"
        click.echo(f"[{mark:>4}] {result.name}: {result.detail}")
    if timing:
        seconds = meta_step_timing()
        click.echo(
            f"meta step: fd {seconds['fd']:.4f}s, "
            f"exact {seconds['exact']:.4f}s"
        )
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise RunError(f"checks failed: {', '.join(failed)}")


@cli.command("sweep")
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("--output-dir", default=None, help="Overrides the config.")
@_exit_codes
def sweep_command(config_path, output_dir):
    """Train the configured methods on shrinking train splits."""
    config = load_config(config_path)
    out = _output_dir(config, output_dir)
    cells = size_sweep(
        config.benchmark,
        config.experiment.sweep_fractions,
        config.methods,
        config.training,
        config.seeds,
    )
    table = sweep_table(cells)
    payload = {
        "config_hash": config.config_hash(),
        "table": {
            f"{fraction:g}": row for fraction, row in sorted(table.items())
        },
        "cells": [
            {
                "fraction": c.fraction,
                "method": c.method,
                "seed": c.seed,
                "test_acc": c.report.accuracy,
                "frechet": c.report.frechet,
                "leak_rate": c.report.leak_rate,
            }
            for c in cells
        ],
    }
    path = atomic_write_text(
        out / "sweep.json", json.dumps(payload, indent=2) + "\n"
    )
    click.echo(f"wrote {path}")
