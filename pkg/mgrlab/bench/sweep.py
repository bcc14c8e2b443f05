"""This file handles the dataset-size sweep for the bench part."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from mgrlab.bench.datasets import (
    Benchmark,
    BenchmarkSpec,
    make_benchmark,
    subsample_benchmark,
)
from mgrlab.bench.errors import BenchmarkError
from mgrlab.bench.metrics import MetricReport

logger = logging.getLogger(__name__)

SWEEP_SEED = 0


# This class keeps the sweep cell data and behavior in one place.
@dataclass(frozen=True)
class SweepCell:
    fraction: float
    method: str
    seed: int
    report: MetricReport


# This function validates the fractions work used in this file.
def validate_fractions(
    fractions: Sequence[float], benchmark: Benchmark
) -> None:
    if not fractions:
        raise BenchmarkError("a size sweep needs at least one fraction")
    for fraction in fractions:
        if not 0.0 < fraction <= 1.0:
            raise BenchmarkError(
                f"fraction must lie in (0, 1], got {fraction}"
            )
        keep = int(round(fraction * len(benchmark.train)))
        if keep < benchmark.spec.num_classes:
            raise BenchmarkError(
                f"fraction {fraction} keeps {keep} samples, fewer than "
                f"{benchmark.spec.num_classes} classes"
            )


# This function runs the size sweep work used in this file.
def size_sweep(
    spec: BenchmarkSpec,
    fractions: Sequence[float],
    methods: Sequence[str],
    cfg,
    seeds: Sequence[int] = (0,),
) -> list[SweepCell]:
    """Train every method on every reduced train split.

    The reduction uses a fixed seed, so every method and training seed sees
    the same subsample of a given fraction.
    """
    # Imported here: the trainer depends on this package's metrics.
    from mgrlab.metalearn.trainer import seed_stream, train

    full = make_benchmark(spec)
    validate_fractions(fractions, full)
    cells = []
    for fraction in fractions:
        bench = subsample_benchmark(full, fraction, seed=SWEEP_SEED)
        for method in methods:
            for seed in seeds:
                result = train(method, bench, cfg, seed_stream(seed))
                record = result.record
                cells.append(
                    SweepCell(
                        fraction=fraction,
                        method=method,
                        seed=seed,
                        report=MetricReport.from_rows(
                            record.rows, record.selected
                        ),
                    )
                )
                logger.info(
                    "Sweep fraction=%.2f %s seed=%d test_acc=%.4f",
                    fraction,
                    method,
                    seed,
                    record.selected.test_acc,
                )
    return cells


# This function tabulates the sweep work used in this file.
def sweep_table(cells: Sequence[SweepCell]) -> dict[float, dict[str, float]]:
    """Mean selected test accuracy per fraction and method."""
    table: dict[float, dict[str, list[float]]] = {}
    for cell in cells:
        table.setdefault(cell.fraction, {}).setdefault(cell.method, []).append(
            cell.report.accuracy
        )
    return {
        fraction: {m: float(np.mean(v)) for m, v in by_method.items()}
        for fraction, by_method in table.items()
    }
