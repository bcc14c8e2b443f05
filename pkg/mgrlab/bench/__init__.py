"""Synthetic benchmarks, metrics, embedding export and size sweeps."""

from mgrlab.bench.datasets import (
    Benchmark,
    BenchmarkSpec,
    ToyDataset,
    make_benchmark,
    refit_generator,
    subsample_benchmark,
)
from mgrlab.bench.embeddings import embedding_header, export_embeddings
from mgrlab.bench.errors import BenchmarkError
from mgrlab.bench.metrics import (
    MetricReport,
    accuracy,
    frechet_distance,
    leak_weights,
    leakage_rate,
    paired_improvement_pvalue,
)
from mgrlab.bench.sweep import SweepCell, size_sweep, sweep_table

__all__ = [
    "Benchmark",
    "BenchmarkError",
    "BenchmarkSpec",
    "MetricReport",
    "SweepCell",
    "ToyDataset",
    "accuracy",
    "embedding_header",
    "export_embeddings",
    "frechet_distance",
    "leak_weights",
    "leakage_rate",
    "make_benchmark",
    "paired_improvement_pvalue",
    "refit_generator",
    "size_sweep",
    "subsample_benchmark",
    "sweep_table",
]
