"""This file handles the synthetic benchmark for the bench part of the project.

A benchmark is K isotropic Gaussian blobs whose means sit evenly on a
circle in the first two data coordinates.  A labelled pool of ``n``
samples is split 9:1 into train and validation; a separate test set is
drawn from the same distribution.  The matched ``LeakyGenerator`` shares
the blob means and spread, so its unleaked samples follow the class
distributions exactly.
"""

from __future__ import annotations

import logging
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np

from mgrlab.bench.errors import BenchmarkError
from mgrlab.diffcore import RngStream
from mgrlab.models import LeakyGenerator, leak_threshold, random_projections

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
VAL_FRACTION = 0.1


# This class keeps the benchmark spec data and behavior in one place.
@dataclass(frozen=True)
class BenchmarkSpec:
    num_classes: int = 8
    data_dim: int = 2
    radius: float = 3.0
    spread: float = 0.7
    n: int = 400
    test_size: int = 2000
    leak_rate: float = 0.3
    latent_dim: int = 4
    sharpness: float = 10.0
    seed: int = 0
    unconditional: bool = False

    def validate(self) -> None:
        if self.num_classes < 2:
            raise BenchmarkError("a benchmark needs at least 2 classes")
        if self.data_dim < 1:
            raise BenchmarkError("data_dim must be >= 1")
        if not 0.0 <= self.leak_rate < 1.0:
            raise BenchmarkError(
                f"leak rate must lie in [0, 1), got {self.leak_rate}"
            )
        if self.radius <= 0 or self.spread <= 0:
            raise BenchmarkError("radius and spread must be > 0")
        if self.n < 10:
            raise BenchmarkError("n must be >= 10 for a 9:1 split")
        if self.test_size < 1:
            raise BenchmarkError("test_size must be >= 1")
        if self.latent_dim < 2:
            raise BenchmarkError("latent_dim must be >= 2")
        if self.sharpness <= 0:
            raise BenchmarkError("sharpness must be > 0")
        if self.unconditional:
            raise BenchmarkError(
                "unconditional generators are not supported; the leakage "
                "measurement needs a conditioning label"
            )


# This class keeps the toy dataset data and behavior in one place.
@dataclass(frozen=True)
class ToyDataset:
    inputs: np.ndarray
    labels: np.ndarray
    split: str
    indices: np.ndarray

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise BenchmarkError(f"unknown split '{self.split}'")
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise BenchmarkError("inputs and labels differ in length")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def subset(self, rows: np.ndarray) -> ToyDataset:
        return ToyDataset(
            inputs=self.inputs[rows],
            labels=self.labels[rows],
            split=self.split,
            indices=self.indices[rows],
        )

    def class_counts(self, num_classes: int) -> np.ndarray:
        return np.bincount(self.labels, minlength=num_classes)


# This class keeps the benchmark data and behavior in one place.
@dataclass(frozen=True)
class Benchmark:
    spec: BenchmarkSpec
    train: ToyDataset
    val: ToyDataset
    test: ToyDataset
    generator: LeakyGenerator

    def __iter__(self) -> Iterator:
        return iter((self.train, self.val, self.test, self.generator))


# This function builds the ring modes work used in this file.
def ring_modes(num_classes: int, data_dim: int, radius: float) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    modes = np.zeros((num_classes, data_dim))
    modes[:, 0] = radius * np.cos(angles)
    if data_dim > 1:
        modes[:, 1] = radius * np.sin(angles)
    return modes


# This function builds the generator work used in this file.
def build_generator(
    spec: BenchmarkSpec,
    modes: np.ndarray,
    spread: float,
    rng: RngStream,
) -> LeakyGenerator:
    return LeakyGenerator(
        modes=modes,
        spread=spread,
        threshold=leak_threshold(spec.leak_rate),
        sharpness=spec.sharpness,
        projections=random_projections(
            spec.num_classes, spec.latent_dim, spec.data_dim, rng
        ),
        latent_dim=spec.latent_dim,
    )


# This function makes the benchmark work used in this file.
def make_benchmark(
    spec: BenchmarkSpec,
    rng: RngStream | None = None,
) -> Benchmark:
    """Pure function of ``spec`` (and ``rng`` when one is given)."""
    spec.validate()
    rng = rng or RngStream(spec.seed, "benchmark")
    samples = rng.child("samples")

    total = spec.n + spec.test_size
    modes = ring_modes(spec.num_classes, spec.data_dim, spec.radius)
    labels = samples.integers(0, spec.num_classes, total).astype(np.int64)
    inputs = modes[labels] + spec.spread * samples.normal(
        (total, spec.data_dim)
    )

    order = samples.permutation(total)
    n_val = max(1, int(round(spec.n * VAL_FRACTION)))
    pool, test_rows = order[: spec.n], order[spec.n :]
    val_rows, train_rows = pool[:n_val], pool[n_val:]

    def split(rows: np.ndarray, name: str) -> ToyDataset:
        rows = np.sort(rows)
        return ToyDataset(inputs[rows], labels[rows], name, rows)

    generator = build_generator(
        spec, modes, spec.spread, rng.child("generator")
    )
    logger.debug(
        "Built benchmark K=%d n=%d rho=%.3f tau=%.3f",
        spec.num_classes,
        spec.n,
        spec.leak_rate,
        generator.threshold,
    )
    return Benchmark(
        spec=spec,
        train=split(train_rows, "train"),
        val=split(val_rows, "val"),
        test=split(test_rows, "test"),
        generator=generator,
    )


# This function refits the generator work used in this file.
def refit_generator(
    benchmark: Benchmark, train: ToyDataset
) -> LeakyGenerator:
    """Generator whose modes and spread come from ``train`` alone."""
    k = benchmark.spec.num_classes
    counts = train.class_counts(k)
    if np.any(counts == 0):
        missing = np.flatnonzero(counts == 0).tolist()
        raise BenchmarkError(
            f"subsample leaves classes {missing} without training samples"
        )
    modes = np.stack(
        [train.inputs[train.labels == c].mean(axis=0) for c in range(k)]
    )
    residuals = train.inputs - modes[train.labels]
    dof = max(residuals.size - k * benchmark.spec.data_dim, 1)
    spread = float(np.sqrt(np.sum(residuals**2) / dof))
    return LeakyGenerator(
        modes=modes,
        spread=spread,
        threshold=benchmark.generator.threshold,
        sharpness=benchmark.generator.sharpness,
        projections=benchmark.generator.projections,
        latent_dim=benchmark.generator.latent_dim,
    )


# This function subsamples the benchmark work used in this file.
def subsample_benchmark(
    benchmark: Benchmark, fraction: float, seed: int = 0
) -> Benchmark:
    """Reduce the train split on a fixed seed and refit the generator.

    ``fraction == 1`` returns the benchmark unchanged.
    """
    if not 0.0 < fraction <= 1.0:
        raise BenchmarkError(f"fraction must lie in (0, 1], got {fraction}")
    if fraction == 1.0:
        return benchmark
    keep = int(round(fraction * len(benchmark.train)))
    if keep < benchmark.spec.num_classes:
        raise BenchmarkError(
            f"fraction {fraction} keeps {keep} samples, fewer than "
            f"{benchmark.spec.num_classes} classes"
        )
    rows = np.sort(
        RngStream(seed, "size-sweep").permutation(len(benchmark.train))[:keep]
    )
    train = benchmark.train.subset(rows)
    return Benchmark(
        spec=benchmark.spec,
        train=train,
        val=benchmark.val,
        test=benchmark.test,
        generator=refit_generator(benchmark, train),
    )
