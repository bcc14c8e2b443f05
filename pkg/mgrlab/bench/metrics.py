"""This file handles the evaluation metrics for the bench part."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, special, stats

from mgrlab.bench.errors import BenchmarkError
from mgrlab.models import LeakyGenerator

EIGEN_FLOOR = 1e-12


def _covariance(rows: np.ndarray) -> np.ndarray:
    return np.atleast_2d(np.cov(rows, rowvar=False))


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    values, vectors = linalg.eigh((matrix + matrix.T) / 2.0)
    values = np.maximum(values, EIGEN_FLOOR)
    return (vectors * np.sqrt(values)) @ vectors.T


# This function computes the frechet distance work used in this file.
def frechet_distance(sample_a: np.ndarray, sample_b: np.ndarray) -> float:
    """|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)).

    The cross term is the trace of the root of the symmetric matrix
    S_a^(1/2) S_b S_a^(1/2); eigenvalues are floored at 1e-12.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise BenchmarkError("frechet distance expects 2-D feature rows")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise BenchmarkError("frechet distance needs at least 2 rows each")
    if a.shape[1] != b.shape[1]:
        raise BenchmarkError(
            f"feature dims differ: {a.shape[1]} vs {b.shape[1]}"
        )

    cov_a, cov_b = _covariance(a), _covariance(b)
    root_a = _psd_sqrt(cov_a)
    middle = root_a @ cov_b @ root_a
    cross = np.sum(
        np.sqrt(np.maximum(linalg.eigvalsh((middle + middle.T) / 2.0), 0.0))
    )
    mean_gap = np.sum((a.mean(axis=0) - b.mean(axis=0)) ** 2)
    value = mean_gap + np.trace(cov_a) + np.trace(cov_b) - 2.0 * cross
    return float(max(value, 0.0))


# This function computes the leak weights work used in this file.
def leak_weights(z: np.ndarray, gen: LeakyGenerator) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return special.expit(gen.sharpness * (z[:, 0] - gen.threshold))


# This function computes the leakage rate work used in this file.
def leakage_rate(z: np.ndarray, gen: LeakyGenerator) -> float:
    """Fraction of rows whose leak weight is strictly above one half."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] == 0:
        return 0.0
    return float(np.mean(leak_weights(z, gen) > 0.5))


# This function computes the accuracy work used in this file.
def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    logits = np.asarray(logits)
    if logits.shape[0] == 0:
        raise BenchmarkError("accuracy of an empty set is undefined")
    return float(np.mean(np.argmax(logits, axis=1) == labels))


# This function computes the paired p-value work used in this file.
def paired_improvement_pvalue(
    better: Sequence[float], worse: Sequence[float]
) -> float:
    """One-sided paired t-test that ``better`` exceeds ``worse``."""
    better, worse = np.asarray(better), np.asarray(worse)
    if np.allclose(better, worse):
        return 1.0
    return float(stats.ttest_rel(better, worse, alternative="greater").pvalue)


# This class keeps the metric report data and behavior in one place.
@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    val_loss: float
    frechet: float
    leak_rate: float
    traces: dict[str, list[float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= self.accuracy <= 1.0:
            raise BenchmarkError(f"accuracy {self.accuracy} outside [0, 1]")
        if self.frechet < 0:
            raise BenchmarkError("frechet distance must be >= 0")

    @classmethod
    def from_rows(cls, rows: Sequence, selected) -> MetricReport:
        return cls(
            accuracy=selected.test_acc,
            val_loss=float(np.mean([r.val_loss for r in rows])),
            frechet=selected.frechet,
            leak_rate=selected.leak_rate,
            traces={
                "val_loss": [r.val_loss for r in rows],
                "frechet": [r.frechet for r in rows],
                "leak_rate": [r.leak_rate for r in rows],
                "test_acc": [r.test_acc for r in rows],
            },
        )
