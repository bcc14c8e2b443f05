"""This file handles the embedding export for the bench part of the project."""

from __future__ import annotations

import csv
import io
import logging
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from mgrlab.atomic import atomic_write_text
from mgrlab.bench.datasets import ToyDataset
from mgrlab.diffcore import Tensor, no_record
from mgrlab.models import FeatureExtractor, MainModel
from mgrlab.objectives import Batch

logger = logging.getLogger(__name__)


# This function builds the embedding header work used in this file.
def embedding_header(feature_dim: int) -> list[str]:
    return ["source", "label", *(f"f{i}" for i in range(feature_dim))]


def _features(net: FeatureExtractor | MainModel, x: np.ndarray) -> np.ndarray:
    with no_record():
        if isinstance(net, MainModel):
            return net.features(Tensor(x)).values
        return net.forward(Tensor(x)).values


# This function exports the embeddings work used in this file.
def export_embeddings(
    net: FeatureExtractor | MainModel,
    datasets: Sequence[ToyDataset],
    pseudo_batches: Sequence[Batch],
    path: Path | str,
) -> int:
    """Write one CSV row per real and synthetic sample; returns row count."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    feature_dim = None
    rows = 0

    def emit(source: str, x: np.ndarray, labels: np.ndarray) -> None:
        nonlocal feature_dim, rows
        if len(labels) == 0:
            return
        feats = _features(net, x)
        if feature_dim is None:
            feature_dim = feats.shape[1]
            writer.writerow(embedding_header(feature_dim))
        for label, feat in zip(labels, feats, strict=True):
            writer.writerow(
                [source, int(label), *(f"{v:.17g}" for v in feat)]
            )
            rows += 1

    for dataset in datasets:
        emit("real", dataset.inputs, dataset.labels)
    for batch in pseudo_batches:
        emit("synthetic", batch.x.values, batch.y)
    if feature_dim is None:
        extractor = net.extractor if isinstance(net, MainModel) else net
        writer.writerow(embedding_header(extractor.feature_dim))

    atomic_write_text(path, buffer.getvalue())
    logger.info("Exported %d embedding rows to %s", rows, path)
    return rows
