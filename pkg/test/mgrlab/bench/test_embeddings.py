"""Tests for the embedding CSV export."""

import csv

import numpy as np

from mgrlab.bench import embedding_header, export_embeddings
from mgrlab.diffcore import Tensor
from mgrlab.models import build_main_model
from mgrlab.objectives import Batch


# This class keeps the test export data and behavior in one place.
class TestExportEmbeddings:
    def test_rows_and_sources(self, tiny_benchmark, rng, tmp_path):
        model = build_main_model(2, (8,), 5, 3, rng)
        pseudo = Batch(Tensor(rng.normal((7, 2))), np.zeros(7, dtype=int))
        path = tmp_path / "emb.csv"

        count = export_embeddings(
            model, [tiny_benchmark.train, tiny_benchmark.val], [pseudo], path
        )
        with path.open() as handle:
            rows = list(csv.reader(handle))

        assert count == 54 + 6 + 7
        assert rows[0] == embedding_header(5)
        assert len(rows) == count + 1
        assert {r[0] for r in rows[1:]} == {"real", "synthetic"}
        assert rows[-1][0] == "synthetic"

    def test_features_written_at_full_precision(self, rng, tmp_path):
        model = build_main_model(2, (4,), 3, 3, rng)
        x = rng.normal((2, 2))
        pseudo = Batch(Tensor(x), np.array([1, 2]))
        path = tmp_path / "emb.csv"

        export_embeddings(model, [], [pseudo], path)
        with path.open() as handle:
            rows = list(csv.reader(handle))[1:]
        written = np.array([[float(v) for v in r[2:]] for r in rows])

        np.testing.assert_array_equal(
            written, model.features(Tensor(x)).values
        )

    def test_header_only_when_empty(self, rng, tmp_path):
        model = build_main_model(2, (4,), 3, 3, rng)
        path = tmp_path / "emb.csv"

        assert export_embeddings(model, [], [], path) == 0
        assert path.read_text() == "source,label,f0,f1,f2\n"
