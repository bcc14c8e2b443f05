"""Qualitative trends on the default leaky benchmark.

These train every method for the full schedule over five seeds, so they
are deselected by default; run them with ``pytest -m slow``.
"""

from dataclasses import replace

import numpy as np
import pytest

from mgrlab.bench import BenchmarkSpec, make_benchmark, size_sweep
from mgrlab.bench.metrics import leakage_rate, paired_improvement_pvalue
from mgrlab.diffcore import RngStream, no_record
from mgrlab.experiment.checks import meta_step_timing
from mgrlab.metalearn import MetaConfig, seed_stream, train

SEEDS = (0, 1, 2, 3, 4)
METHODS = ("base", "gda", "pcr", "mgr")
SWEEP_FRACTIONS = (0.1, 0.25, 0.5, 1.0)

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def leaky():
    return make_benchmark(BenchmarkSpec(leak_rate=0.3))


@pytest.fixture(scope="module")
def results(leaky):
    config = MetaConfig()
    return {
        method: [
            train(method, leaky, config, seed_stream(seed)) for seed in SEEDS
        ]
        for method in METHODS
    }


@pytest.fixture(scope="module")
def sweep():
    return size_sweep(
        BenchmarkSpec(leak_rate=0.3),
        SWEEP_FRACTIONS,
        ("base", "mgr"),
        MetaConfig(),
        SEEDS,
    )


def _test_acc(results, method):
    return [r.record.selected.test_acc for r in results[method]]


def _sweep_acc(cells, fraction, method):
    return np.mean(
        [
            c.report.accuracy
            for c in cells
            if c.fraction == fraction and c.method == method
        ]
    )


# This class keeps the test trends data and behavior in one place.
class TestTrends:
    def test_leaky_augmentation_hurts(self, results):
        base = _test_acc(results, "base")
        gda = _test_acc(results, "gda")

        assert np.mean(gda) < np.mean(base)
        assert paired_improvement_pvalue(base, gda) < 0.05

    def test_mgr_beats_the_baselines(self, results):
        base = _test_acc(results, "base")
        gda = _test_acc(results, "gda")
        pcr = _test_acc(results, "pcr")
        mgr = _test_acc(results, "mgr")

        assert paired_improvement_pvalue(mgr, base) < 0.05
        assert paired_improvement_pvalue(mgr, gda) < 0.05
        assert np.mean(mgr) >= np.mean(pcr)

    def test_early_validation_loss_is_lower_with_the_finder(self, results):
        def early(method):
            means = []
            for result in results[method]:
                rows = result.record.rows
                quarter = rows[: max(1, len(rows) // 4)]
                means.append(np.mean([r.val_loss for r in quarter]))
            return np.mean(means)

        assert early("mgr") < early("pcr")

    def test_finder_steers_away_from_leakage(self, results, leaky):
        before, after = [], []
        for seed, result in zip(SEEDS, results["mgr"], strict=True):
            z = result.state.prior.sample(10_000, RngStream(seed, "held-out"))
            with no_record():
                moved = result.finder.forward(z).values
            before.append(leakage_rate(z.values, leaky.generator))
            after.append(leakage_rate(moved, leaky.generator))

        assert np.mean(after) < np.mean(before)

    def test_fd_meta_step_is_cheaper(self):
        seconds = meta_step_timing(width=64, repeats=5)

        assert seconds["fd"] < seconds["exact"]

    def test_mgr_gap_is_larger_on_small_splits(self, sweep):
        def gap(fraction):
            return _sweep_acc(sweep, fraction, "mgr") - _sweep_acc(
                sweep, fraction, "base"
            )

        assert gap(0.1) > gap(1.0)

    def test_base_accuracy_grows_with_the_split(self, sweep):
        acc = [_sweep_acc(sweep, f, "base") for f in SWEEP_FRACTIONS]

        assert all(a <= b for a, b in zip(acc, acc[1:]))

    def test_finder_batches_sit_closer_to_real_data(self, results):
        def frechet(method):
            return np.mean(
                [
                    np.mean([row.frechet for row in r.record.rows])
                    for r in results[method]
                ]
            )

        assert frechet("mgr") <= frechet("pcr")

    def test_finder_ablation_ordering(self, results, leaky):
        acc = {"residual-mlp": _test_acc(results, "mgr")}
        for variant in ("residual-shallow", "linear", "plain-mlp"):
            config = replace(MetaConfig(), finder_variant=variant)
            acc[variant] = [
                train("mgr", leaky, config, seed_stream(seed))
                .record.selected.test_acc
                for seed in SEEDS
            ]
        mean = {variant: np.mean(values) for variant, values in acc.items()}

        assert mean["residual-mlp"] >= mean["residual-shallow"]
        assert mean["residual-shallow"] >= mean["linear"]
        assert mean["residual-shallow"] >= mean["plain-mlp"]
        assert (
            paired_improvement_pvalue(
                acc["residual-mlp"], acc["plain-mlp"]
            )
            < 0.1
        )
