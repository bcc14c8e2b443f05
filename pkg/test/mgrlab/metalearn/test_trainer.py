"""Tests for the training loop and its steps."""

from dataclasses import replace

import numpy as np
import pytest

from mgrlab.bench import accuracy
from mgrlab.diffcore import RngStream, Tensor
from mgrlab.metalearn import (
    METHODS,
    DegenerateEpsilonError,
    MetaConfigError,
    build_state,
    hard_example_f_update,
    main_step,
    mps_step,
    seed_stream,
    train,
    trainer,
)
from mgrlab.objectives import Batch


def _first_batch(benchmark, size=18):
    train_set = benchmark.train
    return Batch(Tensor(train_set.inputs[:size]), train_set.labels[:size])


def _events(method, benchmark, training, count=3):
    events = []
    train(
        method,
        benchmark,
        replace(training, epochs=1),
        seed_stream(0),
        hooks=[lambda event, state: events.append(event)],
    )
    return events[:count]


# This class keeps the test call order data and behavior in one place.
class TestCallOrder:
    @pytest.mark.parametrize("method", ["mgr", "gda-mps", "mgr-latentaug"])
    def test_meta_methods(self, method, tiny_benchmark, tiny_training):
        assert _events(method, tiny_benchmark, tiny_training) == [
            "virtual_step",
            "finder_update",
            "real_update",
        ]

    def test_exact_mode_same_order(self, tiny_benchmark, tiny_training):
        training = replace(tiny_training, meta_mode="exact")

        assert _events("mgr", tiny_benchmark, training) == [
            "virtual_step",
            "finder_update",
            "real_update",
        ]

    @pytest.mark.parametrize("method", ["f-hard-ce", "f-hard-pcr"])
    def test_hard_example_methods(
        self, method, tiny_benchmark, tiny_training
    ):
        assert _events(method, tiny_benchmark, tiny_training, 2) == [
            "finder_update",
            "real_update",
        ]

    def test_baselines_only_update_classifier(
        self, tiny_benchmark, tiny_training
    ):
        events = _events("pcr", tiny_benchmark, tiny_training, count=100)

        assert set(events) == {"real_update"}


# This class keeps the test steps data and behavior in one place.
class TestSteps:
    def test_meta_step_leaves_classifier_alone(
        self, tiny_benchmark, tiny_training
    ):
        training = replace(tiny_training, method="mgr")
        state = build_state(training, tiny_benchmark, seed_stream(0))
        model_before = state.model.state_dict()
        finder_before = state.finder.state_dict()

        assert mps_step(state, _first_batch(tiny_benchmark))

        for name, values in state.model.state_dict().items():
            np.testing.assert_array_equal(values, model_before[name])
        assert any(
            not np.array_equal(values, finder_before[name])
            for name, values in state.finder.state_dict().items()
        )

    def test_main_step_leaves_finder_alone(
        self, tiny_benchmark, tiny_training
    ):
        training = replace(tiny_training, method="mgr")
        state = build_state(training, tiny_benchmark, seed_stream(0))
        finder_before = state.finder.state_dict()
        model_before = state.model.state_dict()

        loss = main_step(state, _first_batch(tiny_benchmark))

        assert np.isfinite(loss)
        for name, values in state.finder.state_dict().items():
            np.testing.assert_array_equal(values, finder_before[name])
        assert any(
            not np.array_equal(values, model_before[name])
            for name, values in state.model.state_dict().items()
        )

    def test_first_meta_step_keeps_finder_near_identity(
        self, tiny_benchmark, tiny_training
    ):
        training = replace(tiny_training, method="mgr")
        state = build_state(training, tiny_benchmark, seed_stream(0))
        z = state.prior.sample(64, RngStream(5, "held-out"))

        assert mps_step(state, _first_batch(tiny_benchmark))

        moved = np.abs(state.finder.forward(z).values - z.values).max()
        assert 0.0 < moved < 100 * training.finder_lr

    def test_main_step_loss_falls_on_a_fixed_batch(
        self, tiny_benchmark, tiny_training
    ):
        training = replace(tiny_training, method="base", lr=0.05)
        state = build_state(training, tiny_benchmark, seed_stream(0))
        batch = _first_batch(tiny_benchmark)

        losses = [main_step(state, batch) for _ in range(10)]

        assert losses[-1] < losses[0]
        assert min(losses[5:]) < min(losses[:5])

    def test_meta_and_main_steps_draw_separately(
        self, tiny_benchmark, tiny_training, monkeypatch
    ):
        drawn = []
        original = trainer._draw_pseudo

        def recording(*args, **kwargs):
            drawn.append(original(*args, **kwargs))
            return drawn[-1]

        monkeypatch.setattr(
            "mgrlab.metalearn.trainer._draw_pseudo", recording
        )
        state = build_state(
            replace(tiny_training, method="mgr"),
            tiny_benchmark,
            seed_stream(0),
        )
        batch = _first_batch(tiny_benchmark)

        mps_step(state, batch)
        main_step(state, batch)

        meta, main = drawn
        assert not np.array_equal(meta.z.values, main.z.values)
        assert not np.array_equal(meta.transform.angle, main.transform.angle)

    def test_meta_step_needs_finder(self, tiny_benchmark, tiny_training):
        state = build_state(
            replace(tiny_training, method="gda"),
            tiny_benchmark,
            seed_stream(0),
        )

        with pytest.raises(MetaConfigError, match="does not train a finder"):
            mps_step(state, _first_batch(tiny_benchmark))

    def test_degenerate_epsilon_skips_step(
        self, tiny_benchmark, tiny_training, monkeypatch
    ):
        def degenerate(*args, **kwargs):
            raise DegenerateEpsilonError(0.0)

        monkeypatch.setattr(
            "mgrlab.metalearn.trainer.meta_gradient", degenerate
        )
        events = []
        state = build_state(
            replace(tiny_training, method="mgr"),
            tiny_benchmark,
            seed_stream(0),
            hooks=[lambda event, _: events.append(event)],
        )
        finder_before = state.finder.state_dict()

        assert mps_step(state, _first_batch(tiny_benchmark)) is False
        assert state.skipped_meta_steps == 1
        assert events == ["finder_skipped"]
        for name, values in state.finder.state_dict().items():
            np.testing.assert_array_equal(values, finder_before[name])

    def test_hard_example_update_moves_finder(
        self, tiny_benchmark, tiny_training
    ):
        state = build_state(
            replace(tiny_training, method="f-hard-ce"),
            tiny_benchmark,
            seed_stream(0),
        )
        before = state.finder.state_dict()

        loss = hard_example_f_update(state, "ce")

        assert loss > 0
        assert any(
            not np.array_equal(values, before[name])
            for name, values in state.finder.state_dict().items()
        )

    def test_hard_example_rejects_unknown_objective(
        self, tiny_benchmark, tiny_training
    ):
        state = build_state(
            replace(tiny_training, method="f-hard-ce"),
            tiny_benchmark,
            seed_stream(0),
        )

        with pytest.raises(ValueError, match="objective"):
            hard_example_f_update(state, "mse")

    def test_inner_rate_follows_schedule(self, tiny_benchmark, tiny_training):
        state = build_state(
            replace(tiny_training, method="mgr"),
            tiny_benchmark,
            seed_stream(0),
        )
        state.model_opt.lr = 0.001

        assert state.inner_lr == 0.001
        state.cfg = replace(state.cfg, inner_lr=0.05)
        assert state.inner_lr == 0.05


# This class keeps the test train loop data and behavior in one place.
class TestTrain:
    @pytest.mark.parametrize("method", METHODS)
    def test_every_method_trains(self, method, tiny_benchmark, tiny_training):
        result = train(
            method,
            tiny_benchmark,
            replace(tiny_training, epochs=1),
            seed_stream(0),
        )
        row = result.record.rows[0]

        assert result.record.method == method
        assert np.isfinite(row.train_loss)
        assert 0.0 <= row.test_acc <= 1.0
        assert row.frechet >= 0.0
        assert (result.finder is not None) == (
            method
            in {
                "gda-mps",
                "mgr",
                "f-hard-ce",
                "f-hard-pcr",
                "mgr-latentaug",
                "mgr-latentonly",
            }
        )

    def test_same_seed_same_rows(self, tiny_benchmark, tiny_training):
        a = train("mgr", tiny_benchmark, tiny_training, seed_stream(3))
        b = train("mgr", tiny_benchmark, tiny_training, seed_stream(3))

        assert [r.as_csv() for r in a.record.rows] == [
            r.as_csv() for r in b.record.rows
        ]

    def test_other_seed_other_rows(self, tiny_benchmark, tiny_training):
        a = train("gda", tiny_benchmark, tiny_training, seed_stream(0))
        b = train("gda", tiny_benchmark, tiny_training, seed_stream(1))

        assert [r.train_loss for r in a.record.rows] != [
            r.train_loss for r in b.record.rows
        ]

    def test_restores_best_validation_epoch(
        self, tiny_benchmark, tiny_training
    ):
        result = train("pcr", tiny_benchmark, tiny_training, seed_stream(0))
        record = result.record
        val = tiny_benchmark.val
        restored = accuracy(
            result.model.classify(Tensor(val.inputs)).values, val.labels
        )

        assert record.selected_epoch == record.best_row().epoch
        assert restored == record.selected.val_acc

    def test_writes_checkpoints(self, tiny_benchmark, tiny_training, tmp_path):
        train(
            "mgr",
            tiny_benchmark,
            tiny_training,
            seed_stream(0),
            checkpoint_dir=tmp_path,
        )
        names = sorted(p.name for p in tmp_path.iterdir())

        assert names == ["best.mgrl", "milestone-1.mgrl", "milestone-2.mgrl"]

    def test_reports_each_epoch(self, tiny_benchmark, tiny_training):
        seen = []
        train(
            "base",
            tiny_benchmark,
            tiny_training,
            seed_stream(0),
            on_epoch=seen.append,
        )

        assert [row.epoch for row in seen] == [1, 2, 3]

    def test_unknown_method(self, tiny_benchmark, tiny_training):
        with pytest.raises(MetaConfigError, match="unknown method"):
            train("magic", tiny_benchmark, tiny_training, seed_stream(0))
