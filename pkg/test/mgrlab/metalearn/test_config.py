"""Tests for training configuration and run records."""

from dataclasses import replace

import pytest

from mgrlab.metalearn import EpochRow, MetaConfig, MetaConfigError, RunRecord


def _row(epoch, val_acc):
    return EpochRow(
        epoch=epoch,
        train_loss=1.0,
        val_loss=1.0,
        val_acc=val_acc,
        test_acc=0.5,
        frechet=0.1,
        leak_rate=0.2,
    )


# This class keeps the test meta config data and behavior in one place.
class TestMetaConfig:
    def test_defaults_validate(self):
        MetaConfig().validate()

    def test_milestones_of_two_hundred_epochs(self):
        assert MetaConfig().milestones == (60, 120, 160)

    def test_derived_flags(self):
        mgr = MetaConfig(method="mgr")
        base = MetaConfig(method="base")

        assert mgr.uses_finder and mgr.uses_meta and mgr.uses_pseudo
        assert not base.uses_finder and not base.uses_pseudo
        assert MetaConfig(method="gda-mh").needs_aux_head
        assert MetaConfig(method="f-hard-ce").uses_finder
        assert not MetaConfig(method="f-hard-ce").uses_meta

    def test_noise_scales_with_spread(self):
        spec = MetaConfig(noise_scale=0.1).transform_spec(0.7)

        assert spec.noise_std == pytest.approx(0.07)

    @pytest.mark.parametrize(
        ("changes", "message"),
        [
            ({"method": "magic"}, "unknown method"),
            ({"lam": 0.0}, "grid domain"),
            ({"lam": 1.2}, "grid domain"),
            ({"meta_mode": "reverse"}, "meta mode"),
            ({"kl_form": "other"}, "kl form"),
            ({"finder_variant": "conv"}, "finder variant"),
            ({"epochs": 0}, "epochs"),
            ({"eps_const": 0.0}, "epsilon"),
            ({"momentum": 1.0}, "momentum"),
            ({"pseudo_batch_size": 1}, "pseudo_batch_size"),
            ({"scale_range": (1.5, 1.0)}, "scale range"),
        ],
    )
    def test_rejects(self, changes, message):
        with pytest.raises(MetaConfigError, match=message):
            replace(MetaConfig(), **changes).validate()


# This class keeps the test run record data and behavior in one place.
class TestRunRecord:
    def test_best_row_prefers_earliest_tie(self):
        record = RunRecord("mgr", 0, 0.5)
        for epoch, acc in [(1, 0.4), (2, 0.7), (3, 0.7), (4, 0.6)]:
            record.add(_row(epoch, acc))

        assert record.best_row().epoch == 2
        assert record.final.epoch == 4

    def test_epochs_must_increase(self):
        record = RunRecord("mgr", 0, 0.5)
        record.add(_row(2, 0.5))

        with pytest.raises(MetaConfigError, match="does not follow"):
            record.add(_row(2, 0.6))

    def test_csv_keeps_full_precision(self):
        row = _row(1, 1.0 / 3.0)

        assert float(row.as_csv()[3]) == 1.0 / 3.0

    def test_to_dict(self):
        record = RunRecord("pcr", 2, 0.3, selected_epoch=1)
        record.add(_row(1, 0.9))

        data = record.to_dict()
        assert data["selected"]["val_acc"] == 0.9
        assert data["seed"] == 2
