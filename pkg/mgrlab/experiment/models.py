"""This file handles the run registry for the experiment part."""

import datetime
import logging

from mgrlab.extensions import db

logger = logging.getLogger(__name__)


def _utcnow():
    return datetime.datetime.now(datetime.UTC)


# This class keeps the experiment run data and behavior in one place.
class ExperimentRun(db.Model):
    """One trained (method, seed, lambda) cell of an experiment."""

    __tablename__ = "experiment_runs"

    id = db.Column(db.Integer, primary_key=True)
    created_at = db.Column(db.DateTime, default=_utcnow, nullable=False)

    # sha256 of the canonical experiment config.
    config_hash = db.Column(db.String(64), nullable=False, index=True)

    method = db.Column(db.String(32), nullable=False, index=True)
    seed = db.Column(db.Integer, nullable=False)
    lam = db.Column(db.Float, nullable=True)

    # complete or failed.
    status = db.Column(db.String(16), nullable=False, default="complete")
    error = db.Column(db.Text, nullable=True)

    selected_epoch = db.Column(db.Integer, nullable=True)
    val_acc = db.Column(db.Float, nullable=True)
    test_acc = db.Column(db.Float, nullable=True)
    frechet = db.Column(db.Float, nullable=True)
    leak_rate = db.Column(db.Float, nullable=True)
    skipped_meta_steps = db.Column(db.Integer, nullable=False, default=0)
    wall_clock = db.Column(db.Float, nullable=True)
    artifact_dir = db.Column(db.Text, nullable=True)

    epochs = db.relationship(
        "EpochMetric",
        backref="run",
        cascade="all, delete-orphan",
        order_by="EpochMetric.epoch",
    )

    def to_dict(self):
        """Serialise for summaries and the CLI."""
        return {
            "id": self.id,
            "config_hash": self.config_hash,
            "method": self.method,
            "seed": self.seed,
            "lam": self.lam,
            "status": self.status,
            "error": self.error,
            "selected_epoch": self.selected_epoch,
            "val_acc": self.val_acc,
            "test_acc": self.test_acc,
            "frechet": self.frechet,
            "leak_rate": self.leak_rate,
            "skipped_meta_steps": self.skipped_meta_steps,
            "wall_clock": self.wall_clock,
            "artifact_dir": self.artifact_dir,
        }

    def __repr__(self):
        return f"<ExperimentRun {self.id} {self.method} seed={self.seed}>"


class EpochMetric(db.Model):
    __tablename__ = "epoch_metrics"
    __table_args__ = (db.UniqueConstraint("run_id", "epoch"),)

    id = db.Column(db.Integer, primary_key=True)
    run_id = db.Column(
        db.Integer,
        db.ForeignKey("experiment_runs.id", ondelete="CASCADE"),
        nullable=False,
        index=True,
    )
    epoch = db.Column(db.Integer, nullable=False)
    train_loss = db.Column(db.Float, nullable=False)
    val_loss = db.Column(db.Float, nullable=False)
    val_acc = db.Column(db.Float, nullable=False)
    test_acc = db.Column(db.Float, nullable=False)
    frechet = db.Column(db.Float, nullable=False)
    leak_rate = db.Column(db.Float, nullable=False)

    def __repr__(self):
        return f"<EpochMetric run={self.run_id} epoch={self.epoch}>"


# This function records the cell work used in this file.
def record_cell(config_hash: str, cell: dict) -> ExperimentRun | None:
    """Store one cell result; registry trouble never fails the experiment."""
    try:
        selected = cell.get("selected") or {}
        run = ExperimentRun(
            config_hash=config_hash,
            method=cell["method"],
            seed=cell["seed"],
            lam=cell.get("lam"),
            status=cell["status"],
            error=cell.get("error"),
            selected_epoch=cell.get("selected_epoch"),
            val_acc=selected.get("val_acc"),
            test_acc=selected.get("test_acc"),
            frechet=selected.get("frechet"),
            leak_rate=selected.get("leak_rate"),
            skipped_meta_steps=cell.get("skipped_meta_steps", 0),
            wall_clock=cell.get("wall_clock"),
            artifact_dir=cell.get("cell_dir"),
        )
        for row in cell.get("rows", []):
            run.epochs.append(EpochMetric(**row))
        db.session.add(run)
        db.session.commit()
        return run
    except Exception:
        db.session.rollback()
        logger.exception(
            "Could not record %s seed=%s in the registry",
            cell.get("method"),
            cell.get("seed"),
        )
        return None
