"""This file handles the run records for the metalearn part of the project."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from mgrlab.metalearn.errors import MetaConfigError

METRIC_COLUMNS = (
    "epoch",
    "train_loss",
    "val_loss",
    "val_acc",
    "test_acc",
    "frechet",
    "leak_rate",
)


# This class keeps the epoch row data and behavior in one place.
@dataclass(frozen=True)
class EpochRow:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float
    test_acc: float
    frechet: float
    leak_rate: float

    def as_csv(self) -> list[str]:
        # repr keeps every digit so re-runs compare byte for byte.
        return [repr(getattr(self, column)) for column in METRIC_COLUMNS]


# This class keeps the run record data and behavior in one place.
@dataclass
class RunRecord:
    method: str
    seed: int
    lam: float
    rows: list[EpochRow] = field(default_factory=list)
    selected_epoch: int | None = None
    wall_clock: float = 0.0
    skipped_meta_steps: int = 0

    def add(self, row: EpochRow) -> None:
        if self.rows and row.epoch <= self.rows[-1].epoch:
            raise MetaConfigError(
                f"epoch {row.epoch} does not follow {self.rows[-1].epoch}"
            )
        self.rows.append(row)

    def best_row(self) -> EpochRow:
        """Highest validation accuracy; the earliest epoch wins ties."""
        if not self.rows:
            raise MetaConfigError("run record has no epochs")
        return max(self.rows, key=lambda row: (row.val_acc, -row.epoch))

    @property
    def selected(self) -> EpochRow:
        if self.selected_epoch is None:
            return self.best_row()
        return next(r for r in self.rows if r.epoch == self.selected_epoch)

    @property
    def final(self) -> EpochRow:
        return self.rows[-1]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "seed": self.seed,
            "lam": self.lam,
            "selected_epoch": self.selected_epoch,
            "selected": asdict(self.selected) if self.rows else None,
            "skipped_meta_steps": self.skipped_meta_steps,
        }
