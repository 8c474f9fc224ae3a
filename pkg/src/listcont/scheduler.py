"""Curriculum schedules for target-side masking difficulty.

A schedule maps an epoch index to a masking difficulty in (0, 1]: the fraction
of each target list that gets masked during that epoch. Training starts easy
(small suffix masked) and ramps to the full-mask regime that matches inference,
where every target position is a mask.

Two kinds are provided:

* ``naive``: difficulty 1.0 from the first epoch (no curriculum).
* ``stepwise``: the epoch budget is divided into ``steps`` equal units and the
  difficulty within unit ``s`` (0-based) is ``(s + 1) / steps``. The final unit
  always reaches 1.0, and a single-step schedule degenerates to ``naive``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

__all__ = ["DifficultySchedule", "make_schedule"]

_KINDS = ("naive", "stepwise")


@dataclass(frozen=True)
class DifficultySchedule:
    """Deterministic epoch -> difficulty mapping.

    ``unit_len`` is ``total_epochs // steps``; the remainder epochs are absorbed
    by the final unit so the schedule always ends at difficulty 1.0.
    """

    kind: str
    steps: int
    total_epochs: int

    def difficulty_at(self, epoch: int) -> float:
        """Masking difficulty for ``epoch`` (0-based), a float in (0, 1]."""
        if not 0 <= epoch < self.total_epochs:
            raise ValueError(
                f"epoch {epoch} outside schedule range [0, {self.total_epochs})"
            )
        if self.kind == "naive":
            return 1.0
        unit_len = self.total_epochs // self.steps
        unit = min(epoch // unit_len, self.steps - 1)
        return (unit + 1) / self.steps

    def __len__(self) -> int:
        return self.total_epochs

    def rows(self) -> list[tuple[int, float]]:
        """All (epoch, difficulty) pairs, for inspection or CSV export."""
        return [(e, self.difficulty_at(e)) for e in range(self.total_epochs)]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "difficulty"])
            writer.writerows(self.rows())


def make_schedule(kind: str, steps: int, total_epochs: int) -> DifficultySchedule:
    """Build a difficulty schedule.

    Args:
        kind: ``"naive"`` or ``"stepwise"``.
        steps: number of curriculum units; must satisfy 1 <= steps <= total_epochs.
            Ignored semantically for ``naive`` but still validated.
        total_epochs: length of the schedule, >= 1.

    Raises:
        ValueError: on an unknown kind or an infeasible steps/epochs combination.
    """
    if kind not in _KINDS:
        raise ValueError(f"unknown schedule kind {kind!r}; expected one of {_KINDS}")
    if total_epochs < 1:
        raise ValueError(f"total_epochs must be >= 1, got {total_epochs}")
    if not 1 <= steps <= total_epochs:
        raise ValueError(
            f"steps must be in [1, total_epochs={total_epochs}], got {steps}"
        )
    return DifficultySchedule(kind=kind, steps=steps, total_epochs=total_epochs)
