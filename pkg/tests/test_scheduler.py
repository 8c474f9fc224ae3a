"""Tests for the curriculum difficulty scheduler."""

from __future__ import annotations

import pytest

from listcont.scheduler import DifficultySchedule, make_schedule


def test_naive_schedule_is_constant_full_difficulty():
    """The naive schedule masks at full difficulty from the first epoch."""
    sched = make_schedule("naive", steps=1, total_epochs=7)
    assert len(sched) == 7
    assert [sched.difficulty_at(e) for e in range(7)] == [1.0] * 7


def test_stepwise_schedule_even_division():
    """With total divisible by steps, each unit holds for total/steps epochs."""
    sched = make_schedule("stepwise", steps=5, total_epochs=200)
    assert sched.difficulty_at(0) == pytest.approx(0.2)
    assert sched.difficulty_at(39) == pytest.approx(0.2)
    assert sched.difficulty_at(40) == pytest.approx(0.4)
    assert sched.difficulty_at(119) == pytest.approx(0.6)
    assert sched.difficulty_at(120) == pytest.approx(0.8)
    assert sched.difficulty_at(160) == pytest.approx(1.0)
    assert sched.difficulty_at(199) == pytest.approx(1.0)


def test_stepwise_schedule_remainder_goes_to_last_unit():
    """When steps does not divide total, the final level absorbs the extra epochs."""
    sched = make_schedule("stepwise", steps=3, total_epochs=10)
    values = [sched.difficulty_at(e) for e in range(10)]
    expected = [1 / 3] * 3 + [2 / 3] * 3 + [1.0] * 4
    assert values == pytest.approx(expected)


def test_stepwise_single_step_equals_naive():
    """A one-step curriculum degenerates to the naive schedule."""
    step = make_schedule("stepwise", steps=1, total_epochs=9)
    naive = make_schedule("naive", steps=1, total_epochs=9)
    for e in range(9):
        assert step.difficulty_at(e) == naive.difficulty_at(e) == 1.0


def test_schedule_monotone_and_ends_at_one():
    """Every valid schedule is non-decreasing and reaches difficulty 1.0."""
    for total in (1, 2, 3, 5, 8, 13, 40, 200):
        for steps in range(1, total + 1):
            sched = make_schedule("stepwise", steps=steps, total_epochs=total)
            values = [sched.difficulty_at(e) for e in range(total)]
            assert all(b >= a for a, b in zip(values, values[1:]))
            assert values[-1] == pytest.approx(1.0)
            assert values[0] > 0.0


def test_schedule_rows_and_csv(tmp_path):
    """rows() lists one (epoch, difficulty) pair per epoch and to_csv round-trips."""
    sched = make_schedule("stepwise", steps=2, total_epochs=4)
    rows = sched.rows()
    assert [r[0] for r in rows] == [0, 1, 2, 3]
    assert [r[1] for r in rows] == pytest.approx([0.5, 0.5, 1.0, 1.0])

    path = tmp_path / "schedule.csv"
    sched.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "epoch,difficulty"
    parsed = [line.split(",") for line in lines[1:]]
    assert [int(e) for e, _ in parsed] == [0, 1, 2, 3]
    assert [float(d) for _, d in parsed] == pytest.approx([0.5, 0.5, 1.0, 1.0])


def test_schedule_validation_errors():
    """Bad kinds, step counts, and epoch ranges are rejected."""
    with pytest.raises(ValueError):
        make_schedule("linear", steps=2, total_epochs=10)
    with pytest.raises(ValueError):
        make_schedule("stepwise", steps=0, total_epochs=10)
    with pytest.raises(ValueError):
        make_schedule("stepwise", steps=11, total_epochs=10)
    with pytest.raises(ValueError):
        make_schedule("stepwise", steps=1, total_epochs=0)

    sched = make_schedule("stepwise", steps=2, total_epochs=10)
    with pytest.raises(ValueError):
        sched.difficulty_at(-1)
    with pytest.raises(ValueError):
        sched.difficulty_at(10)


def test_schedule_is_frozen():
    """Schedules are immutable value objects."""
    sched = DifficultySchedule(kind="naive", steps=1, total_epochs=3)
    with pytest.raises(AttributeError):
        sched.steps = 2  # type: ignore[misc]
