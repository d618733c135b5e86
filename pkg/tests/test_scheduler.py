"""Test modules/scheduler.py"""
import logging
from typing import NamedTuple

import pytest

from criteria.resample import HardCutoff
from modules.scheduler import TrialScheduler, describe_cell


def square(x):
    return x * x


def fail_on_three(x):
    if x == 3:
        raise RuntimeError("cell three broke")
    return x


def test_sequential_results_keep_cell_order():
    assert TrialScheduler(jobs=1).run(square, [3, 1, 2]) == [9, 1, 4]


def test_pool_results_keep_cell_order():
    cells = list(range(12))
    assert TrialScheduler(jobs=2).run(square, cells) == TrialScheduler(jobs=1).run(square, cells)


def test_empty_and_single_cell():
    assert TrialScheduler(jobs=4).run(square, []) == []
    assert TrialScheduler(jobs=4).run(square, [5]) == [25]


@pytest.mark.parametrize("jobs", [1, 2])
def test_failures_are_logged_and_reraised(jobs, caplog):
    with caplog.at_level(logging.ERROR, logger="modules.scheduler"):
        with pytest.raises(RuntimeError, match="cell three broke"):
            TrialScheduler(jobs=jobs).run(fail_on_three, [1, 2, 3, 4])
    assert "failed" in caplog.text


def test_progress_is_logged(caplog):
    with caplog.at_level(logging.INFO, logger="modules.scheduler"):
        scheduler = TrialScheduler(jobs=1, progress_every=2)
        scheduler.run(square, [1, 2, 3])
    assert "2/3 cells done" in caplog.text
    assert "3/3 cells done" in caplog.text
    assert scheduler.completed == 3


def test_rejects_non_positive_jobs():
    with pytest.raises(ValueError):
        TrialScheduler(jobs=0)


class FakeCell(NamedTuple):
    trial: int
    criterion: HardCutoff
    payload: list


def fail_always(cell):
    raise RuntimeError("diverged")


def test_failure_log_names_trial_and_criterion_only(caplog):
    cell = FakeCell(3, HardCutoff(2.5), list(range(1000)))
    with caplog.at_level(logging.ERROR, logger="modules.scheduler"):
        with pytest.raises(RuntimeError):
            TrialScheduler(jobs=1).run(fail_always, [cell])
    assert "Cell trial=3 criterion=hard:2.5 failed: diverged" in caplog.text
    assert "999" not in caplog.text


def test_describe_cell_falls_back_to_position():
    assert describe_cell(7, 2) == "#2"
