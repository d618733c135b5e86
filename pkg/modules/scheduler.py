"""
Scheduler Module
Runs independent trial cells, sequentially or on a process pool, and
returns their results in submission order.
"""
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import Any, Callable, List, Optional, Sequence, TypeVar

from config import DEFAULT_JOBS

logger = logging.getLogger(__name__)

Cell = TypeVar("Cell")


def describe_cell(cell, index: int) -> str:
    """Short log label: trial and criterion for recovery cells, else the position."""
    trial = getattr(cell, "trial", None)
    criterion = getattr(cell, "criterion", None)
    if trial is None or criterion is None:
        return f"#{index}"
    spec = criterion.spec() if hasattr(criterion, "spec") else criterion
    return f"trial={trial} criterion={spec}"


class TrialScheduler:
    """
    Executes a function over a list of cells.

    Each cell must carry everything its job needs (its own RNG seed included),
    so results do not depend on execution order or worker count.
    """
    def __init__(self, jobs: Optional[int] = None, progress_every: int = 0):
        """
        Initialize the scheduler.

        Args:
            jobs: Number of worker processes; 1 runs in-process
            progress_every: Log progress every n finished cells (0 disables)
        """
        self.jobs = jobs if jobs is not None else DEFAULT_JOBS
        if self.jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {self.jobs}")
        self.progress_every = progress_every
        self.completed = 0

    def run(self, fn: Callable[[Cell], Any], cells: Sequence[Cell]) -> List[Any]:
        """Run fn on every cell; the i-th result belongs to the i-th cell."""
        self.completed = 0
        total = len(cells)
        logger.info(f"Scheduling {total} cells on {self.jobs} worker(s)")
        if self.jobs == 1 or total <= 1:
            results = []
            for index, cell in enumerate(cells):
                results.append(self._call(fn, cell, index))
                self._tick(total)
            return results
        return self._run_pool(fn, cells)

    def _run_pool(self, fn, cells) -> List[Any]:
        results: List[Any] = [None] * len(cells)
        with ProcessPoolExecutor(max_workers=self.jobs) as pool:
            futures = {pool.submit(fn, cell): index for index, cell in enumerate(cells)}
            for future in as_completed(futures):
                index = futures[future]
                try:
                    results[index] = future.result()
                except Exception as e:
                    logger.exception(f"Cell {describe_cell(cells[index], index)} failed: {e}")
                    for pending in futures:
                        pending.cancel()
                    raise
                self._tick(len(cells))
        return results

    def _call(self, fn, cell, index: int):
        try:
            return fn(cell)
        except Exception as e:
            logger.exception(f"Cell {describe_cell(cell, index)} failed: {e}")
            raise

    def _tick(self, total: int):
        self.completed += 1
        if self.progress_every and (self.completed % self.progress_every == 0 or self.completed == total):
            logger.info(f"{self.completed}/{total} cells done")
