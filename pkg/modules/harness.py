"""
Harness Module
Paired recovery trials across resample criteria and the summary metrics:
threshold fractions, wins, significant wins and average error.
"""
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from criteria.base import ResampleCriterion, format_param
from criteria.resample import Disabled, HardCutoff, Logistic, TruncatedNormal, parse_criterion
from errors import ConfigError, FormatError, TrialSetError
from modules.diffcore import net_forward
from modules.gantrain import sample_prior
from modules.nets import Network, load_checkpoint
from modules.recovery import RecoveryConfig, reconstruction_error, recover
from modules.scheduler import TrialScheduler
from rng import Xoshiro256pp, derive_seed
import storage

logger = logging.getLogger(__name__)

THRESHOLDS = (1e-4, 1e-3, 1e-2, 1e-1, 1e0)
THRESHOLD_LABELS = ("1e-4", "1e-3", "1e-2", "1e-1", "1e0")
SIGNIFICANT_FACTOR = 2.0

RECORD_COLUMNS = ["trial", "criterion", "params", "seed", "error", "final_loss", "resamples", "wall_ms"]
TABLE_COLUMNS = ["criterion", *THRESHOLD_LABELS, "wins", "sig wins", "avg err"]
MARKDOWN = "markdown"
CSV = "csv"


@dataclass(frozen=True)
class TrialRecord:
    """One recovery run: trial index k, criterion in CLI syntax, trial seed s_k."""
    trial: int
    criterion: str
    params: str
    seed: int
    error: float
    final_loss: float
    resamples: int
    wall_ms: float = 0.0

    def row(self) -> List[Any]:
        return [self.trial, self.criterion, self.params, self.seed, repr(self.error),
                repr(self.final_loss), self.resamples, f"{self.wall_ms:.3f}"]

    @classmethod
    def from_row(cls, row: Sequence[str]) -> "TrialRecord":
        trial, criterion, params, seed, error, final_loss, resamples, wall_ms = row
        return cls(int(trial), criterion, params, int(seed), float(error), float(final_loss),
                   int(resamples), float(wall_ms))


@dataclass
class TrialCell:
    """Everything one (trial, criterion) recovery needs, picklable for worker processes."""
    trial: int
    seed: int
    criterion: ResampleCriterion
    generator: Network
    z_true: np.ndarray
    x: np.ndarray
    recovery: RecoveryConfig


def run_cell(cell: TrialCell) -> TrialRecord:
    """
    Recover one trial under one criterion.

    The recovery stream is Xoshiro256pp(s_k) jumped ahead, so every criterion
    starts from the same z(0) and draws from a stream disjoint from z_true's.
    """
    rng = Xoshiro256pp(cell.seed).jumped()
    started = time.perf_counter()
    result = recover(cell.x, cell.generator, cell.criterion, cell.recovery, rng=rng)
    wall_ms = (time.perf_counter() - started) * 1000.0
    error = reconstruction_error(cell.z_true, result.z_approx)
    logger.debug(f"trial {cell.trial} {cell.criterion.spec()}: error={error:.6g}")
    return TrialRecord(cell.trial, cell.criterion.spec(),
                       " ".join(format_param(p) for p in cell.criterion.params()),
                       cell.seed, error, result.final_loss, result.total_resamples, wall_ms)


def _check_criteria(criteria: Sequence[ResampleCriterion]):
    if not any(c.is_disabled for c in criteria):
        raise ConfigError("must include the disabled baseline", key="criteria", module="harness")
    specs = [c.spec() for c in criteria]
    duplicates = sorted({s for s in specs if specs.count(s) > 1})
    if duplicates:
        raise ConfigError(f"duplicate criteria {duplicates}", key="criteria", module="harness")


def build_cells(G: Network, criteria: Sequence[ResampleCriterion], n_trials: int,
                master_seed: int, cfg: RecoveryConfig) -> List[TrialCell]:
    """Trial k draws z_true from Xoshiro256pp(SplitMix64(master_seed XOR k)); x = G(z_true)."""
    if n_trials < 1:
        raise ConfigError(f"must be >= 1, got {n_trials}", key="trials", module="harness")
    _check_criteria(criteria)
    cells = []
    for k in range(n_trials):
        seed = derive_seed(master_seed, k)
        z_true = sample_prior(Xoshiro256pp(seed), G.input_dim)
        x = net_forward(G, z_true)
        cells.extend(TrialCell(k, seed, c, G, z_true, x, cfg) for c in criteria)
    return cells


def run_paired_trials(G: Network, criteria: Sequence[ResampleCriterion], n_trials: int,
                      master_seed: int, cfg: RecoveryConfig, jobs: Optional[int] = None,
                      progress_every: int = 0) -> List[TrialRecord]:
    """
    Run every criterion on the same n_trials latents.

    Args:
        G: Generator network
        criteria: Criteria to compare; must contain Disabled
        n_trials: Number of paired trials
        master_seed: Seed all trial seeds derive from
        cfg: Recovery configuration shared by every cell
        jobs: Worker processes (defaults to GLVR_JOBS)
        progress_every: Log every n finished cells

    Returns:
        Records sorted by (trial, position of the criterion in `criteria`)
    """
    cells = build_cells(G, criteria, n_trials, master_seed, cfg)
    logger.info(f"Running {n_trials} paired trials x {len(criteria)} criteria")
    records = TrialScheduler(jobs, progress_every).run(run_cell, cells)
    order = {c.spec(): i for i, c in enumerate(criteria)}
    return sorted(records, key=lambda r: (r.trial, order[r.criterion]))


# Summary metrics

@dataclass
class EvalRow:
    criterion: str
    spec: str
    fractions: Tuple[float, ...]
    wins: float
    sig_wins: Optional[float]
    avg_err: float
    trials: int
    baseline: bool = False


@dataclass
class EvalTable:
    rows: List[EvalRow] = field(default_factory=list)
    thresholds: Tuple[float, ...] = THRESHOLDS

    def row(self, spec: str) -> EvalRow:
        for row in self.rows:
            if row.spec == spec:
                return row
        raise KeyError(spec)


def _criterion_sort_key(criterion: ResampleCriterion):
    return (not criterion.is_disabled, criterion.keyword, criterion.params())


def _errors_by_criterion(records: Sequence[TrialRecord]) -> Dict[str, Dict[int, float]]:
    grouped: Dict[str, Dict[int, float]] = {}
    for record in records:
        trials = grouped.setdefault(record.criterion, {})
        if record.trial in trials:
            raise TrialSetError(f"duplicate record for trial {record.trial} under {record.criterion}")
        if not record.error >= 0.0:
            raise TrialSetError(f"invalid error {record.error} for trial {record.trial}")
        trials[record.trial] = record.error
    return grouped


def summarize(records: Sequence[TrialRecord]) -> EvalTable:
    """
    Percent of trials under each threshold, wins and significant wins against
    the disabled baseline, and average error per criterion.

    A win is a strictly smaller error than the baseline on the same trial.
    Significant wins are the trials where the baseline error is at least twice
    the criterion's, as a percentage of the trials where the two differ by a
    factor of at least two; None when no trial differs that much.
    """
    grouped = _errors_by_criterion(records)
    if not grouped:
        return EvalTable()
    baseline_spec = Disabled().spec()
    if baseline_spec not in grouped:
        raise TrialSetError("records contain no disabled baseline")
    trials = sorted(grouped[baseline_spec])
    baseline = np.array([grouped[baseline_spec][k] for k in trials])
    criteria = sorted((parse_criterion(spec) for spec in grouped), key=_criterion_sort_key)

    rows = []
    for criterion in criteria:
        spec = criterion.spec()
        if sorted(grouped[spec]) != trials:
            raise TrialSetError(f"{spec} covers different trials than the baseline")
        errors = np.array([grouped[spec][k] for k in trials])
        fractions = tuple(100.0 * float(np.mean(errors < eps)) for eps in THRESHOLDS)
        avg_err = float(np.mean(errors))
        if criterion.is_disabled:
            rows.append(EvalRow(criterion.label, spec, fractions, 0.0, None, avg_err,
                                len(trials), baseline=True))
            continue
        wins = 100.0 * float(np.mean(errors < baseline))
        with np.errstate(all="ignore"):
            improvement = baseline / errors
            regression = errors / baseline
        significant = improvement >= SIGNIFICANT_FACTOR
        differs = significant | (regression >= SIGNIFICANT_FACTOR)
        sig_wins = 100.0 * significant.sum() / differs.sum() if differs.any() else None
        rows.append(EvalRow(criterion.label, spec, fractions, wins,
                            None if sig_wins is None else float(sig_wins), avg_err, len(trials)))
    return EvalTable(rows)


def _percent(value: Optional[float]) -> str:
    if value is None:
        return "-"
    text = f"{value:.2f}".rstrip("0").rstrip(".")
    return text or "0"


def table_cells(row: EvalRow) -> List[str]:
    wins = "-" if row.baseline else _percent(row.wins)
    sig_wins = "-" if row.baseline else _percent(row.sig_wins)
    return [row.criterion, *(_percent(f) for f in row.fractions), wins, sig_wins, f"{row.avg_err:.3f}"]


def render_table(table: EvalTable, fmt: str = MARKDOWN) -> str:
    """Render the table as a markdown pipe table or CSV, columns in TABLE_COLUMNS order."""
    rows = [table_cells(row) for row in table.rows]
    if fmt == CSV:
        return storage.encode_csv(TABLE_COLUMNS, rows)
    if fmt != MARKDOWN:
        raise ValueError(f"unknown table format {fmt!r}")
    lines = ["| " + " | ".join(TABLE_COLUMNS) + " |",
             "|" + "|".join(["---"] + ["---:"] * (len(TABLE_COLUMNS) - 1)) + "|"]
    lines.extend("| " + " | ".join(cells) + " |" for cells in rows)
    return "\n".join(lines) + "\n"


class Ranking(NamedTuple):
    lowest_avg_err: Optional[str]
    most_wins: Optional[str]
    most_sig_wins: Optional[str]
    most_reliable: Optional[str]


def rank_criteria(table: EvalTable) -> Ranking:
    """
    Best criterion under four views. Reliability is the largest fraction under
    the widest threshold, ties broken by successively narrower thresholds.
    Ties within a view go to the earlier row.
    """
    if not table.rows:
        return Ranking(None, None, None, None)
    challengers = [r for r in table.rows if not r.baseline]

    def best(rows, key):
        best_row = None
        for row in rows:
            if best_row is None or key(row) > key(best_row):
                best_row = row
        return best_row.criterion if best_row else None

    return Ranking(
        lowest_avg_err=best(table.rows, lambda r: -r.avg_err),
        most_wins=best(challengers, lambda r: r.wins),
        most_sig_wins=best([r for r in challengers if r.sig_wins is not None], lambda r: r.sig_wins),
        most_reliable=best(table.rows, lambda r: tuple(reversed(r.fractions))),
    )


def render_ranking(ranking: Ranking) -> str:
    names = {
        "lowest_avg_err": "lowest average error",
        "most_wins": "most wins",
        "most_sig_wins": "most significant wins",
        "most_reliable": "most reliable",
    }
    lines = [f"- {names[key]}: {value or '-'}" for key, value in ranking._asdict().items()]
    return "\n".join(lines) + "\n"


def full_grid() -> List[ResampleCriterion]:
    """The full comparison grid, with truncated normal a = 3.75 alongside 3.5."""
    grid: List[ResampleCriterion] = [Disabled()]
    grid += [HardCutoff(c) for c in (2.5, 3.0, 3.5)]
    grid += [Logistic(a, b) for a in (2.0, 3.0, 4.0) for b in (2.0, 2.5, 3.0)]
    grid += [TruncatedNormal(a) for a in (2.5, 2.75, 3.0, 3.25, 3.5, 3.75)]
    return grid


# Records and experiment files

def write_records(path, records: Sequence[TrialRecord]):
    storage.write_csv(path, RECORD_COLUMNS, (r.row() for r in records))


def read_records(path) -> List[TrialRecord]:
    header, rows = storage.read_csv(path)
    if header != RECORD_COLUMNS:
        raise FormatError(f"unexpected records header {header}", path)
    try:
        return [TrialRecord.from_row(row) for row in rows]
    except ValueError as e:
        raise FormatError(f"malformed record: {e}", path)


@dataclass
class ExperimentConfig:
    model: str
    criteria: List[str] = field(default_factory=lambda: ["disabled"])
    trials: int = 100
    master_seed: Optional[int] = None
    recovery: RecoveryConfig = field(default_factory=RecoveryConfig)
    jobs: Optional[int] = None
    out: str = "results"

    def __post_init__(self):
        if not self.model:
            raise ConfigError("is required", key="model", module="harness")
        if self.trials < 1:
            raise ConfigError(f"must be >= 1, got {self.trials}", key="trials", module="harness")
        if self.jobs is not None and self.jobs < 1:
            raise ConfigError(f"must be >= 1, got {self.jobs}", key="jobs", module="harness")
        _check_criteria(self.criterion_objects())

    def criterion_objects(self) -> List[ResampleCriterion]:
        if self.criteria == ["full_grid"]:
            return full_grid()
        return [parse_criterion(text) for text in self.criteria]

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("experiment config must be a JSON object", module="harness")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", key="experiment", module="harness")
        data = dict(data)
        if "criteria" in data and not isinstance(data["criteria"], list):
            raise ConfigError("must be a list of criterion strings", key="criteria", module="harness")
        try:
            if "recovery" in data:
                data["recovery"] = RecoveryConfig.from_dict(data["recovery"] or {})
            return cls(**data)
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e), key="experiment", module="harness")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(storage.read_json(path))

    def to_dict(self) -> Dict[str, Any]:
        return {"model": self.model, "criteria": list(self.criteria), "trials": self.trials,
                "master_seed": self.master_seed, "recovery": self.recovery.to_dict(),
                "jobs": self.jobs, "out": self.out}


def run_experiment(cfg: ExperimentConfig, progress_every: int = 0) -> Tuple[List[TrialRecord], EvalTable]:
    """Load the model, run the paired trials and write records and summaries under cfg.out."""
    G = load_checkpoint(cfg.model)
    master_seed = cfg.master_seed if cfg.master_seed is not None else 0
    records = run_paired_trials(G, cfg.criterion_objects(), cfg.trials, master_seed,
                                cfg.recovery, cfg.jobs, progress_every)
    table = summarize(records)
    write_results(cfg.out, records, table, cfg)
    return records, table


def write_results(out_dir, records: Sequence[TrialRecord], table: EvalTable,
                  cfg: Optional[ExperimentConfig] = None):
    os.makedirs(out_dir, exist_ok=True)
    write_records(os.path.join(out_dir, "records.csv"), records)
    storage.write_text(os.path.join(out_dir, "summary.csv"), render_table(table, CSV))
    markdown = render_table(table, MARKDOWN) + "\n" + render_ranking(rank_criteria(table))
    storage.write_text(os.path.join(out_dir, "summary.md"), markdown)
    if cfg is not None:
        storage.write_json(os.path.join(out_dir, "experiment.json"), cfg.to_dict())
    logger.info(f"Wrote {len(records)} records and summary to {out_dir}")
