"""Experiment orchestration: splits, the cost-parameter grid, repetitions, reports.

A grid run crosses the lambda/kappa/alpha_min value lists into cost cells and
executes every requested policy in each cell: the deterministic policies
once, the stochastic ones (threshold fitting under an uncertainty envelope,
online RL) `repetitions` times with per-run seeds derived from
(master_seed, cell, policy, xi, repetition). Runs are independent, so they
can execute on a worker pool; the results CSV is canonically ordered and
byte-identical regardless of worker count.
"""

from __future__ import annotations

import csv
import itertools
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Optional

import numpy as np

from .costmodel import CostParameters, EnvelopeSpec, sample_envelope
from .metrics import cost_savings, earliness
from .policies import (
    AlarmDecision,
    CaseEvaluation,
    FittingError,
    StaticPointConfig,
    evaluate_policy,
    first_positive_decide,
    fit_static_point,
    fit_threshold,
    static_decide,
    threshold_decide,
)
from .rl import CuriosityTracker, HyperParameters, RlAgent, RollingMetrics
from .rl.runner import run_stream, write_learning_curve
from .stream import PredictionStream

POLICY_ORDER = ("never", "first_positive", "static", "threshold", "online_rl")
DETERMINISTIC_POLICIES = frozenset({"never", "first_positive", "static"})

COST_VALUE_GRID = (0.0, 0.25, 0.75, 1.0)
XI_SWEEP = (0.025, 0.1, 0.175, 0.25)
DEFAULT_XI = 0.1

RESULT_COLUMNS = ["policy", "lambda", "kappa", "alpha_min", "xi", "repetition",
                  "mean_cost", "alarm_rate", "accurate_alarm_rate",
                  "mean_earliness", "cost_savings"]


class ConfigError(ValueError):
    """The experiment configuration or its inputs are unusable."""


@dataclass(frozen=True, slots=True)
class ExperimentConfig:
    master_seed: int
    lambda_values: tuple[float, ...] = COST_VALUE_GRID
    kappa_values: tuple[float, ...] = COST_VALUE_GRID
    alpha_min_values: tuple[float, ...] = COST_VALUE_GRID
    xi_values: tuple[float, ...] = (DEFAULT_XI,)
    repetitions: int = 10
    fit_fraction: float = 0.33
    policies: tuple[str, ...] = POLICY_ORDER
    penalty: float = 100.0
    static_theta: float = 0.9
    rl_hyper: HyperParameters = field(default_factory=HyperParameters)
    workers: int = 1

    def __post_init__(self):
        for name in ("lambda_values", "kappa_values", "alpha_min_values"):
            values = getattr(self, name)
            if not values:
                raise ConfigError(f"{name} must be non-empty")
            if any(not 0.0 <= v <= 1.0 for v in values):
                raise ConfigError(f"{name} must lie in [0, 1], got {values}")
        if not self.xi_values or any(x < 0 for x in self.xi_values):
            raise ConfigError(f"xi_values must be non-negative, got {self.xi_values}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if not 0.0 < self.fit_fraction < 1.0:
            raise ConfigError(f"fit_fraction must be in (0, 1), got {self.fit_fraction}")
        unknown = [p for p in self.policies if p not in POLICY_ORDER]
        if unknown or not self.policies:
            raise ConfigError(f"unknown policies {unknown}; choose from {POLICY_ORDER}")
        if self.penalty <= 0:
            raise ConfigError("penalty must be positive")
        if not 0.0 < self.static_theta <= 1.0:
            raise ConfigError("static_theta must be in (0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def cells(self) -> list[CostParameters]:
        return [CostParameters(penalty=self.penalty, lam=lam, kappa=kappa,
                               alpha_min=alpha_min)
                for lam, kappa, alpha_min in itertools.product(
                    self.lambda_values, self.kappa_values, self.alpha_min_values)]


@dataclass(frozen=True, slots=True)
class RunResult:
    """One row of the results CSV: a (policy, cell, xi, repetition) run."""

    policy: str
    lam: float
    kappa: float
    alpha_min: float
    xi: Optional[float]
    repetition: int
    mean_cost: float
    alarm_rate: float
    accurate_alarm_rate: float
    mean_earliness: float
    cost_savings: float

    @property
    def failed(self) -> bool:
        return math.isnan(self.mean_cost)


def split_stream(stream: PredictionStream, fit_fraction: float):
    """Contiguous arrival-order split into (fit slice, measure slice); no shuffling."""
    if not 0.0 < fit_fraction < 1.0:
        raise ConfigError(f"fit_fraction must be in (0, 1), got {fit_fraction}")
    n = len(stream.cases)
    cut = round(fit_fraction * n)
    if cut < 1 or cut >= n:
        raise ConfigError(
            f"fit fraction {fit_fraction} leaves an empty slice for {n} cases")
    return (PredictionStream(stream.cases[:cut], stream.expected_outcome),
            PredictionStream(stream.cases[cut:], stream.expected_outcome))


def summarize_evaluations(evaluations: list[CaseEvaluation]):
    """(mean cost, alarm rate, accurate-alarm rate, mean earliness over alarms)."""
    n = len(evaluations)
    alarmed = [e for e in evaluations if e.alarm_prefix is not None]
    mean_cost = sum(e.cost for e in evaluations) / n
    alarm_rate = len(alarmed) / n
    accurate_rate = sum(1 for e in alarmed if e.correct) / n
    if alarmed:
        mean_earl = sum(earliness(e.alarm_prefix, e.length) for e in alarmed) / len(alarmed)
    else:
        mean_earl = 0.0
    return mean_cost, alarm_rate, accurate_rate, mean_earl


def _never_decide(_point):
    return AlarmDecision.CONTINUE


def _savings(c_never: float, c_x: float) -> float:
    return cost_savings(c_never, c_x) if c_never > 0 else 0.0


@dataclass(frozen=True, slots=True)
class _Task:
    index: int
    cell_index: int
    policy: str
    xi: Optional[float]
    repetition: int
    params: CostParameters


# per-process state for pool workers, set once by the initializer
_WORKER_STATE: dict = {}


def _init_worker(fit, measure, config, static_config, curves_dir):
    _WORKER_STATE["fit"] = fit
    _WORKER_STATE["measure"] = measure
    _WORKER_STATE["config"] = config
    _WORKER_STATE["static_config"] = static_config
    _WORKER_STATE["curves_dir"] = curves_dir


def _run_seed(config: ExperimentConfig, task: _Task):
    policy_index = POLICY_ORDER.index(task.policy)
    xi_index = config.xi_values.index(task.xi) if task.xi is not None else 0
    seq = np.random.SeedSequence(
        config.master_seed,
        spawn_key=(task.cell_index, policy_index, xi_index, task.repetition))
    return np.random.default_rng(seq)


def _execute_task(task: _Task) -> tuple[int, RunResult]:
    fit = _WORKER_STATE["fit"]
    measure = _WORKER_STATE["measure"]
    config = _WORKER_STATE["config"]
    static_config = _WORKER_STATE["static_config"]
    curves_dir = _WORKER_STATE["curves_dir"]
    c_never = measure.deviation_rate * config.penalty
    try:
        if task.policy == "never":
            evaluations = evaluate_policy(measure, task.params, _never_decide)
        elif task.policy == "first_positive":
            evaluations = evaluate_policy(measure, task.params, first_positive_decide)
        elif task.policy == "static":
            if isinstance(static_config, str):
                raise FittingError(static_config)
            evaluations = evaluate_policy(
                measure, task.params, partial(static_decide, config=static_config))
        elif task.policy == "threshold":
            rng = _run_seed(config, task)
            perturbed = sample_envelope(task.params, EnvelopeSpec(task.xi), rng)
            fitted = fit_threshold(fit, perturbed)
            evaluations = evaluate_policy(
                measure, task.params,
                partial(threshold_decide, threshold=fitted.threshold))
        elif task.policy == "online_rl":
            rng = _run_seed(config, task)
            agent = RlAgent.initialize(config.rl_hyper, rng)
            tracker = CuriosityTracker()
            rolling = RollingMetrics()
            _, warm_rows = run_stream(fit, agent, tracker, rng, task.params,
                                      metrics=rolling, first_case_index=1)
            evaluations, measure_rows = run_stream(
                measure, agent, tracker, rng, task.params, metrics=rolling,
                first_case_index=len(fit.cases) + 1)
            if curves_dir is not None:
                name = (f"online_rl_l{task.params.lam}_k{task.params.kappa}"
                        f"_a{task.params.alpha_min}_r{task.repetition}.csv")
                write_learning_curve(warm_rows + measure_rows,
                                     os.path.join(curves_dir, name))
        else:  # pragma: no cover - guarded by config validation
            raise ConfigError(f"unknown policy {task.policy}")
        mean_cost, alarm_rate, accurate_rate, mean_earl = summarize_evaluations(evaluations)
        result = RunResult(task.policy, task.params.lam, task.params.kappa,
                           task.params.alpha_min, task.xi, task.repetition,
                           mean_cost, alarm_rate, accurate_rate, mean_earl,
                           _savings(c_never, mean_cost))
    except Exception as exc:  # a failed repetition is recorded, not dropped
        print(f"warning: {task.policy} run failed in cell "
              f"(lambda={task.params.lam}, kappa={task.params.kappa}, "
              f"alpha_min={task.params.alpha_min}), repetition {task.repetition}: {exc}",
              file=sys.stderr)
        nan = float("nan")
        result = RunResult(task.policy, task.params.lam, task.params.kappa,
                           task.params.alpha_min, task.xi, task.repetition,
                           nan, nan, nan, nan, nan)
    return task.index, result


def _build_tasks(config: ExperimentConfig) -> list[_Task]:
    tasks = []
    for cell_index, params in enumerate(config.cells()):
        for policy in POLICY_ORDER:
            if policy not in config.policies:
                continue
            if policy in DETERMINISTIC_POLICIES:
                tasks.append(_Task(len(tasks), cell_index, policy, None, 0, params))
            elif policy == "threshold":
                for xi in config.xi_values:
                    for rep in range(config.repetitions):
                        tasks.append(_Task(len(tasks), cell_index, policy, xi, rep, params))
            else:  # online_rl
                for rep in range(config.repetitions):
                    tasks.append(_Task(len(tasks), cell_index, policy, None, rep, params))
    return tasks


def run_grid(stream: PredictionStream, config: ExperimentConfig,
             curves_dir=None) -> list[RunResult]:
    """Execute the full grid; results come back in canonical (cell, policy, xi, rep) order."""
    fit, measure = split_stream(stream, config.fit_fraction)
    # fitted once for the whole grid; a fitting failure is carried as a message
    # so every static row records the failure instead of aborting the grid
    static_config: StaticPointConfig | str | None = None
    if "static" in config.policies:
        try:
            static_config = fit_static_point(fit, config.static_theta)
        except FittingError as exc:
            static_config = str(exc)
    if curves_dir is not None:
        os.makedirs(curves_dir, exist_ok=True)
    tasks = _build_tasks(config)
    results: list[Optional[RunResult]] = [None] * len(tasks)
    if config.workers == 1:
        _init_worker(fit, measure, config, static_config, curves_dir)
        try:
            for task in tasks:
                index, result = _execute_task(task)
                results[index] = result
        finally:
            _WORKER_STATE.clear()
    else:
        with ProcessPoolExecutor(
                max_workers=config.workers, initializer=_init_worker,
                initargs=(fit, measure, config, static_config, curves_dir)) as pool:
            for index, result in pool.map(_execute_task, tasks, chunksize=4):
                results[index] = result
    return [r for r in results if r is not None]


@dataclass(frozen=True, slots=True)
class CellSummary:
    lam: float
    kappa: float
    alpha_min: float
    policy: str
    runs: int
    failed: int
    mean_cost: float
    std_cost: float
    alarm_rate: float
    accurate_alarm_rate: float
    mean_earliness: float
    cost_savings: float
    winner: bool


@dataclass(frozen=True, slots=True)
class PolicyOverview:
    policy: str
    cells_won: int
    cells_considered: int
    win_fraction: float
    mean_savings: float


@dataclass(frozen=True, slots=True)
class Report:
    cell_summaries: list[CellSummary]
    policy_overview: list[PolicyOverview]


def summarize(results: list[RunResult]) -> Report:
    """Aggregate run rows into per-cell means and the winner overview.

    Per cell and policy, runs are averaged (threshold runs across all xi
    values together) with their population standard deviation. The cell winner
    is the policy with the lowest mean cost, ties broken toward higher mean
    earliness and then lexicographically by policy name. Cells where no policy
    undercuts the never-adapt baseline are excluded from the win-fraction
    denominator, and a policy's mean savings averages only cells where it
    beats that baseline.
    """
    if not results:
        raise ConfigError("no results to summarize")
    by_cell: dict[tuple, dict[str, list[RunResult]]] = {}
    for result in results:
        cell = (result.lam, result.kappa, result.alpha_min)
        by_cell.setdefault(cell, {}).setdefault(result.policy, []).append(result)

    summaries = []
    won: dict[str, int] = {}
    beats: dict[str, list[float]] = {}
    cells_considered = 0
    for cell in sorted(by_cell):
        groups = by_cell[cell]
        if "never" not in groups:
            raise ConfigError(
                f"cell {cell} lacks the never baseline; run with the never policy included")
        never_cost = _group_mean(groups["never"], "mean_cost")
        stats = {}
        for policy, runs in groups.items():
            ok = [r for r in runs if not r.failed]
            stats[policy] = {
                "runs": len(runs),
                "failed": len(runs) - len(ok),
                "mean_cost": _mean([r.mean_cost for r in ok]),
                "std_cost": _std([r.mean_cost for r in ok]),
                "alarm_rate": _mean([r.alarm_rate for r in ok]),
                "accurate_alarm_rate": _mean([r.accurate_alarm_rate for r in ok]),
                "mean_earliness": _mean([r.mean_earliness for r in ok]),
                "cost_savings": _mean([r.cost_savings for r in ok]),
            }
        candidates = [p for p, s in stats.items() if not math.isnan(s["mean_cost"])]
        winner = min(candidates, key=lambda p: (
            stats[p]["mean_cost"], -stats[p]["mean_earliness"], p))
        anyone_beats_never = any(
            stats[p]["mean_cost"] < never_cost for p in candidates if p != "never")
        if anyone_beats_never:
            cells_considered += 1
            won[winner] = won.get(winner, 0) + 1
        for policy in candidates:
            if policy != "never" and stats[policy]["mean_cost"] < never_cost:
                beats.setdefault(policy, []).append(stats[policy]["cost_savings"])
        for policy in sorted(groups, key=POLICY_ORDER.index):
            s = stats[policy]
            summaries.append(CellSummary(
                cell[0], cell[1], cell[2], policy, s["runs"], s["failed"],
                s["mean_cost"], s["std_cost"], s["alarm_rate"],
                s["accurate_alarm_rate"], s["mean_earliness"], s["cost_savings"],
                winner=(policy == winner and anyone_beats_never)))

    overview = []
    policies = sorted({r.policy for r in results}, key=POLICY_ORDER.index)
    for policy in policies:
        cells_won = won.get(policy, 0)
        fraction = cells_won / cells_considered if cells_considered else 0.0
        savings = _mean(beats.get(policy, []))
        overview.append(PolicyOverview(policy, cells_won, cells_considered,
                                       fraction, savings))
    return Report(summaries, overview)


def _mean(values):
    finite = [v for v in values if not math.isnan(v)]
    return sum(finite) / len(finite) if finite else float("nan")


def _std(values):
    finite = [v for v in values if not math.isnan(v)]
    if not finite:
        return float("nan")
    mu = sum(finite) / len(finite)
    return math.sqrt(sum((v - mu) ** 2 for v in finite) / len(finite))


def _group_mean(runs, attr):
    return _mean([getattr(r, attr) for r in runs if not r.failed])


def write_results(results: list[RunResult], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for r in results:
            writer.writerow([
                r.policy, repr(r.lam), repr(r.kappa), repr(r.alpha_min),
                "" if r.xi is None else repr(r.xi), r.repetition,
                repr(r.mean_cost), repr(r.alarm_rate), repr(r.accurate_alarm_rate),
                repr(r.mean_earliness), repr(r.cost_savings)])


def load_results(path) -> list[RunResult]:
    results = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RESULT_COLUMNS:
            raise ConfigError(f"{path}: expected header {RESULT_COLUMNS}, got {header}")
        for row in reader:
            if not row:
                continue
            results.append(RunResult(
                row[0], float(row[1]), float(row[2]), float(row[3]),
                None if row[4] == "" else float(row[4]), int(row[5]),
                float(row[6]), float(row[7]), float(row[8]), float(row[9]),
                float(row[10])))
    if not results:
        raise ConfigError(f"{path}: no result rows")
    return results


SUMMARY_COLUMNS = ["lambda", "kappa", "alpha_min", "policy", "runs", "failed",
                   "mean_cost", "std_cost", "alarm_rate", "accurate_alarm_rate",
                   "mean_earliness", "cost_savings", "winner"]
OVERVIEW_COLUMNS = ["policy", "cells_won", "cells_considered", "win_fraction",
                    "mean_savings"]


def write_report(report: Report, summary_path, overview_path) -> None:
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for s in report.cell_summaries:
            writer.writerow([
                repr(s.lam), repr(s.kappa), repr(s.alpha_min), s.policy, s.runs,
                s.failed, repr(s.mean_cost), repr(s.std_cost), repr(s.alarm_rate),
                repr(s.accurate_alarm_rate), repr(s.mean_earliness),
                repr(s.cost_savings), int(s.winner)])
    with open(overview_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(OVERVIEW_COLUMNS)
        for o in report.policy_overview:
            writer.writerow([o.policy, o.cells_won, o.cells_considered,
                             repr(o.win_fraction), repr(o.mean_savings)])
