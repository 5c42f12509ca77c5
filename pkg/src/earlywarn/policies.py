"""Alarm policies and the one-alarm-per-case evaluation loop.

All policies make a binary call per prediction point; the evaluation loop
commits to the first alarm and charges the case via the cost model. The
threshold policy is fitted by scanning every reliability value observed in
the fitting stream (plus a floor candidate and a never-alarm sentinel), which
is exhaustive: behavior can only change at observed reliabilities.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .costmodel import CostParameters, expected_cost
from .metrics import per_prefix_accuracy
from .stream import PredictionPoint, PredictionStream

# a threshold no reliability estimate can reach; fitting may select it when
# never alarming is the cheapest option
NEVER_ALARM_THRESHOLD = 1.000001

# prefixes reached by fewer cases than this are not static-point candidates
MIN_STATIC_SUPPORT = 30


class FittingError(RuntimeError):
    """A policy could not be fitted on the given stream."""


class AlarmDecision(enum.Enum):
    RAISE_ALARM = "raise_alarm"
    CONTINUE = "continue"


DecideFn = Callable[[PredictionPoint], AlarmDecision]


@dataclass(frozen=True, slots=True)
class FittedThreshold:
    """Reliability threshold picked on a fitting stream plus the cost it achieved there."""

    threshold: float
    training_cost: float

    def __post_init__(self):
        if not 0.5 <= self.threshold <= 1.0 and self.threshold != NEVER_ALARM_THRESHOLD:
            raise ValueError(f"threshold {self.threshold} outside [0.5, 1] and not the sentinel")


@dataclass(frozen=True, slots=True)
class StaticPointConfig:
    """Fixed alarm prefix plus the fraction-of-peak accuracy rule that chose it."""

    accuracy_fraction: float
    fixed_prefix: int

    def __post_init__(self):
        if not 0.0 < self.accuracy_fraction <= 1.0:
            raise ValueError(f"accuracy_fraction must be in (0, 1], got {self.accuracy_fraction}")
        if self.fixed_prefix < 1:
            raise ValueError(f"fixed_prefix must be >= 1, got {self.fixed_prefix}")


@dataclass(frozen=True, slots=True)
class CaseEvaluation:
    """Outcome of running a policy over one case."""

    case_id: str
    alarm_prefix: Optional[int]
    length: int
    cost: float
    correct: bool  # alarm on a deviating case, or silence on a clean one


def first_positive_decide(point: PredictionPoint) -> AlarmDecision:
    """Alarm on the first prediction that forecasts a deviation at all."""
    if point.delta > 0:
        return AlarmDecision.RAISE_ALARM
    return AlarmDecision.CONTINUE


def threshold_decide(point: PredictionPoint, threshold: float) -> AlarmDecision:
    """Alarm on the first deviation forecast whose reliability clears the threshold."""
    if point.delta > 0 and point.rho >= threshold:
        return AlarmDecision.RAISE_ALARM
    return AlarmDecision.CONTINUE


def static_decide(point: PredictionPoint, config: StaticPointConfig) -> AlarmDecision:
    """Alarm only at the fixed prefix, and only if the prediction there is positive.

    Cases shorter than the fixed prefix never reach it and thus never alarm.
    """
    if point.j == config.fixed_prefix and point.delta > 0:
        return AlarmDecision.RAISE_ALARM
    return AlarmDecision.CONTINUE


def select_static_point(curve: dict, accuracy_fraction: float) -> int:
    """Earliest prefix whose MCC reaches accuracy_fraction times the peak MCC.

    `curve` maps prefix -> (mcc, support); only prefixes with support >=
    MIN_STATIC_SUPPORT are candidates. If the peak is not positive the rule
    degenerates, so the earliest peak prefix is returned instead.
    """
    candidates = {j: acc.mcc for j, acc in curve.items() if acc.support >= MIN_STATIC_SUPPORT}
    if not candidates:
        raise FittingError(
            f"no prefix is reached by at least {MIN_STATIC_SUPPORT} cases")
    peak = max(candidates.values())
    if peak <= 0:
        return min(j for j, value in candidates.items() if value == peak)
    cutoff = accuracy_fraction * peak
    return min(j for j, value in candidates.items() if value >= cutoff)


def fit_static_point(fitting_stream: PredictionStream,
                     accuracy_fraction: float = 0.9) -> StaticPointConfig:
    """Fit the static prediction point from the fitting stream's per-prefix MCC curve."""
    if not 0.0 < accuracy_fraction <= 1.0:
        raise ValueError(f"accuracy_fraction must be in (0, 1], got {accuracy_fraction}")
    curve = per_prefix_accuracy(fitting_stream)
    fixed = select_static_point(curve, accuracy_fraction)
    return StaticPointConfig(accuracy_fraction=accuracy_fraction, fixed_prefix=fixed)


def threshold_candidates(stream: PredictionStream) -> list[float]:
    """Sorted candidate thresholds: observed reliabilities, the 0.5 floor, the sentinel."""
    values = {point.rho for case in stream.cases for point in case.points}
    values.add(0.5)
    values.add(NEVER_ALARM_THRESHOLD)
    return sorted(values)


def _alarm_prefix_table(stream: PredictionStream, candidates: np.ndarray) -> np.ndarray:
    """alarm prefix per (case, candidate threshold), 0 where no alarm fires.

    Exploits that raising the threshold only delays alarms: walking a case's
    points in order, each positive prediction fixes the alarm prefix for every
    still-unfixed candidate below its reliability, and the fixed set is always
    a prefix of the ascending candidate array.
    """
    table = np.zeros((len(stream.cases), len(candidates)), dtype=np.int64)
    for row, case in enumerate(stream.cases):
        fixed = 0
        for point in case.points:
            if point.delta <= 0:
                continue
            upto = int(np.searchsorted(candidates, point.rho, side="right"))
            if upto > fixed:
                table[row, fixed:upto] = point.j
                fixed = upto
            if fixed == len(candidates):
                break
    return table


def _mean_cost_per_candidate(stream: PredictionStream, table: np.ndarray,
                             params: CostParameters) -> np.ndarray:
    costs = np.zeros(table.shape[1])
    for row, case in enumerate(stream.cases):
        prefixes = table[row]
        alarmed = prefixes > 0
        case_costs = np.empty(table.shape[1])
        case_costs[~alarmed] = params.penalty if case.actual_deviation else 0.0
        if alarmed.any():
            if case.length == 1:
                alpha = np.full(int(alarmed.sum()), params.alpha_max)
            else:
                alpha = params.alpha_max - (params.alpha_max - params.alpha_min) * (
                    prefixes[alarmed] - 1) / (case.length - 1)
            if case.actual_deviation:
                case_costs[alarmed] = params.adaptation_cost + (1.0 - alpha) * params.penalty
            else:
                case_costs[alarmed] = params.adaptation_cost + alpha * params.compensation_cost
        costs += case_costs
    return costs / len(stream.cases)


def fit_threshold(fitting_stream: PredictionStream,
                  perturbed_params: CostParameters) -> FittedThreshold:
    """Pick the candidate threshold with the lowest mean expected cost on the stream.

    The caller is responsible for any envelope perturbation of the cost
    parameters; fitting itself is deterministic. Ties break toward the
    smallest threshold, favoring earlier alarms.
    """
    candidates = np.asarray(threshold_candidates(fitting_stream))
    table = _alarm_prefix_table(fitting_stream, candidates)
    costs = _mean_cost_per_candidate(fitting_stream, table, perturbed_params)
    best = int(np.argmin(costs))  # argmin returns the first minimum: smallest candidate
    return FittedThreshold(threshold=float(candidates[best]), training_cost=float(costs[best]))


def evaluate_policy(stream: PredictionStream, params: CostParameters,
                    decide: DecideFn) -> list[CaseEvaluation]:
    """Run a per-point decision function over a stream, one alarm per case at most."""
    evaluations = []
    for case in stream.cases:
        alarm_prefix = None
        for point in case.points:
            if decide(point) is AlarmDecision.RAISE_ALARM:
                alarm_prefix = point.j
                break
        cost = expected_cost(case.actual_deviation, alarm_prefix, case.length, params)
        correct = (alarm_prefix is not None) == case.actual_deviation
        evaluations.append(CaseEvaluation(case.case_id, alarm_prefix, case.length,
                                          cost, correct))
    return evaluations


def mean_cost(evaluations: list[CaseEvaluation]) -> float:
    if not evaluations:
        raise ValueError("no evaluations")
    return sum(e.cost for e in evaluations) / len(evaluations)
