"""Accuracy, drift, and outcome metrics for prediction streams and policy runs."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

from .stream import PredictionStream


@dataclass(slots=True)
class ContingencyCounts:
    """Binary-classification contingency table."""

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("contingency counts must be non-negative")

    def add(self, predicted_positive: bool, actual_positive: bool) -> None:
        if predicted_positive:
            if actual_positive:
                self.tp += 1
            else:
                self.fp += 1
        elif actual_positive:
            self.fn += 1
        else:
            self.tn += 1


class PrefixAccuracy(NamedTuple):
    mcc: float
    support: int


def mcc(counts: ContingencyCounts) -> float:
    """Matthews correlation coefficient; 0 when any marginal is empty."""
    tp, fp, tn, fn = counts.tp, counts.fp, counts.tn, counts.fn
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denom)


def mae(predictions, y: float) -> float:
    """Mean absolute error of a case's prefix-wise predictions against its outcome."""
    if len(predictions) == 0:
        raise ValueError("MAE undefined for an empty prediction list")
    return sum(abs(p - y) for p in predictions) / len(predictions)


def cost_savings(c_never: float, c_x: float) -> float:
    """Relative cost savings of a policy against never adapting."""
    if c_never <= 0:
        raise ValueError(f"savings undefined for never-adapt cost {c_never}")
    return (c_never - c_x) / c_never


def earliness(alarm_prefix: int, l: int) -> float:
    """Where in the case the alarm fell: 1 = first prediction point, 0 = last."""
    if not 1 <= alarm_prefix <= l:
        raise ValueError(f"alarm prefix {alarm_prefix} outside 1..{l}")
    if l == 1:
        return 1.0
    return 1.0 - (alarm_prefix - 1) / (l - 1)


def per_prefix_accuracy(stream: PredictionStream) -> dict[int, PrefixAccuracy]:
    """MCC and supporting-case count for each prefix length reached by any case.

    A case counts as predicted-deviation at prefix j when its delta there is
    positive; ground truth is the case's deviation flag.
    """
    tables: dict[int, ContingencyCounts] = {}
    for case in stream.cases:
        for point in case.points:
            table = tables.setdefault(point.j, ContingencyCounts())
            table.add(point.delta > 0, case.actual_deviation)
    return {
        j: PrefixAccuracy(mcc(table), table.tp + table.fp + table.tn + table.fn)
        for j, table in sorted(tables.items())
    }


def per_case_mae_series(stream: PredictionStream) -> list[tuple[int, float]]:
    """Per-case MAE in arrival order; sustained shifts in this series indicate drift.

    Predictions are recovered from stored deltas via y_hat = A * (1 + delta).
    """
    a = stream.expected_outcome
    return [
        (idx, mae([a * (1.0 + p.delta) for p in case.points], case.y))
        for idx, case in enumerate(stream.cases)
    ]


class RollingWindow:
    """Bounded queue of reals with a mean over whatever is currently held."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.values = deque(maxlen=capacity)

    def push(self, value: float) -> None:
        self.values.append(value)

    def __len__(self) -> int:
        return len(self.values)

    def mean(self) -> float:
        if not self.values:
            raise ValueError("mean undefined for an empty window")
        return sum(self.values) / len(self.values)
