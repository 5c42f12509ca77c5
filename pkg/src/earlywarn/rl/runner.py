"""Online execution: one episode per case, one policy update per episode.

The curiosity tracker's d and v are frozen for the duration of a case (the
tracker only observes completed cases), so a case's candidate states are
known upfront and evaluated in one batched forward pass; the random walk then
consumes one uniform draw per visited point until the first alarm.
"""

from __future__ import annotations

import csv
from collections import deque

import numpy as np

from ..costmodel import CostParameters, expected_cost
from ..metrics import RollingWindow, earliness
from ..policies import CaseEvaluation
from ..stream import CaseRecord, PredictionStream
from .agent import RlAgent, Trajectory
from .rewards import CuriosityTracker, curiosity_c, earliness_coef_b, terminal_reward

ROLLING_WINDOW = 100

CURVE_COLUMNS = ["case_index", "rolling_reward", "rolling_alarm_rate",
                 "rolling_accurate_alarm_rate", "rolling_earliness"]


def case_states(case: CaseRecord, d: float, v: float) -> np.ndarray:
    """The (l, 5) state matrix a case presents to the agent under tracker state (d, v)."""
    states = np.empty((case.length, 5), dtype=np.float64)
    for idx, point in enumerate(case.points):
        states[idx, 0] = point.delta
        states[idx, 1] = point.rho
        states[idx, 2] = point.tau
        states[idx, 3] = d
        states[idx, 4] = v
    return states


def run_case(case: CaseRecord, agent: RlAgent, tracker: CuriosityTracker, rng):
    """Play one episode; returns (alarm_prefix or None, Trajectory, tracker).

    The intrinsic alarm reward uses only (b, c, d); the case's ground truth is
    never consulted after an alarm. The tracker observes the case once, after
    the episode ends.
    """
    d = tracker.adaptation_rate()
    v = tracker.npv()
    states = case_states(case, d, v)
    probs, values = agent.probs_values(states)

    floor = agent.hyper.prob_floor
    alarm_prefix = None
    steps = case.length
    actions = np.zeros(case.length, dtype=np.int64)
    for idx in range(case.length):
        if rng.random() < probs[idx, 1]:
            actions[idx] = 1
            alarm_prefix = idx + 1
            steps = idx + 1
            break

    adapted = alarm_prefix is not None
    if adapted:
        b = earliness_coef_b(alarm_prefix, case.length)
        c = curiosity_c(v, d)
        reward = terminal_reward(True, case.actual_deviation, b, c, d)
    else:
        reward = terminal_reward(False, case.actual_deviation, 1.0, 0.0, d)

    taken = actions[:steps]
    log_probs = np.log(np.maximum(probs[np.arange(steps), taken], floor))
    rewards = np.zeros(steps)
    rewards[-1] = reward
    trajectory = Trajectory(states=states[:steps], actions=taken,
                            log_probs=log_probs, values=values[:steps].copy(),
                            rewards=rewards)
    tracker.observe(adapted, case.actual_deviation)
    return alarm_prefix, trajectory, tracker


class RollingMetrics:
    """Per-case rolling averages matching the learning-curve CSV columns.

    Earliness is averaged over the alarmed cases within the window (0.0 while
    none are present); the other three average over all windowed cases.
    """

    def __init__(self, window: int = ROLLING_WINDOW):
        self.reward = RollingWindow(window)
        self.alarm = RollingWindow(window)
        self.accurate = RollingWindow(window)
        self.earliness_values = deque(maxlen=window)

    def observe(self, reward: float, alarm_prefix, length: int,
                actual_deviation: bool) -> tuple[float, float, float, float]:
        self.reward.push(reward)
        alarmed = alarm_prefix is not None
        self.alarm.push(1.0 if alarmed else 0.0)
        self.accurate.push(1.0 if alarmed and actual_deviation else 0.0)
        self.earliness_values.append(earliness(alarm_prefix, length) if alarmed else None)
        observed = [e for e in self.earliness_values if e is not None]
        rolling_earliness = sum(observed) / len(observed) if observed else 0.0
        return (self.reward.mean(), self.alarm.mean(), self.accurate.mean(),
                rolling_earliness)


def run_stream(stream: PredictionStream, agent: RlAgent, tracker: CuriosityTracker,
               rng, cost_params: CostParameters, metrics: RollingMetrics | None = None,
               first_case_index: int = 1, reward_log: list | None = None):
    """Process a stream in arrival order, updating the policy after every case.

    Returns (evaluations, curve_rows); pass the same agent/tracker/metrics to
    successive calls to continue a run across stream slices. When `reward_log`
    is given, each case's raw terminal reward is appended to it.
    """
    if metrics is None:
        metrics = RollingMetrics()
    evaluations = []
    curve_rows = []
    index = first_case_index
    for case in stream.cases:
        alarm_prefix, trajectory, _ = run_case(case, agent, tracker, rng)
        agent.update([trajectory])
        cost = expected_cost(case.actual_deviation, alarm_prefix, case.length, cost_params)
        correct = (alarm_prefix is not None) == case.actual_deviation
        evaluations.append(CaseEvaluation(case.case_id, alarm_prefix, case.length,
                                          cost, correct))
        if reward_log is not None:
            reward_log.append(trajectory.terminal_reward)
        rolled = metrics.observe(trajectory.terminal_reward, alarm_prefix,
                                 case.length, case.actual_deviation)
        curve_rows.append((index, *rolled))
        index += 1
    return evaluations, curve_rows


def write_learning_curve(curve_rows, path) -> None:
    """Emit the rolling-metric rows as CSV."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for index, reward, alarm_rate, accurate_rate, earliness_value in curve_rows:
            writer.writerow([index, repr(reward), repr(alarm_rate),
                             repr(accurate_rate), repr(earliness_value)])
