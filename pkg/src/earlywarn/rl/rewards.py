"""Terminal rewards and the curiosity trackers feeding them.

After an alarm the true outcome of the adapted case is unknowable, so the
adapted-branch reward is intrinsic: it depends on how early the alarm came
(b), a curiosity modifier built from the recent adaptation rate and the
negative predictive value of recent silences (c), and the adaptation rate
itself (d). Silences get plain extrinsic rewards because their outcomes are
observed.
"""

from __future__ import annotations

from collections import deque

ADAPTATION_WINDOW = 30
NPV_WINDOW = 100

REWARD_CORRECT_SILENCE = 1.5
REWARD_MISSED_DEVIATION = -1.0


def curiosity_c(v: float, d: float) -> float:
    """Curiosity modifier, bilinear in the npv v and adaptation rate d, clamped to [0, 3].

    Zero once v reaches 0.7 with a majority-adapting policy, or once the
    adaptation rate drops to 0.5 with accurate-enough silences; values above 1
    push exploration toward later alarms.
    """
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"v must be in [0, 1], got {v}")
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"d must be in [0, 1], got {d}")
    return min(3.0, max(0.0, (-30.0 * v + 21.0) * (d - 0.5)))


def earliness_coef_b(j: int, l: int) -> float:
    """Earliness coefficient: 1 at the first prediction point, 1/2 at the last."""
    if not 1 <= j <= l:
        raise ValueError(f"prefix index {j} outside 1..{l}")
    if l == 1:
        return 1.0
    return 1.0 - (j - 1) / (2.0 * (l - 1))


def terminal_reward(adapted: bool, actual_deviation: bool, b: float, c: float,
                    d: float) -> float:
    """End-of-episode reward: intrinsic b*(1-c) - 2d when adapted, extrinsic otherwise."""
    if adapted:
        return b * (1.0 - c) - 2.0 * d
    if actual_deviation:
        return REWARD_MISSED_DEVIATION
    return REWARD_CORRECT_SILENCE


class CuriosityTracker:
    """Sliding windows behind d (adaptation rate) and v (npv of non-adapted cases)."""

    def __init__(self):
        self.adaptation_window = deque(maxlen=ADAPTATION_WINDOW)
        self.npv_window = deque(maxlen=NPV_WINDOW)  # True = TN, False = FN

    def adaptation_rate(self) -> float:
        if not self.adaptation_window:
            return 0.0
        return sum(self.adaptation_window) / len(self.adaptation_window)

    def npv(self) -> float:
        """TN / (TN + FN) over recent silences; 0 before any silence is observed.

        The cold-start 0 keeps curiosity live until the agent has evidence its
        silences are trustworthy.
        """
        if not self.npv_window:
            return 0.0
        return sum(self.npv_window) / len(self.npv_window)

    def observe(self, adapted: bool, actual_deviation: bool) -> None:
        self.adaptation_window.append(bool(adapted))
        if not adapted:
            self.npv_window.append(not actual_deviation)

    def state(self) -> dict:
        return {"adaptation": [int(x) for x in self.adaptation_window],
                "npv": [int(x) for x in self.npv_window]}

    @classmethod
    def from_state(cls, state: dict) -> "CuriosityTracker":
        tracker = cls()
        tracker.adaptation_window.extend(bool(x) for x in state["adaptation"])
        tracker.npv_window.extend(bool(x) for x in state["npv"])
        return tracker


def tracker_observe(tracker: CuriosityTracker, adapted: bool,
                    actual_deviation: bool) -> CuriosityTracker:
    """Record one finished case in the tracker (mutates and returns it)."""
    tracker.observe(adapted, actual_deviation)
    return tracker
