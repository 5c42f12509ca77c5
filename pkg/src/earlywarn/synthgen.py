"""Seeded synthetic prediction-stream generator.

Produces base-model prediction matrices whose per-prefix sign-accuracy
follows a configurable curve, with optional drift segments that shift that
accuracy over stretches of the arrival order. Correctness is defined on the
sign of the relative deviation, which is all the downstream policies look
at; prediction magnitudes are jitter around the class anchors.

Each case draws from its own substream seeded by (seed, case index), so
generation is reproducible and cases could be generated independently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .stream import (
    BasePredictionMatrix,
    PredictionStream,
    TruthRecord,
    aggregate_stream,
)


@dataclass(frozen=True, slots=True)
class MonotoneCurve:
    """Linear sign-accuracy ramp from p_start (case start) to p_end (case end)."""

    p_start: float
    p_end: float


@dataclass(frozen=True, slots=True)
class DropRecoverCurve:
    """High accuracy, a low plateau on [drop_at, recover_at), then a linear climb back."""

    p_hi: float
    p_lo: float
    drop_at: float
    recover_at: float

    def __post_init__(self):
        if not 0.0 < self.drop_at < self.recover_at <= 1.0:
            raise ValueError("need 0 < drop_at < recover_at <= 1")


@dataclass(frozen=True, slots=True)
class DropNoRecoverCurve:
    """Accuracy cliff at drop_at that never recovers."""

    p_hi: float
    p_lo: float
    drop_at: float

    def __post_init__(self):
        if not 0.0 < self.drop_at <= 1.0:
            raise ValueError("need 0 < drop_at <= 1")


@dataclass(frozen=True, slots=True)
class ZigzagCurve:
    """Accuracy alternating by prefix parity: odd prefixes p_hi, even p_lo."""

    p_hi: float
    p_lo: float


AccuracyCurve = Union[MonotoneCurve, DropRecoverCurve, DropNoRecoverCurve, ZigzagCurve]


def _check_probs(curve):
    for name in ("p_start", "p_end", "p_hi", "p_lo"):
        value = getattr(curve, name, None)
        if value is not None and not 0.0 <= value <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {value}")


def curve_eval(curve: AccuracyCurve, tau: float, prefix_index=None) -> float:
    """Per-base-model probability of a correct-sign prediction at position tau.

    Zigzag curves alternate by prefix parity, so they additionally need the
    integer prefix index.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    _check_probs(curve)
    if isinstance(curve, MonotoneCurve):
        return curve.p_start + (curve.p_end - curve.p_start) * tau
    if isinstance(curve, DropRecoverCurve):
        if tau < curve.drop_at:
            return curve.p_hi
        if tau < curve.recover_at:
            return curve.p_lo
        if curve.recover_at == 1.0:
            return curve.p_hi
        frac = (tau - curve.recover_at) / (1.0 - curve.recover_at)
        return curve.p_lo + (curve.p_hi - curve.p_lo) * frac
    if isinstance(curve, DropNoRecoverCurve):
        return curve.p_hi if tau < curve.drop_at else curve.p_lo
    if isinstance(curve, ZigzagCurve):
        if prefix_index is None:
            raise ValueError("zigzag curves need the integer prefix index")
        return curve.p_hi if prefix_index % 2 == 1 else curve.p_lo
    raise TypeError(f"unknown curve type {type(curve).__name__}")


@dataclass(frozen=True, slots=True)
class ConstantLength:
    length: int

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("case length must be >= 1")

    def draw(self, rng) -> int:
        return self.length


@dataclass(frozen=True, slots=True)
class UniformLength:
    minimum: int
    maximum: int

    def __post_init__(self):
        if not 1 <= self.minimum <= self.maximum:
            raise ValueError("need 1 <= minimum <= maximum")

    def draw(self, rng) -> int:
        return int(rng.integers(self.minimum, self.maximum + 1))


LengthLaw = Union[ConstantLength, UniformLength]


@dataclass(frozen=True, slots=True)
class DriftSegment:
    """Additive shift of the accuracy curve over cases [start_case, end_case)."""

    start_case: int
    end_case: int
    accuracy_offset: float

    def __post_init__(self):
        if not 0 <= self.start_case < self.end_case:
            raise ValueError("need 0 <= start_case < end_case")


@dataclass(frozen=True, slots=True)
class GeneratorConfig:
    n_cases: int
    deviation_rate: float
    length_law: LengthLaw
    ensemble_size: int
    curve: AccuracyCurve
    seed: int
    drift: tuple[DriftSegment, ...] = ()
    noise_amplitude: float = 0.25
    expected_outcome: float = 0.5

    def __post_init__(self):
        if self.n_cases < 1:
            raise ValueError("n_cases must be >= 1")
        if not 0.0 <= self.deviation_rate <= 1.0:
            raise ValueError(f"deviation_rate must be in [0, 1], got {self.deviation_rate}")
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be >= 1")
        if not 0.0 < self.noise_amplitude <= 0.5:
            raise ValueError(f"noise_amplitude must be in (0, 0.5], got {self.noise_amplitude}")
        if self.expected_outcome == 0:
            raise ValueError("expected_outcome must be nonzero")
        spans = sorted((seg.start_case, seg.end_case) for seg in self.drift)
        for (_, prev_end), (next_start, _) in zip(spans, spans[1:]):
            if next_start < prev_end:
                raise ValueError("drift segments overlap")

    def drift_offset(self, case_index: int) -> float:
        for seg in self.drift:
            if seg.start_case <= case_index < seg.end_case:
                return seg.accuracy_offset
        return 0.0


def generate(config: GeneratorConfig):
    """Generate (base matrices, truth records), deterministic in config.seed."""
    matrices, truths = [], []
    width = max(4, len(str(config.n_cases - 1)))
    for k in range(config.n_cases):
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(k,)))
        length = config.length_law.draw(rng)
        deviates = bool(rng.random() < config.deviation_rate)
        offset = config.drift_offset(k)
        entries = []
        for j in range(1, length + 1):
            p = curve_eval(config.curve, j / length, prefix_index=j)
            p = min(1.0, max(0.0, p + offset))
            correct = rng.random(config.ensemble_size) < p
            jitter = rng.uniform(0.0, config.noise_amplitude, config.ensemble_size)
            # anchor at the true class when correct, the opposite class otherwise,
            # jittered toward the midpoint so the sign of delta never flips
            anchor_one = correct == deviates
            entries.append(tuple(float(v) for v in np.where(anchor_one, 1.0 - jitter, jitter)))
        case_id = f"case-{k:0{width}d}"
        matrices.append(BasePredictionMatrix(case_id, config.expected_outcome, tuple(entries)))
        truths.append(TruthRecord(case_id, 1.0 if deviates else 0.0, deviates, length))
    return matrices, truths


def generate_stream(config: GeneratorConfig) -> PredictionStream:
    """Generate and aggregate in one step."""
    matrices, truths = generate(config)
    return aggregate_stream(matrices, truths)


def preset_config(name: str, n_cases: int, seed: int, ensemble_size: int = 20,
                  drift: tuple[DriftSegment, ...] = ()) -> GeneratorConfig:
    """Named generator shapes loosely patterned on common benchmark regimes.

    These fix deviation rate, length law, and accuracy-curve shape; they make
    no claim of statistical fidelity to any particular event log.
    """
    shapes = {
        "bpic12-like": (0.25, UniformLength(3, 48), MonotoneCurve(0.55, 0.9)),
        "bpic17rf-like": (0.41, UniformLength(5, 71),
                          DropNoRecoverCurve(0.85, 0.55, drop_at=0.56)),
        "traffic-rf-like": (0.58, UniformLength(2, 5),
                            DropRecoverCurve(0.8, 0.55, drop_at=0.25, recover_at=0.65)),
        "cargo-like": (0.31, ConstantLength(21), ZigzagCurve(0.8, 0.55)),
    }
    if name not in shapes:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(shapes)}")
    rate, law, curve = shapes[name]
    return GeneratorConfig(n_cases=n_cases, deviation_rate=rate, length_law=law,
                           ensemble_size=ensemble_size, curve=curve, seed=seed, drift=drift)
