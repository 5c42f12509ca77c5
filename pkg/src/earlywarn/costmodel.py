"""Parametric cost model for proactive adaptation decisions.

Costs are normalized against a penalty `C_p`: adapting costs `lam * C_p`,
rolling back an unnecessary adaptation costs `kappa * C_p`, and an adaptation
triggered at prefix j succeeds with probability alpha(j), which falls
linearly from 1 at the first prediction point to `alpha_min` at the last.
All costs returned here are expectations over that success probability, not
Bernoulli samples.
"""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True, slots=True)
class CostParameters:
    """Normalized cost-model cell: penalty, adaptation ratio, compensation ratio, alpha range."""

    penalty: float = 100.0
    lam: float = 0.25
    kappa: float = 0.25
    alpha_min: float = 0.0
    alpha_max: float = 1.0

    def __post_init__(self):
        if self.penalty <= 0:
            raise ValueError(f"penalty must be positive, got {self.penalty}")
        for name in ("lam", "kappa", "alpha_min"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.alpha_max != 1.0:
            raise ValueError("alpha_max is fixed at 1.0")

    @property
    def adaptation_cost(self) -> float:
        return self.lam * self.penalty

    @property
    def compensation_cost(self) -> float:
        return self.kappa * self.penalty


@dataclass(frozen=True, slots=True)
class EnvelopeSpec:
    """Half-width of the uniform perturbation applied to fitted-against cost parameters."""

    xi: float

    def __post_init__(self):
        if self.xi < 0:
            raise ValueError(f"xi must be >= 0, got {self.xi}")


def alpha_at(j: int, l: int, params: CostParameters) -> float:
    """Adaptation effectiveness at prefix j of a length-l case (linear decay)."""
    if not 1 <= j <= l:
        raise ValueError(f"prefix index {j} outside 1..{l}")
    if l == 1:
        return params.alpha_max
    return params.alpha_max - (params.alpha_max - params.alpha_min) * (j - 1) / (l - 1)


def expected_cost(actual_deviation: bool, alarm_prefix, l: int,
                  params: CostParameters) -> float:
    """Expected case cost for an alarm at `alarm_prefix` (None = no alarm)."""
    if alarm_prefix is None:
        return params.penalty if actual_deviation else 0.0
    alpha = alpha_at(alarm_prefix, l, params)
    if actual_deviation:
        return params.adaptation_cost + (1.0 - alpha) * params.penalty
    return params.adaptation_cost + alpha * params.compensation_cost


def sample_envelope(params: CostParameters, spec: EnvelopeSpec, rng) -> CostParameters:
    """Resample lam, kappa, and alpha_min uniformly within +-xi, clamped to [0, 1].

    Models the fitting-time uncertainty about the true cost cell; the penalty
    is the normalization constant and stays fixed.
    """
    def draw(actual: float) -> float:
        value = rng.uniform(actual - spec.xi, actual + spec.xi)
        return min(1.0, max(0.0, value))

    return replace(params, lam=draw(params.lam), kappa=draw(params.kappa),
                   alpha_min=draw(params.alpha_min))
