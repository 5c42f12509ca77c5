"""The PPO actor-critic agent: parameters, updates, and checkpoints.

Both heads are 5 -> h1 -> h2 -> out perceptrons with tanh hiddens, stored as
flat float64 vectors (layout in _kernels_py). Episodes are single cases with
one terminal reward; the discount is fixed at 1, so every step's return is
that terminal reward and advantages are return minus the stored value
estimate. Updates are clipped-surrogate PPO with Adam, one batch per episode.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import backend as _backend
from .rewards import CuriosityTracker

N_STATE = 5
CHECKPOINT_FORMAT_ID = "earlywarn-agent/1"


class UpdateError(RuntimeError):
    """A policy update produced non-finite weights; the run should abort."""


@dataclass(frozen=True, slots=True)
class HyperParameters:
    """PPO knobs. gamma is fixed at 1 so the terminal reward is not discounted away."""

    clip_epsilon: float = 0.2
    learning_rate: float = 3e-4
    update_epochs: int = 4
    hidden_sizes: tuple[int, int] = (64, 64)
    gamma: float = 1.0
    prob_floor: float = 1e-8
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8

    def __post_init__(self):
        if self.gamma != 1.0:
            raise ValueError("gamma is fixed at 1.0 for single-terminal-reward episodes")
        if self.clip_epsilon <= 0:
            raise ValueError("clip_epsilon must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.update_epochs < 1:
            raise ValueError("update_epochs must be >= 1")
        if len(self.hidden_sizes) != 2 or min(self.hidden_sizes) < 1:
            raise ValueError("hidden_sizes must be two positive layer widths")
        if not 0 < self.prob_floor < 1:
            raise ValueError("prob_floor must be in (0, 1)")


def theta_size(h1: int, h2: int, out: int) -> int:
    return h1 * N_STATE + h1 + h2 * h1 + h2 + out * h2 + out


@dataclass(frozen=True, slots=True)
class Trajectory:
    """One episode: states, sampled actions, their log-probs, value estimates, rewards.

    Rewards are zero everywhere except the final step. Action encoding:
    0 = continue, 1 = alarm.
    """

    states: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        n = len(self.actions)
        if n < 1:
            raise ValueError("empty trajectory")
        if self.states.shape != (n, N_STATE):
            raise ValueError(f"states shape {self.states.shape} != ({n}, {N_STATE})")
        for name in ("log_probs", "values", "rewards"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
        if n > 1 and np.any(self.rewards[:-1] != 0.0):
            raise ValueError("only the final step may carry a reward")

    @property
    def terminal_reward(self) -> float:
        return float(self.rewards[-1])


class RlAgent:
    """Actor-critic weights plus Adam state, bound to a kernel backend."""

    def __init__(self, hyper: HyperParameters, actor_theta, critic_theta,
                 actor_m, actor_v, critic_m, critic_v, adam_step: int = 0,
                 kernels=None):
        self.hyper = hyper
        self.actor_theta = actor_theta
        self.critic_theta = critic_theta
        self.actor_m = actor_m
        self.actor_v = actor_v
        self.critic_m = critic_m
        self.critic_v = critic_v
        self.adam_step = adam_step
        self.kernels = kernels if kernels is not None else _backend.DEFAULT

    @classmethod
    def initialize(cls, hyper: HyperParameters, rng, kernels=None) -> "RlAgent":
        """Small symmetric random hidden layers, zeroed output layers.

        Zero output layers make the initial policy exactly uniform and the
        initial value zero, so early behavior reflects rewards rather than
        initialization luck.
        """
        h1, h2 = hyper.hidden_sizes
        actor = np.zeros(theta_size(h1, h2, 2), dtype=np.float64)
        critic = np.zeros(theta_size(h1, h2, 1), dtype=np.float64)
        for theta, _out in ((actor, 2), (critic, 1)):
            o = 0
            for fan_in, width in ((N_STATE, h1), (h1, h2)):
                scale = 1.0 / math.sqrt(fan_in)
                theta[o:o + width * fan_in] = rng.uniform(-scale, scale, width * fan_in)
                o += width * fan_in + width  # biases stay zero
        return cls(hyper, actor, critic,
                   np.zeros_like(actor), np.zeros_like(actor),
                   np.zeros_like(critic), np.zeros_like(critic),
                   adam_step=0, kernels=kernels)

    def probs_values(self, states: np.ndarray):
        """Batched action probabilities and value estimates."""
        h1, h2 = self.hyper.hidden_sizes
        x = np.ascontiguousarray(states, dtype=np.float64)
        return self.kernels.probs_values(self.actor_theta, self.critic_theta, h1, h2, x)

    def forward(self, state):
        """Probabilities and value for a single state; rejects non-finite inputs."""
        arr = np.asarray(state, dtype=np.float64).reshape(1, N_STATE)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite state {state!r}")
        probs, values = self.probs_values(arr)
        return probs[0], float(values[0])

    def update(self, trajectories) -> None:
        """One PPO update over a batch of trajectories (normally a single episode)."""
        if not trajectories:
            raise ValueError("empty trajectory batch")
        states = np.concatenate([t.states for t in trajectories])
        actions = np.concatenate([t.actions for t in trajectories]).astype(np.int64)
        old_logp = np.concatenate([t.log_probs for t in trajectories])
        returns = np.concatenate([
            np.full(len(t.actions), t.terminal_reward) for t in trajectories])
        values = np.concatenate([t.values for t in trajectories])
        advantages = returns - values
        h1, h2 = self.hyper.hidden_sizes
        hp = self.hyper
        self.adam_step = self.kernels.ppo_update(
            self.actor_theta, self.actor_m, self.actor_v,
            self.critic_theta, self.critic_m, self.critic_v,
            h1, h2, np.ascontiguousarray(states), actions,
            np.ascontiguousarray(old_logp), np.ascontiguousarray(returns),
            np.ascontiguousarray(advantages),
            hp.clip_epsilon, hp.prob_floor, hp.learning_rate,
            hp.adam_beta1, hp.adam_beta2, hp.adam_epsilon,
            hp.update_epochs, self.adam_step)
        if not (np.all(np.isfinite(self.actor_theta))
                and np.all(np.isfinite(self.critic_theta))):
            raise UpdateError(
                "policy update produced non-finite weights "
                f"(batch of {len(trajectories)}, {len(actions)} steps, "
                f"terminal rewards {[t.terminal_reward for t in trajectories]})")

    def save(self, path, tracker: CuriosityTracker | None = None) -> None:
        """JSON weight dump (format earlywarn-agent/1), optionally with tracker state."""
        payload = {
            "format": CHECKPOINT_FORMAT_ID,
            "hyper": {**asdict(self.hyper), "hidden_sizes": list(self.hyper.hidden_sizes)},
            "adam_step": self.adam_step,
            "actor_theta": self.actor_theta.tolist(),
            "critic_theta": self.critic_theta.tolist(),
            "actor_m": self.actor_m.tolist(),
            "actor_v": self.actor_v.tolist(),
            "critic_m": self.critic_m.tolist(),
            "critic_v": self.critic_v.tolist(),
            "tracker": tracker.state() if tracker is not None else None,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path, kernels=None):
        """Returns (agent, tracker-or-None)."""
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format") != CHECKPOINT_FORMAT_ID:
            raise ValueError(f"{path}: not an {CHECKPOINT_FORMAT_ID} checkpoint")
        hyper_dict = dict(payload["hyper"])
        hyper_dict["hidden_sizes"] = tuple(hyper_dict["hidden_sizes"])
        hyper = HyperParameters(**hyper_dict)
        arrays = {key: np.asarray(payload[key], dtype=np.float64)
                  for key in ("actor_theta", "critic_theta", "actor_m", "actor_v",
                              "critic_m", "critic_v")}
        agent = cls(hyper, arrays["actor_theta"], arrays["critic_theta"],
                    arrays["actor_m"], arrays["actor_v"],
                    arrays["critic_m"], arrays["critic_v"],
                    adam_step=int(payload["adam_step"]), kernels=kernels)
        tracker = None
        if payload.get("tracker") is not None:
            tracker = CuriosityTracker.from_state(payload["tracker"])
        return agent, tracker


def policy_forward(agent: RlAgent, state):
    """Action probabilities and value estimate for one state."""
    return agent.forward(state)


def select_action(probs, rng) -> int:
    """Sample an action from (p_continue, p_alarm); returns 1 for alarm."""
    return 1 if rng.random() < probs[1] else 0


def ppo_update(agent: RlAgent, trajectories) -> RlAgent:
    """Apply one clipped-surrogate update over a trajectory batch (mutates the agent)."""
    agent.update(trajectories)
    return agent
