"""Online reinforcement learning with artificial curiosity."""

from .agent import (
    HyperParameters,
    RlAgent,
    Trajectory,
    UpdateError,
    policy_forward,
    ppo_update,
    select_action,
)
from .backend import active_name, available_backends
from .rewards import (
    ADAPTATION_WINDOW,
    NPV_WINDOW,
    CuriosityTracker,
    curiosity_c,
    earliness_coef_b,
    terminal_reward,
    tracker_observe,
)
from .runner import (
    CURVE_COLUMNS,
    RollingMetrics,
    case_states,
    run_case,
    run_stream,
    write_learning_curve,
)

__all__ = [
    "ADAPTATION_WINDOW",
    "CURVE_COLUMNS",
    "CuriosityTracker",
    "HyperParameters",
    "NPV_WINDOW",
    "RlAgent",
    "RollingMetrics",
    "Trajectory",
    "UpdateError",
    "active_name",
    "available_backends",
    "case_states",
    "curiosity_c",
    "earliness_coef_b",
    "policy_forward",
    "ppo_update",
    "run_case",
    "run_stream",
    "select_action",
    "terminal_reward",
    "tracker_observe",
    "write_learning_curve",
]
