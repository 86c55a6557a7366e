"""Inference-time planning: action selection, roll-outs, step-count forecasting.

The planner evaluates the trained policy recursively to emit a footstep
sequence. The forecaster reads the critic instead: the discounted return of the
constant -1 step reward is inverted back into an (undiscounted) step count, so
choosing between candidate targets costs one network evaluation each instead of
a full roll-out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env import Scenario, WorldState, env_reset, env_step, is_terminal, observe
from .geometry import Displacement, Footstep, Obstacle, clip_to_feasible
from .neural import mlp_forward
from .td3 import TrainedModel, normalized_to_displacement

FORECAST_SATURATION_FLOOR = 1e-6


@dataclass(frozen=True)
class FootstepPlan:
    """A footstep sequence starting at the current support footstep."""

    steps: tuple[Footstep, ...]
    reached: bool

    @property
    def length(self) -> int:
        """Number of displacements taken (one less than the footstep count)."""
        return len(self.steps) - 1


def act(model: TrainedModel, obs: np.ndarray) -> Displacement:
    """Deterministic policy action for one observation.

    The Tanh output is mapped affinely onto the displacement box (asymmetric in
    x) and then projected into the feasible ellipsoid.
    """
    obs = np.asarray(obs)
    if obs.shape != (8,):
        raise ValueError(f"expected an 8-element observation, got shape {obs.shape}")
    u, _ = mlp_forward(model.actor, obs)
    fs = model.robot.feasible
    return clip_to_feasible(normalized_to_displacement(u, fs), fs)


def _rollout(model: TrainedModel, w: WorldState, max_steps: int) -> FootstepPlan:
    steps = [w.support]
    if is_terminal(w, model.tolerance):
        return FootstepPlan(tuple(steps), True)
    for _ in range(max_steps):
        a = act(model, observe(w))
        w, tr = env_step(w, a, model.reward_cfg, model.tolerance, model.robot)
        steps.append(w.support)
        if tr.terminated:
            return FootstepPlan(tuple(steps), True)
    return FootstepPlan(tuple(steps), False)


def rollout(model: TrainedModel, w: WorldState, horizon: int) -> FootstepPlan:
    """Roll the policy out for at most `horizon` footsteps."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    return _rollout(model, w, horizon)


def rollout_to_target(model: TrainedModel, w: WorldState, cap: int = 200) -> FootstepPlan:
    """Roll the policy out until the target is reached, bounded by `cap` steps."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    return _rollout(model, w, cap)


def invert_return(q: float, gamma: float) -> float:
    """Recover a step count from a discounted sum of -1 rewards.

    Exact inverse of q = -(1 - gamma^n) / (1 - gamma). Values at or beyond the
    geometric horizon saturate; non-negative q reads as already at the target.
    """
    if q >= 0.0:
        return 0.0
    base = 1.0 + (1.0 - gamma) * q
    if base <= 0.0:
        return math.log(FORECAST_SATURATION_FLOOR) / math.log(gamma)
    return math.log(base) / math.log(gamma)


def forecast_steps(
    model: TrainedModel,
    w: WorldState,
    *,
    critic: str = "min",
    raw: bool = False,
) -> float:
    """Estimate how many footsteps remain, from the critic alone.

    critic="min" uses the pessimistic minimum of the twin critics (matching the
    training target); critic="critic1" reads a single network. With raw=True
    the negated Q-value is returned without the geometric inversion.
    """
    if critic not in ("min", "critic1"):
        raise ValueError(f"critic must be 'min' or 'critic1', got {critic!r}")
    obs = observe(w)
    u, _ = mlp_forward(model.actor, obs)
    x = np.concatenate([obs, u])
    q1, _ = mlp_forward(model.critic1, x)
    if critic == "min":
        q2, _ = mlp_forward(model.critic2, x)
        q = float(min(q1[0], q2[0]))
    else:
        q = float(q1[0])
    if raw:
        return -q
    return invert_return(q, model.gamma)


def select_target(
    model: TrainedModel,
    support: Footstep,
    obstacle: Obstacle,
    candidates: list[Footstep],
    *,
    critic: str = "min",
    raw: bool = False,
    area_half: float = 2.0,
) -> tuple[int, list[float]]:
    """Forecast each candidate target and pick the cheapest (ties: lowest index).

    One forecast per candidate, never a roll-out.
    """
    if not candidates:
        raise ValueError("need at least one candidate target")
    forecasts = []
    for cand in candidates:
        sc = Scenario(start=support, target=cand, obstacle=obstacle, area_half=area_half)
        forecasts.append(
            forecast_steps(model, WorldState(support, sc), critic=critic, raw=raw)
        )
    best = min(range(len(forecasts)), key=lambda i: (forecasts[i], i))
    return best, forecasts


# --- plan text format -------------------------------------------------------
#
#   reached <0|1>
#   <left|right> <x> <y> <theta>     (one per footstep, plan order)


class PlanFormatError(ValueError):
    pass


def format_plan(plan: FootstepPlan) -> str:
    lines = [f"reached {1 if plan.reached else 0}"]
    for f in plan.steps:
        lines.append(f"{f.foot.value} {f.pose.x!r} {f.pose.y!r} {f.pose.theta!r}")
    lines.append("")
    return "\n".join(lines)


def parse_plan(text: str) -> FootstepPlan:
    from .geometry import Foot, Pose2

    reached: bool | None = None
    steps: list[Footstep] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == "reached":
            if reached is not None:
                raise PlanFormatError(f"line {lineno}: duplicate reached header")
            if len(tokens) != 2 or tokens[1] not in ("0", "1"):
                raise PlanFormatError(f"line {lineno}: reached must be 0 or 1")
            reached = tokens[1] == "1"
        else:
            if len(tokens) != 4:
                raise PlanFormatError(f"line {lineno}: expected <foot> <x> <y> <theta>")
            if tokens[0] == "left":
                foot = Foot.LEFT
            elif tokens[0] == "right":
                foot = Foot.RIGHT
            else:
                raise PlanFormatError(f"line {lineno}: unknown foot {tokens[0]!r}")
            try:
                x, y, theta = (float(t) for t in tokens[1:])
            except ValueError as e:
                raise PlanFormatError(f"line {lineno}: {e}") from None
            steps.append(Footstep(foot, Pose2(x, y, theta)))
    if reached is None:
        raise PlanFormatError("missing reached header")
    if not steps:
        raise PlanFormatError("plan contains no footsteps")
    return FootstepPlan(tuple(steps), reached)
