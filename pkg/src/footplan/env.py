"""Footstep-to-target MDP: observations, reward, termination, scenario sampling.

An episode starts from a scenario (start footstep, target footstep, one optional
circular obstacle inside a square arena). Each step places the swing foot; the
reward charges one unit per step plus small shaping terms and a large collision
penalty, so the undiscounted return counts footsteps. Episodes terminate on
reaching the target within tolerance and are truncated at a step limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .geometry import (
    Displacement,
    Foot,
    Footstep,
    Obstacle,
    Pose2,
    RobotSpec,
    apply_displacement,
    apply_symmetry,
    clip_to_feasible,
    default_robot_spec,
    footstep_collides,
    mirror_footstep,
    point_to_frame,
    pose_error,
    to_frame,
)

SITUATIONS = ("NO", "AO", "FO")

OBS_DIM = 8


@dataclass(frozen=True)
class Scenario:
    start: Footstep
    target: Footstep
    obstacle: Obstacle
    area_half: float = 2.0


@dataclass
class WorldState:
    support: Footstep
    scenario: Scenario
    step_count: int = 0


@dataclass(frozen=True)
class RewardConfig:
    """Step cost of -1, small pose-shaping weights, large collision penalty.

    w1/w2 stay well below one step so the return remains a usable step count;
    w3 makes a colliding step cost the equivalent of w3 extra steps.
    """

    w1: float = 0.1
    w2: float = 0.05
    w3: float = 10.0

    def __post_init__(self):
        if not (0.0 <= self.w1 <= 0.5 and 0.0 <= self.w2 <= 0.5):
            raise ValueError("shaping weights must lie in [0, 0.5]")
        if self.w3 < 2.0:
            raise ValueError("collision penalty must be at least 2 step-equivalents")


@dataclass(frozen=True)
class ToleranceConfig:
    tol_p: float = 0.05
    tol_theta: float = math.radians(5.0)
    truncation_steps: int = 90

    def __post_init__(self):
        if self.tol_p <= 0 or self.tol_theta <= 0 or self.truncation_steps <= 0:
            raise ValueError("tolerances and truncation limit must be strictly positive")


@dataclass(frozen=True)
class Transition:
    obs: np.ndarray
    action: Displacement
    reward: float
    next_obs: np.ndarray
    terminated: bool
    truncated: bool


def observe(w: WorldState) -> np.ndarray:
    """Symmetry-reduced 8-vector view of the world.

    Target pose and obstacle center are re-expressed in the support-foot frame;
    lateral and rotational quantities are sign-flipped under left support so
    mirrored worlds observe identically. Layout:
    (same-foot flag, x_t, sig(y_t), cos th_t, sig(sin th_t), x_o, sig(y_o), rho).
    """
    sc = w.scenario
    foot = w.support.foot
    rel = to_frame(sc.target.pose, w.support.pose)
    ox, oy = point_to_frame(sc.obstacle.x, sc.obstacle.y, w.support.pose)
    return np.array(
        [
            1.0 if foot is sc.target.foot else 0.0,
            rel.x,
            apply_symmetry(foot, rel.y),
            math.cos(rel.theta),
            apply_symmetry(foot, math.sin(rel.theta)),
            ox,
            apply_symmetry(foot, oy),
            sc.obstacle.rho,
        ]
    )


def reward(w: WorldState, collided: bool, cfg: RewardConfig) -> float:
    dp, dt = pose_error(w.support, w.scenario.target)
    r = -1.0 - cfg.w1 * dp - cfg.w2 * dt
    if collided:
        r -= cfg.w3
    return r


def reaches_target(support: Footstep, target: Footstep, tol: ToleranceConfig) -> bool:
    """Goal test shared by the environment and the discrete planners."""
    if support.foot is not target.foot:
        return False
    dp, dt = pose_error(support, target)
    return dp <= tol.tol_p and dt <= tol.tol_theta


def is_terminal(w: WorldState, tol: ToleranceConfig) -> bool:
    return reaches_target(w.support, w.scenario.target, tol)


def env_step(
    w: WorldState,
    a: Displacement,
    cfg: RewardConfig,
    tol: ToleranceConfig,
    spec: RobotSpec,
) -> tuple[WorldState, Transition]:
    """Advance one footstep. Collision never blocks the step, it only penalizes."""
    obs = observe(w)
    clipped = clip_to_feasible(a, spec.feasible)
    support = apply_displacement(w.support, clipped, spec)
    nxt = WorldState(support, w.scenario, w.step_count + 1)
    collided = footstep_collides(support, w.scenario.obstacle, spec)
    r = reward(nxt, collided, cfg)
    terminated = is_terminal(nxt, tol)
    truncated = (not terminated) and nxt.step_count >= tol.truncation_steps
    return nxt, Transition(obs, clipped, r, observe(nxt), terminated, truncated)


def env_reset(sc: Scenario, spec: RobotSpec | None = None) -> WorldState:
    if spec is not None and footstep_collides(sc.start, sc.obstacle, spec):
        raise ValueError("scenario start footstep collides with the obstacle")
    return WorldState(sc.start, sc, 0)


def mirror_scenario(sc: Scenario) -> Scenario:
    """Reflect the whole scenario about the x axis (an involution)."""
    return Scenario(
        start=mirror_footstep(sc.start),
        target=mirror_footstep(sc.target),
        obstacle=Obstacle(sc.obstacle.x, -sc.obstacle.y, sc.obstacle.rho),
        area_half=sc.area_half,
    )


def mirror_world(w: WorldState) -> WorldState:
    return WorldState(mirror_footstep(w.support), mirror_scenario(w.scenario), w.step_count)


_MAX_REJECTION_TRIES = 10_000


def _sample_footstep(
    rng: np.random.Generator,
    x_range: tuple[float, float],
    y_range: tuple[float, float],
    obstacle: Obstacle,
    spec: RobotSpec,
    clearance: float,
) -> Footstep:
    """Rejection-sample a collision-free footstep, keeping `clearance` beyond
    the obstacle boundary when one is present."""
    for _ in range(_MAX_REJECTION_TRIES):
        foot = Foot.RIGHT if rng.integers(2) == 0 else Foot.LEFT
        pose = Pose2(
            rng.uniform(*x_range),
            rng.uniform(*y_range),
            rng.uniform(-math.pi, math.pi),
        )
        f = Footstep(foot, pose)
        if footstep_collides(f, obstacle, spec):
            continue
        if obstacle.rho > 0.0 and clearance > 0.0:
            d = math.hypot(pose.x - obstacle.x, pose.y - obstacle.y)
            if d < obstacle.rho + clearance:
                continue
        return f
    raise RuntimeError("footstep sampling failed: degenerate scenario parameters")


def sample_scenario(
    situation: str,
    rho: float,
    rng_seed: int,
    spec: RobotSpec,
    *,
    area_half: float = 2.0,
    start_clearance: float = 0.3,
    fo_standoff: float = 0.25,
) -> Scenario:
    """Draw one evaluation scenario.

    NO: fixed right-foot target at the origin, start anywhere in the arena,
    no obstacle. AO: obstacle at the center, start in a left-side zone and
    target in the mirrored right-side zone. FO: obstacle at the center, target
    just in front of it facing +x, start anywhere. Zones scale with the arena.
    """
    if situation not in SITUATIONS:
        raise ValueError(f"unknown situation {situation!r}; expected one of {SITUATIONS}")
    if rho < 0.0:
        raise ValueError("obstacle radius must be non-negative")
    if situation == "NO":
        rho = 0.0
    rng = np.random.default_rng(rng_seed)
    arena = (-area_half, area_half)
    zoom = area_half / 2.0

    if situation == "NO":
        obstacle = Obstacle(0.0, 0.0, 0.0)
        target = Footstep(Foot.RIGHT, Pose2(0.0, 0.0, 0.0))
        start = _sample_footstep(rng, arena, arena, obstacle, spec, start_clearance)
    elif situation == "AO":
        obstacle = Obstacle(0.0, 0.0, rho)
        zone_x = (-1.8 * zoom, -0.6 * zoom)
        zone_y = (-1.2 * zoom, 1.2 * zoom)
        start = _sample_footstep(rng, zone_x, zone_y, obstacle, spec, start_clearance)
        target = _sample_footstep(rng, (-zone_x[1], -zone_x[0]), zone_y, obstacle, spec, 0.0)
    else:  # FO
        obstacle = Obstacle(0.0, 0.0, rho)
        target = Footstep(Foot.RIGHT, Pose2(-(rho + fo_standoff), 0.0, 0.0))
        start = _sample_footstep(rng, arena, arena, obstacle, spec, start_clearance)

    return Scenario(start=start, target=target, obstacle=obstacle, area_half=area_half)


def scenario_mix_factory(
    situations: Iterable[str] = SITUATIONS,
    rho_range: tuple[float, float] = (0.10, 0.25),
    spec: RobotSpec | None = None,
    *,
    area_half: float = 2.0,
) -> Callable[[np.random.Generator], Scenario]:
    """Factory over a uniform situation mix with randomized obstacle radii."""
    menu = tuple(situations)
    if not menu:
        raise ValueError("need at least one situation")
    for s in menu:
        if s not in SITUATIONS:
            raise ValueError(f"unknown situation {s!r}")
    robot = spec if spec is not None else default_robot_spec()

    def factory(rng: np.random.Generator) -> Scenario:
        situation = menu[int(rng.integers(len(menu)))]
        rho = float(rng.uniform(*rho_range)) if situation != "NO" else 0.0
        seed = int(rng.integers(0, 2**63 - 1))
        return sample_scenario(situation, rho, seed, robot, area_half=area_half)

    return factory


# --- scenario text format ------------------------------------------------
#
# One record, angles in radians, '#' starts a comment:
#   start <left|right> <x> <y> <theta>
#   target <left|right> <x> <y> <theta>
#   obstacle <x> <y> <rho>
#   area_half <v>


class ScenarioFormatError(ValueError):
    pass


def _parse_foot(token: str, lineno: int) -> Foot:
    if token == "left":
        return Foot.LEFT
    if token == "right":
        return Foot.RIGHT
    raise ScenarioFormatError(f"line {lineno}: unknown foot {token!r} (expected left/right)")


def _parse_floats(tokens: list[str], n: int, lineno: int) -> list[float]:
    if len(tokens) != n:
        raise ScenarioFormatError(f"line {lineno}: expected {n} numeric fields, got {len(tokens)}")
    try:
        return [float(t) for t in tokens]
    except ValueError as e:
        raise ScenarioFormatError(f"line {lineno}: {e}") from None


def parse_scenario(text: str) -> Scenario:
    fields: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        key = tokens[0]
        if key in ("start", "target"):
            if len(tokens) != 5:
                raise ScenarioFormatError(f"line {lineno}: {key} needs <foot> <x> <y> <theta>")
            foot = _parse_foot(tokens[1], lineno)
            x, y, theta = _parse_floats(tokens[2:], 3, lineno)
            fields[key] = Footstep(foot, Pose2(x, y, theta))
        elif key == "obstacle":
            x, y, rho = _parse_floats(tokens[1:], 3, lineno)
            if rho < 0:
                raise ScenarioFormatError(f"line {lineno}: obstacle radius must be >= 0")
            fields[key] = Obstacle(x, y, rho)
        elif key == "area_half":
            (v,) = _parse_floats(tokens[1:], 1, lineno)
            if v <= 0:
                raise ScenarioFormatError(f"line {lineno}: area_half must be positive")
            fields[key] = v
        else:
            raise ScenarioFormatError(f"line {lineno}: unknown record {key!r}")
    for required in ("start", "target", "obstacle"):
        if required not in fields:
            raise ScenarioFormatError(f"missing {required!r} record")
    return Scenario(
        start=fields["start"],
        target=fields["target"],
        obstacle=fields["obstacle"],
        area_half=fields.get("area_half", 2.0),
    )


def format_scenario(sc: Scenario) -> str:
    def step_line(kind: str, f: Footstep) -> str:
        return f"{kind} {f.foot.value} {f.pose.x!r} {f.pose.y!r} {f.pose.theta!r}"

    return "\n".join(
        [
            step_line("start", sc.start),
            step_line("target", sc.target),
            f"obstacle {sc.obstacle.x!r} {sc.obstacle.y!r} {sc.obstacle.rho!r}",
            f"area_half {sc.area_half!r}",
            "",
        ]
    )
