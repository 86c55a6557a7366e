"""Discrete-set footstep search: weighted A* with a grid-hashed closed list,
an anytime wrapper over a decreasing inflation schedule, and a breadth-first
oracle used to cross-check optimality on small instances.

Search nodes are exact footsteps; duplicate detection buckets them on a
(foot, x, y, theta) grid finer than the goal tolerance. Edges cost one step.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass

from .env import ToleranceConfig, reaches_target
from .geometry import (
    Displacement,
    Footstep,
    Obstacle,
    RobotSpec,
    apply_displacement,
    footstep_collides,
    is_feasible,
    max_step_distance,
    pose_error,
)
from .plan import FootstepPlan

DEFAULT_GRID_XY = 0.02
DEFAULT_GRID_THETA = math.radians(10.0)
DEFAULT_EPSILON_SCHEDULE = (10.0, 5.0, 3.0, 2.0, 1.5, 1.0)
DEFAULT_NODE_BUDGET = 2_000_000


@dataclass(frozen=True)
class ActionSet:
    """Named list of feasible displacements in the right-support convention."""

    name: str
    displacements: tuple[Displacement, ...]

    def __post_init__(self):
        if not self.displacements:
            raise ValueError("action set is empty")

    def validate(self, spec: RobotSpec) -> None:
        for d in self.displacements:
            if not is_feasible(d, spec.feasible):
                raise ValueError(f"action set {self.name!r}: infeasible displacement {d}")
        if not any(d.dx > 0 for d in self.displacements):
            raise ValueError(f"action set {self.name!r} has no forward displacement")


def builtin_action_set(name: str) -> ActionSet:
    """Two ready-made sets: a small 8-action set and a 12-action extension."""
    deg = math.radians
    set_a = [
        Displacement(0.08, 0.0, 0.0),
        Displacement(0.04, 0.0, 0.0),
        Displacement(-0.03, 0.0, 0.0),
        Displacement(0.0, 0.04, 0.0),
        Displacement(0.0, -0.02, 0.0),
        Displacement(0.0, 0.0, deg(20.0)),
        Displacement(0.0, 0.0, -deg(20.0)),
        Displacement(0.05, 0.02, 0.0),
    ]
    if name == "A":
        return ActionSet("A", tuple(set_a))
    if name == "B":
        set_b = set_a + [
            Displacement(0.05, -0.02, 0.0),
            Displacement(0.05, 0.0, deg(10.0)),
            Displacement(0.05, 0.0, -deg(10.0)),
            Displacement(0.02, 0.03, deg(8.0)),
        ]
        return ActionSet("B", tuple(set_b))
    raise ValueError(f"unknown built-in action set {name!r} (have A, B)")


def load_action_set(path: str, spec: RobotSpec, name: str | None = None) -> ActionSet:
    """Read `<dx> <dy> <dtheta>` lines; every displacement must be feasible."""
    displacements = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) != 3:
                raise ValueError(f"{path}: line {lineno}: expected <dx> <dy> <dtheta>")
            try:
                d = Displacement(*(float(t) for t in tokens))
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: malformed number") from None
            if not is_feasible(d, spec.feasible):
                raise ValueError(f"{path}: line {lineno}: displacement outside the feasible ellipsoid")
            displacements.append(d)
    aset = ActionSet(name or path, tuple(displacements))
    aset.validate(spec)
    return aset


@dataclass
class SearchConfig:
    """Search parameters; `robot` rides along because expanding a node means
    stepping with the robot's kinematics."""

    action_set: ActionSet
    robot: RobotSpec
    grid_xy: float = DEFAULT_GRID_XY
    grid_theta: float = DEFAULT_GRID_THETA
    epsilon_schedule: tuple[float, ...] = DEFAULT_EPSILON_SCHEDULE
    node_budget: int = DEFAULT_NODE_BUDGET
    d_max: float = 0.23
    dtheta_max: float = math.radians(20.0)

    def __post_init__(self):
        eps = self.epsilon_schedule
        if not eps or any(b >= a for a, b in zip(eps, eps[1:])) or eps[-1] < 1.0:
            raise ValueError("epsilon schedule must be strictly decreasing and end >= 1")
        if self.d_max <= 0 or self.grid_xy <= 0 or self.grid_theta <= 0:
            raise ValueError("grid resolutions and d_max must be positive")


def make_search_config(action_set: ActionSet, spec: RobotSpec, **overrides) -> SearchConfig:
    """SearchConfig with the step-reach bound derived from the robot's ellipsoid."""
    action_set.validate(spec)
    defaults = dict(
        d_max=max_step_distance(spec),
        dtheta_max=spec.feasible.dtheta_max,
    )
    defaults.update(overrides)
    return SearchConfig(action_set=action_set, robot=spec, **defaults)


def successors(
    node: Footstep, aset: ActionSet, obstacle: Obstacle, spec: RobotSpec
) -> list[Footstep]:
    """Collision-free footsteps reachable in one step; the canonical actions
    mirror automatically under a left support foot."""
    out = []
    for d in aset.displacements:
        f = apply_displacement(node, d, spec)
        if not footstep_collides(f, obstacle, spec):
            out.append(f)
    return out


def heuristic(node: Footstep, target: Footstep, cfg: SearchConfig) -> float:
    """Steps needed if every step gave full translation or full rotation."""
    dp, dt = pose_error(node, target)
    return max(dp / cfg.d_max, dt / cfg.dtheta_max)


def _grid_key(f: Footstep, cfg: SearchConfig) -> tuple:
    return (
        f.foot,
        round(f.pose.x / cfg.grid_xy),
        round(f.pose.y / cfg.grid_xy),
        round(f.pose.theta / cfg.grid_theta),
    )


def _reconstruct(parents: dict, key: tuple, leaf: Footstep) -> tuple[Footstep, ...]:
    steps = [leaf]
    while True:
        prev = parents[key]
        if prev is None:
            break
        key, f = prev
        steps.append(f)
    steps.reverse()
    return tuple(steps)


def _astar(
    start: Footstep,
    target: Footstep,
    obstacle: Obstacle,
    cfg: SearchConfig,
    epsilon: float,
    tol: ToleranceConfig,
    node_budget: int,
    deadline: float | None,
) -> tuple[FootstepPlan | None, int, bool]:
    """Weighted A*. Returns (plan or None, nodes expanded, budget_exhausted)."""
    start_key = _grid_key(start, cfg)
    g_best = {start_key: 0}
    parents: dict[tuple, tuple | None] = {start_key: None}
    open_heap = [(epsilon * heuristic(start, target, cfg), 0, start_key, start)]
    closed: set[tuple] = set()
    expanded = 0
    tie = 0
    while open_heap:
        _, _, key, node = heapq.heappop(open_heap)
        if key in closed:
            continue
        closed.add(key)
        if reaches_target(node, target, tol):
            return FootstepPlan(_reconstruct(parents, key, node), True), expanded, False
        expanded += 1
        if expanded >= node_budget:
            return None, expanded, True
        if deadline is not None and expanded % 1024 == 0 and time.monotonic() > deadline:
            return None, expanded, True
        g_next = g_best[key] + 1
        for succ in successors(node, cfg.action_set, obstacle, cfg.robot):
            skey = _grid_key(succ, cfg)
            if skey in closed:
                continue
            old = g_best.get(skey)
            if old is not None and old <= g_next:
                continue
            g_best[skey] = g_next
            parents[skey] = (key, node)
            tie += 1
            f_val = g_next + epsilon * heuristic(succ, target, cfg)
            heapq.heappush(open_heap, (f_val, tie, skey, succ))
    return None, expanded, False


def astar_plan(
    start: Footstep,
    target: Footstep,
    obstacle: Obstacle,
    cfg: SearchConfig,
    epsilon: float,
    tol: ToleranceConfig,
) -> FootstepPlan | None:
    """Best-first search with f = g + epsilon * h; None when no plan is found
    within the node budget. At epsilon = 1 plans are optimal over the grid."""
    if epsilon < 1.0:
        raise ValueError("epsilon must be >= 1")
    plan, _, _ = _astar(start, target, obstacle, cfg, epsilon, tol, cfg.node_budget, None)
    return plan


@dataclass
class AraResult:
    plan: FootstepPlan | None
    epsilon_achieved: float | None
    expansions: int


def ara_star(
    start: Footstep,
    target: Footstep,
    obstacle: Obstacle,
    cfg: SearchConfig,
    tol: ToleranceConfig,
    *,
    max_nodes: int | None = None,
    max_seconds: float | None = None,
) -> AraResult:
    """Anytime search: restart weighted A* down the epsilon schedule, keeping
    the best plan found when the node or wall-clock budget runs out."""
    deadline = time.monotonic() + max_seconds if max_seconds is not None else None
    remaining = max_nodes
    best: FootstepPlan | None = None
    achieved: float | None = None
    total = 0
    for epsilon in cfg.epsilon_schedule:
        budget = cfg.node_budget if remaining is None else min(cfg.node_budget, remaining)
        if budget <= 0:
            break
        plan, expanded, exhausted = _astar(
            start, target, obstacle, cfg, epsilon, tol, budget, deadline
        )
        total += expanded
        if remaining is not None:
            remaining -= expanded
        if plan is not None:
            if best is None or plan.length < best.length:
                best = plan
            achieved = epsilon
        elif exhausted:
            break  # lower epsilon levels only search harder
        else:
            break  # open list emptied: the target is unreachable on this graph
        if deadline is not None and time.monotonic() > deadline:
            break
    return AraResult(best, achieved, total)


def bfs_oracle(
    start: Footstep,
    target: Footstep,
    obstacle: Obstacle,
    aset: ActionSet,
    tol: ToleranceConfig,
    depth_cap: int,
    *,
    spec: RobotSpec | None = None,
    grid_xy: float = DEFAULT_GRID_XY,
    grid_theta: float = DEFAULT_GRID_THETA,
) -> int | None:
    """Breadth-first optimum over the same grid-hashed graph; None past the cap.

    Intended for small action sets and shallow caps; the frontier grows fast.
    """
    from .geometry import default_robot_spec

    robot = spec if spec is not None else default_robot_spec()
    probe = SearchConfig(action_set=aset, robot=robot, grid_xy=grid_xy, grid_theta=grid_theta)
    frontier = [start]
    visited = {_grid_key(start, probe)}
    depth = 0
    while frontier and depth <= depth_cap:
        nxt = []
        for node in frontier:
            if reaches_target(node, target, tol):
                return depth
            for succ in successors(node, aset, obstacle, robot):
                skey = _grid_key(succ, probe)
                if skey not in visited:
                    visited.add(skey)
                    nxt.append(succ)
        frontier = nxt
        depth += 1
    return None


def step_lower_bound(
    start: Footstep,
    target: Footstep,
    spec: RobotSpec,
    tol: ToleranceConfig,
    *,
    d_max: float | None = None,
) -> int:
    """Cheap admissible bound on the footstep count between two footsteps."""
    reach = d_max if d_max is not None else max_step_distance(spec)
    dp, dt = pose_error(start, target)
    translate = max(0, math.ceil((dp - tol.tol_p) / reach))
    rotate = max(0, math.ceil((dt - tol.tol_theta) / spec.feasible.dtheta_max))
    parity = 0 if start.foot is target.foot else 1
    return max(translate, rotate, parity)
