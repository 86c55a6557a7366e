"""Benchmark harness: planner comparison and forecast-accuracy experiments.

Both experiments sample their scenario stream deterministically from one seed,
write one CSV row per instance (or per candidate), and aggregate summary
statistics that can be re-derived from the rows. Timing measurements are off by
default so repeated runs produce byte-identical CSVs.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .env import Scenario, WorldState, env_reset, format_scenario, sample_scenario
from .geometry import Footstep, Obstacle, Pose2, footstep_collides
from .plan import rollout_to_target, select_target
from .search import SearchConfig, ara_star
from .td3 import TrainedModel

POLICY_PLANNER = "policy"


@dataclass
class PlannerSummary:
    mean_steps: float
    sd_steps: float
    pct_reached: float
    n_reached: int


@dataclass
class Comparison:
    """Policy planner versus one search planner. Unreached instances count
    against the planner that failed; the step reduction compares means over
    instances both planners reached."""

    pct_equal_or_better: float
    pct_step_reduction: float


@dataclass
class PlanStats:
    trials: int
    scenario_hash: str
    planners: dict[str, PlannerSummary]
    comparisons: dict[str, Comparison]


@dataclass
class ForecastStats:
    trials: int
    trials_used: int
    candidates_dropped: int
    scenario_hash: str
    mean_relative_error_pct: float
    best_mean_steps: float
    best_sd_steps: float
    worst_mean_steps: float
    worst_sd_steps: float
    erroneous_choice_pct: float
    extra_steps_pct: float
    improvement_best_vs_worst_pct: float


def _mean_sd(values: list[int] | list[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std())


def _scenario_stream(
    situation: str, rho: float, trials: int, seed: int, model: TrainedModel, area_half: float
) -> tuple[list[Scenario], str]:
    """The per-trial scenarios plus a digest proving every planner saw the
    same stream."""
    base = np.random.default_rng(seed)
    seeds = [int(s) for s in base.integers(0, 2**63 - 1, size=trials)]
    scenarios = [
        sample_scenario(situation, rho, s, model.robot, area_half=area_half) for s in seeds
    ]
    digest = hashlib.sha256()
    for sc in scenarios:
        digest.update(format_scenario(sc).encode())
    return scenarios, digest.hexdigest()[:16]


def _run_plan_instance(args) -> list[tuple]:
    """One trial: roll out the policy and every search config on one scenario."""
    (trial, scenario, model, search_cfgs, rollout_cap, situation, rho, timing,
     max_nodes, max_seconds) = args
    rows = []
    t0 = time.perf_counter_ns() if timing else 0
    plan = rollout_to_target(model, env_reset(scenario), cap=rollout_cap)
    wall = (time.perf_counter_ns() - t0) // 1000 if timing else 0
    rows.append((trial, situation, rho, POLICY_PLANNER, plan.reached, plan.length, wall))
    for cfg in search_cfgs:
        name = f"ara_{cfg.action_set.name}"
        t0 = time.perf_counter_ns() if timing else 0
        result = ara_star(
            scenario.start, scenario.target, scenario.obstacle, cfg, model.tolerance,
            max_nodes=max_nodes, max_seconds=max_seconds,
        )
        wall = (time.perf_counter_ns() - t0) // 1000 if timing else 0
        reached = result.plan is not None
        steps = result.plan.length if reached else -1
        rows.append((trial, situation, rho, name, reached, steps, wall))
    return rows


def run_planning_benchmark(
    model: TrainedModel,
    search_cfgs: list[SearchConfig],
    situation: str,
    rho: float,
    trials: int,
    seed: int,
    *,
    area_half: float = 2.0,
    rollout_cap: int = 200,
    timing: bool = False,
    jobs: int = 1,
    search_max_nodes: int | None = 100_000,
    search_max_seconds: float | None = None,
) -> tuple[PlanStats, str]:
    """Compare the policy planner against the search configs on one scenario
    family. Returns (stats, csv_text); planner failures become not-reached rows.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    scenarios, stream_hash = _scenario_stream(situation, rho, trials, seed, model, area_half)
    work = [
        (i, sc, model, search_cfgs, rollout_cap, situation, rho, timing,
         search_max_nodes, search_max_seconds)
        for i, sc in enumerate(scenarios)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_trial = list(pool.map(_run_plan_instance, work))
    else:
        per_trial = [_run_plan_instance(w) for w in work]

    lines = ["trial,situation,rho,planner,reached,steps,wall_us"]
    results: dict[str, list[tuple[bool, int]]] = {}
    for rows in per_trial:
        for trial, sit, r, name, reached, steps, wall in rows:
            results.setdefault(name, []).append((reached, steps))
            lines.append(f"{trial},{sit},{r!r},{name},{int(reached)},{steps},{wall}")
    csv_text = "\n".join(lines) + "\n"

    planners = {}
    for name, outcomes in results.items():
        reached_steps = [s for ok, s in outcomes if ok]
        mean, sd = _mean_sd(reached_steps)
        planners[name] = PlannerSummary(
            mean_steps=mean,
            sd_steps=sd,
            pct_reached=100.0 * len(reached_steps) / trials,
            n_reached=len(reached_steps),
        )
    comparisons = {}
    policy = results[POLICY_PLANNER]
    for name, outcomes in results.items():
        if name == POLICY_PLANNER:
            continue
        eq_or_better = 0
        both_a, both_b = [], []
        for (a_ok, a_steps), (b_ok, b_steps) in zip(policy, outcomes):
            if a_ok and (not b_ok or a_steps <= b_steps):
                eq_or_better += 1
            if a_ok and b_ok:
                both_a.append(a_steps)
                both_b.append(b_steps)
        mean_a, _ = _mean_sd(both_a)
        mean_b, _ = _mean_sd(both_b)
        reduction = 100.0 * (mean_b - mean_a) / mean_b if both_b and mean_b > 0 else math.nan
        comparisons[name] = Comparison(
            pct_equal_or_better=100.0 * eq_or_better / trials,
            pct_step_reduction=reduction,
        )
    stats = PlanStats(trials, stream_hash, planners, comparisons)
    return stats, csv_text


def _sample_candidates(
    rng: np.random.Generator,
    anchor: Footstep,
    obstacle: Obstacle,
    model: TrainedModel,
    n_alt: int,
    disc_radius: float,
    orient_jitter: float,
) -> list[Footstep]:
    candidates = []
    for _ in range(n_alt):
        for _ in range(10_000):
            r = disc_radius * math.sqrt(rng.uniform())
            ang = rng.uniform(-math.pi, math.pi)
            cand = Footstep(
                anchor.foot,
                Pose2(
                    anchor.pose.x + r * math.cos(ang),
                    anchor.pose.y + r * math.sin(ang),
                    anchor.pose.theta + rng.uniform(-orient_jitter, orient_jitter),
                ),
            )
            if not footstep_collides(cand, obstacle, model.robot):
                candidates.append(cand)
                break
        else:
            raise RuntimeError("candidate sampling failed: obstacle covers the target disc")
    return candidates


def run_forecast_benchmark(
    model: TrainedModel,
    situation: str,
    rho: float,
    trials: int,
    n_alt: int,
    seed: int,
    *,
    area_half: float = 2.0,
    rollout_cap: int = 200,
    disc_radius: float = 0.4,
    orient_jitter: float = math.radians(30.0),
    critic: str = "min",
) -> tuple[ForecastStats, str]:
    """Forecast-vs-rollout comparison over sets of near-equivalent targets.

    Each trial draws one scenario and n_alt candidate targets near the
    scenario's target; candidates whose roll-out never reaches are dropped.
    A trial needs two surviving candidates to count.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if n_alt < 2:
        raise ValueError("n_alt must be >= 2")
    scenarios, stream_hash = _scenario_stream(situation, rho, trials, seed, model, area_half)
    cand_rng = np.random.default_rng(np.random.default_rng(seed).integers(2**63 - 1) ^ 0xC0FFEE)

    lines = ["trial,candidate,forecast,rollout,chosen,best"]
    rel_errors: list[float] = []
    best_lengths: list[int] = []
    worst_lengths: list[int] = []
    erroneous = 0
    extra_fracs: list[float] = []
    used = 0
    dropped = 0
    for trial, sc in enumerate(scenarios):
        candidates = _sample_candidates(
            cand_rng, sc.target, sc.obstacle, model, n_alt, disc_radius, orient_jitter
        )
        _, forecasts = select_target(
            model, sc.start, sc.obstacle, candidates, critic=critic, area_half=sc.area_half
        )
        entries: list[tuple[float, int | None]] = []
        for cand, forecast in zip(candidates, forecasts):
            world = WorldState(sc.start, Scenario(sc.start, cand, sc.obstacle, sc.area_half))
            plan = rollout_to_target(model, world, cap=rollout_cap)
            entries.append((forecast, plan.length if plan.reached else None))
        kept = [(i, f, n) for i, (f, n) in enumerate(entries) if n is not None]
        dropped += len(entries) - len(kept)
        if len(kept) >= 2:
            used += 1
            chosen_idx = min(kept, key=lambda e: (e[1], e[0]))[0]
            best_idx = min(kept, key=lambda e: (e[2], e[0]))[0]
            lengths = {i: n for i, _, n in kept}
            best_lengths.append(min(lengths.values()))
            worst_lengths.append(max(lengths.values()))
            for _, f, n in kept:
                rel_errors.append(abs(f - n) / max(n, 1))
            if lengths[chosen_idx] != lengths[best_idx]:
                erroneous += 1
            extra_fracs.append(
                (lengths[chosen_idx] - lengths[best_idx]) / max(lengths[best_idx], 1)
            )
        else:
            chosen_idx = best_idx = -1
        for i, (f, n) in enumerate(entries):
            lines.append(
                f"{trial},{i},{f!r},{-1 if n is None else n},"
                f"{int(i == chosen_idx)},{int(i == best_idx)}"
            )
    csv_text = "\n".join(lines) + "\n"

    best_mean, best_sd = _mean_sd(best_lengths)
    worst_mean, worst_sd = _mean_sd(worst_lengths)
    stats = ForecastStats(
        trials=trials,
        trials_used=used,
        candidates_dropped=dropped,
        scenario_hash=stream_hash,
        mean_relative_error_pct=100.0 * float(np.mean(rel_errors)) if rel_errors else math.nan,
        best_mean_steps=best_mean,
        best_sd_steps=best_sd,
        worst_mean_steps=worst_mean,
        worst_sd_steps=worst_sd,
        erroneous_choice_pct=100.0 * erroneous / used if used else math.nan,
        extra_steps_pct=100.0 * float(np.mean(extra_fracs)) if extra_fracs else math.nan,
        improvement_best_vs_worst_pct=(
            100.0 * (worst_mean - best_mean) / worst_mean if used and worst_mean > 0 else math.nan
        ),
    )
    return stats, csv_text


def format_summary(stats: PlanStats | ForecastStats) -> str:
    """JSON rendering of the aggregate statistics (deterministic key order)."""
    return json.dumps(asdict(stats), indent=2, sort_keys=True, allow_nan=True)
