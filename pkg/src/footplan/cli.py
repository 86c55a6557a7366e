"""Command-line interface: train, plan, forecast, bench, render.

Angles on the command line are radians by default; append ``deg`` for degrees
(e.g. ``--orient-jitter 30deg``). File formats are owned by the library modules
(scenario: env, model: neural/td3, plan: plan, action sets: search). The
``FSN_SEED`` environment variable supplies a default seed where ``--seed`` is
accepted but absent. All outputs are written via temp-and-rename.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import bench as bench_mod
from . import plan as plan_mod
from . import search as search_mod
from . import td3 as td3_mod
from .env import (
    SITUATIONS,
    Scenario,
    ScenarioFormatError,
    env_reset,
    parse_scenario,
    scenario_mix_factory,
)
from .geometry import Foot, Footstep, Pose2, default_robot_spec
from .ioutil import atomic_write_text
from .neural import ModelFormatError
from .plan import FootstepPlan, PlanFormatError, parse_plan

EXIT_OK = 0
EXIT_NOT_REACHED = 1
EXIT_ERROR = 2


class CliError(Exception):
    pass


def parse_angle(text: str) -> float:
    """Radians, or degrees with a 'deg' suffix."""
    t = text.strip()
    try:
        if t.endswith("deg"):
            return math.radians(float(t[:-3]))
        return float(t)
    except ValueError:
        raise CliError(f"malformed angle {text!r} (use radians, or e.g. '30deg')") from None


def _parse_hidden(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(t) for t in text.split(",") if t)
    except ValueError:
        raise CliError(f"malformed hidden dims {text!r} (expected e.g. '400,300')") from None
    if not dims or any(d < 1 for d in dims):
        raise CliError("hidden dims must be positive integers")
    return dims


def _default_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("FSN_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"FSN_SEED must be an integer, got {env!r}") from None
    return 0


def _read_text(path: str, what: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as e:
        raise CliError(f"cannot read {what} {path!r}: {e.strerror}") from None


def _load_model(path: str) -> td3_mod.TrainedModel:
    try:
        return td3_mod.load_model(path)
    except OSError as e:
        raise CliError(f"cannot read model file {path!r}: {e.strerror}") from None
    except ModelFormatError as e:
        raise CliError(f"{path}: {e}") from None


def _load_scenario(path: str) -> Scenario:
    try:
        return parse_scenario(_read_text(path, "scenario file"))
    except ScenarioFormatError as e:
        raise CliError(f"{path}: {e}") from None


def cmd_train(args) -> int:
    seed = _default_seed(args.seed)
    situations = tuple(s.strip().upper() for s in args.situations.split(",") if s.strip())
    for s in situations:
        if s not in SITUATIONS:
            raise CliError(f"unknown situation {s!r} in --situations")
    spec = default_robot_spec()
    try:
        cfg = td3_mod.Td3Config(
            gamma=args.gamma,
            total_steps=args.steps,
            batch_size=args.batch_size,
            lr_initial=args.lr,
            exploration_std_initial=args.expl_std,
            buffer_capacity=args.buffer,
            warmup_steps=args.warmup,
        )
    except ValueError as e:
        raise CliError(str(e)) from None
    factory = scenario_mix_factory(situations, spec=spec, area_half=args.area_half)

    def on_eval(row, model):
        print(
            f"step {row.step} success {row.eval_success_rate:.3f} "
            f"mean_steps {row.eval_mean_steps:.1f} loss {row.critic_loss:.5f}",
            flush=True,
        )
        if args.checkpoint:
            td3_mod.save_model(model, args.out)

    model, log = td3_mod.train(
        factory,
        cfg,
        seed,
        robot=spec,
        hidden_dims=_parse_hidden(args.hidden),
        eval_every=args.eval_every,
        eval_episodes=args.eval_episodes,
        eval_callback=on_eval,
    )
    td3_mod.save_model(model, args.out)
    if args.log:
        atomic_write_text(args.log, td3_mod.format_log_csv(log))
    print(f"model written to {args.out}")
    return EXIT_OK


def cmd_plan(args) -> int:
    model = _load_model(args.model)
    scenario = _load_scenario(args.scenario)
    try:
        world = env_reset(scenario, model.robot)
    except ValueError as e:
        raise CliError(str(e)) from None
    if args.horizon is not None:
        footstep_plan = plan_mod.rollout(model, world, args.horizon)
    else:
        footstep_plan = plan_mod.rollout_to_target(model, world, cap=args.cap)
    text = plan_mod.format_plan(footstep_plan)
    sys.stdout.write(text)
    if args.out:
        atomic_write_text(args.out, text)
    if args.full and not footstep_plan.reached:
        return EXIT_NOT_REACHED
    return EXIT_OK


def _parse_targets(text: str, path: str) -> list[Footstep]:
    targets = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != 4 or tokens[0] not in ("left", "right"):
            raise CliError(f"{path}: line {lineno}: expected <left|right> <x> <y> <theta>")
        try:
            x, y, theta = (float(t) for t in tokens[1:])
        except ValueError:
            raise CliError(f"{path}: line {lineno}: malformed number") from None
        targets.append(Footstep(Foot.LEFT if tokens[0] == "left" else Foot.RIGHT, Pose2(x, y, theta)))
    if not targets:
        raise CliError(f"{path}: no targets found")
    return targets


def cmd_forecast(args) -> int:
    model = _load_model(args.model)
    scenario = _load_scenario(args.scenario)
    targets = _parse_targets(_read_text(args.targets, "targets file"), args.targets)
    index, values = plan_mod.select_target(
        model,
        scenario.start,
        scenario.obstacle,
        targets,
        critic=args.critic,
        raw=args.raw_q,
        area_half=scenario.area_half,
    )
    label = "raw_neg_q" if args.raw_q else "forecast"
    for i, v in enumerate(values):
        print(f"candidate {i} {label} {v:.6f}")
    print(f"selected {index}")
    return EXIT_OK


def cmd_bench(args) -> int:
    seed = _default_seed(args.seed)
    if args.situation == "NO" and args.rho != 0.0:
        raise CliError("situation NO forces --rho 0")
    if args.situation != "NO" and args.rho <= 0.0:
        raise CliError(f"situation {args.situation} needs --rho > 0")
    model = _load_model(args.model)
    if args.mode == "plan":
        cfgs = []
        for name in (s.strip() for s in args.sets.split(",") if s.strip()):
            aset = search_mod.builtin_action_set(name)
            cfgs.append(
                search_mod.make_search_config(
                    aset,
                    model.robot,
                    node_budget=args.level_budget,
                    grid_xy=args.grid_xy,
                    grid_theta=parse_angle(args.grid_theta),
                )
            )
        stats, csv_text = bench_mod.run_planning_benchmark(
            model,
            cfgs,
            args.situation,
            args.rho,
            args.trials,
            seed,
            area_half=args.area_half,
            rollout_cap=args.rollout_cap,
            timing=args.timing,
            jobs=args.jobs,
            search_max_nodes=args.node_budget,
            search_max_seconds=args.time_budget,
        )
    else:
        stats, csv_text = bench_mod.run_forecast_benchmark(
            model,
            args.situation,
            args.rho,
            args.trials,
            args.n_alt,
            seed,
            area_half=args.area_half,
            rollout_cap=args.rollout_cap,
            disc_radius=args.disc_radius,
            orient_jitter=parse_angle(args.orient_jitter),
            critic=args.critic,
        )
    if args.csv:
        atomic_write_text(args.csv, csv_text)
    print(bench_mod.format_summary(stats))
    return EXIT_OK


# --- SVG rendering -----------------------------------------------------------

_FOOT_FILL = {Foot.LEFT: "#c0504d", Foot.RIGHT: "#4f81bd"}


def _svg_foot_rect(
    f: Footstep, scale: float, margin: float, area_half: float, size: float, spec, style: str
) -> str:
    px = margin + (f.pose.x + area_half) * scale
    py = margin + (area_half - f.pose.y) * scale
    w = spec.foot_length * scale
    h = spec.foot_width * scale
    deg = -math.degrees(f.pose.theta)
    return (
        f'<rect x="{-w / 2:.2f}" y="{-h / 2:.2f}" width="{w:.2f}" height="{h:.2f}" '
        f'transform="translate({px:.2f},{py:.2f}) rotate({deg:.2f})" {style}/>'
    )


def render_svg(footstep_plan: FootstepPlan, scenario: Scenario, size: int = 640) -> tuple[str, int]:
    """Standalone SVG of the arena, obstacle, target, and plan footsteps.

    Returns (svg text, count of footsteps outside the arena square).
    """
    spec = default_robot_spec()
    margin = 20.0
    ah = scenario.area_half
    scale = (size - 2 * margin) / (2 * ah)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="#ffffff"/>',
        f'<rect x="{margin:.2f}" y="{margin:.2f}" width="{size - 2 * margin:.2f}" '
        f'height="{size - 2 * margin:.2f}" fill="none" stroke="#222222" stroke-width="1.5"/>',
    ]
    o = scenario.obstacle
    if o.rho > 0:
        ox = margin + (o.x + ah) * scale
        oy = margin + (ah - o.y) * scale
        parts.append(
            f'<circle cx="{ox:.2f}" cy="{oy:.2f}" r="{o.rho * scale:.2f}" '
            f'fill="#bbbbbb" stroke="#555555" stroke-width="1"/>'
        )
    parts.append(
        _svg_foot_rect(
            scenario.target,
            scale,
            margin,
            ah,
            size,
            spec,
            'fill="none" stroke="#111111" stroke-width="2" stroke-dasharray="4,3"',
        )
    )
    outside = 0
    for f in footstep_plan.steps:
        if abs(f.pose.x) > ah or abs(f.pose.y) > ah:
            outside += 1
        fill = _FOOT_FILL[f.foot]
        parts.append(
            _svg_foot_rect(
                f,
                scale,
                margin,
                ah,
                size,
                spec,
                f'fill="{fill}" fill-opacity="0.65" stroke="#333333" stroke-width="0.8"',
            )
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n", outside


def cmd_render(args) -> int:
    scenario = _load_scenario(args.scenario)
    try:
        footstep_plan = parse_plan(_read_text(args.plan, "plan file"))
    except PlanFormatError as e:
        raise CliError(f"{args.plan}: {e}") from None
    svg, outside = render_svg(footstep_plan, scenario, size=args.size)
    if outside:
        print(f"warning: {outside} footstep(s) outside the arena", file=sys.stderr)
    atomic_write_text(args.out, svg)
    print(f"svg written to {args.out}")
    return EXIT_OK


# --- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="footplan",
        description="Footstep planning: learned continuous planner, step forecasting, "
        "discrete anytime-search baseline, and benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write it as an FSN1 file")
    p.add_argument("--steps", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--gamma", type=float, default=0.98)
    p.add_argument("--out", required=True)
    p.add_argument("--situations", default="NO,AO,FO")
    p.add_argument("--log", default=None, help="write the eval log CSV here")
    p.add_argument("--hidden", default="400,300")
    p.add_argument("--area-half", type=float, default=2.0)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--expl-std", type=float, default=0.1)
    p.add_argument("--buffer", type=int, default=1_000_000)
    p.add_argument("--warmup", type=int, default=10_000)
    p.add_argument("--eval-every", type=int, default=50_000)
    p.add_argument("--eval-episodes", type=int, default=100)
    p.add_argument("--checkpoint", action="store_true", help="rewrite --out at each eval")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("plan", help="roll the policy out on a scenario")
    p.add_argument("--model", required=True)
    p.add_argument("--scenario", required=True)
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--horizon", type=int, default=None, help="fixed roll-out horizon")
    mode.add_argument("--full", action="store_true", help="roll out until the target is reached")
    p.add_argument("--cap", type=int, default=200, help="step cap for --full")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("forecast", help="forecast step counts for candidate targets")
    p.add_argument("--model", required=True)
    p.add_argument("--scenario", required=True, help="provides the start footstep and obstacle")
    p.add_argument("--targets", required=True, help="file with one footstep per line")
    p.add_argument("--raw-q", action="store_true", help="print -Q instead of the step inversion")
    p.add_argument("--critic", choices=("min", "critic1"), default="min")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("bench", help="run the planning or forecasting benchmark")
    p.add_argument("--mode", choices=("plan", "forecast"), required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--situation", choices=SITUATIONS, required=True)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--csv", default=None)
    p.add_argument("--area-half", type=float, default=2.0)
    p.add_argument("--rollout-cap", type=int, default=200)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--timing", action="store_true", help="measure wall time (CSV no longer byte-reproducible)")
    p.add_argument("--sets", default="A,B", help="built-in action sets for the search baseline")
    p.add_argument("--node-budget", dest="node_budget", type=int, default=100_000,
                   help="total search expansions per instance")
    p.add_argument("--level-budget", type=int, default=2_000_000,
                   help="expansions allowed per epsilon level")
    p.add_argument("--time-budget", type=float, default=None,
                   help="wall-clock seconds per search instance")
    p.add_argument("--grid-xy", type=float, default=search_mod.DEFAULT_GRID_XY)
    p.add_argument("--grid-theta", default="10deg")
    p.add_argument("--n-alt", type=int, default=3)
    p.add_argument("--disc-radius", type=float, default=0.4)
    p.add_argument("--orient-jitter", default="30deg")
    p.add_argument("--critic", choices=("min", "critic1"), default="min")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("render", help="draw a plan + scenario as SVG")
    p.add_argument("--plan", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=640)
    p.set_defaults(func=cmd_render)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (RuntimeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
