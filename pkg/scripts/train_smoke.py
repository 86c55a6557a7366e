#!/usr/bin/env python3
"""Smoke-scale training run: 200k steps, NO-only scenarios on a 2x2 m arena,
64/64 hidden layers. Finishes in well under an hour on one CPU core; the
acceptance suite trains the same configuration.

Usage: python scripts/train_smoke.py [--out artifacts/smoke.fsn1] [--seed 3]
"""

import argparse
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from footplan.env import scenario_mix_factory
from footplan.geometry import default_robot_spec
from footplan.ioutil import atomic_write_text
from footplan.td3 import Td3Config, format_log_csv, save_model, train

SMOKE_STEPS = 200_000
SMOKE_AREA_HALF = 1.0
SMOKE_HIDDEN = (64, 64)
SMOKE_SEED = 3


def run_smoke(seed: int = SMOKE_SEED, steps: int = SMOKE_STEPS, eval_callback=None):
    """The smoke configuration, importable by the tests."""
    spec = default_robot_spec()
    factory = scenario_mix_factory(("NO",), spec=spec, area_half=SMOKE_AREA_HALF)
    cfg = Td3Config(total_steps=steps)
    return train(
        factory,
        cfg,
        seed,
        robot=spec,
        hidden_dims=SMOKE_HIDDEN,
        eval_every=25_000,
        eval_episodes=50,
        eval_callback=eval_callback,
    )


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="artifacts/smoke.fsn1")
    ap.add_argument("--log", default="artifacts/smoke_log.csv")
    ap.add_argument("--seed", type=int, default=SMOKE_SEED)
    args = ap.parse_args()
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)

    t0 = time.time()

    def on_eval(row, model):
        print(
            f"[{time.time() - t0:6.0f}s] step {row.step:7d} "
            f"success {row.eval_success_rate:.3f} mean_steps {row.eval_mean_steps:6.1f}",
            flush=True,
        )

    model, log = run_smoke(seed=args.seed, eval_callback=on_eval)
    save_model(model, args.out)
    atomic_write_text(args.log, format_log_csv(log))
    print(f"done in {time.time() - t0:.0f}s -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
