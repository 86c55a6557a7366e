#!/usr/bin/env python3
"""Desk-scale training run: 1M steps, mixed NO/AO/FO scenarios, 4x4 m arena,
400/300 hidden layers. Writes the model (checkpointed at every eval) and the
eval log CSV. Expect several hours on one CPU core.

Usage: python scripts/train_desk.py [--out artifacts/desk.fsn1] [--seed 1]
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


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="artifacts/desk.fsn1")
    ap.add_argument("--log", default="artifacts/desk_log.csv")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--steps", type=int, default=1_000_000)
    args = ap.parse_args()
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)

    spec = default_robot_spec()
    factory = scenario_mix_factory(("NO", "AO", "FO"), spec=spec, area_half=2.0)
    cfg = Td3Config(total_steps=args.steps)
    t0 = time.time()
    rows = []

    def on_eval(row, model):
        rows.append(row)
        print(
            f"[{time.time() - t0:8.0f}s] step {row.step:8d} "
            f"success {row.eval_success_rate:.3f} mean_steps {row.eval_mean_steps:6.1f} "
            f"loss {row.critic_loss:9.5f} J {row.actor_j:8.2f} lr {row.lr:.2e}",
            flush=True,
        )
        save_model(model, args.out)
        atomic_write_text(args.log, format_log_csv(rows))

    model, log = train(
        factory, cfg, args.seed, robot=spec, hidden_dims=(400, 300), eval_callback=on_eval
    )
    save_model(model, args.out)
    atomic_write_text(args.log, format_log_csv(log))
    print(f"done in {time.time() - t0:.0f}s -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
