import math
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from footplan.env import scenario_mix_factory
from footplan.geometry import Foot, Footstep, Pose2, default_robot_spec
from footplan.td3 import Td3Config, load_model, save_model, train

settings.register_profile(
    "suite", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("suite")

ARTIFACT_DIR = os.path.join(os.path.dirname(__file__), "..", "artifacts")


@pytest.fixture(scope="session")
def robot():
    return default_robot_spec()


def random_footstep(rng, span=2.0) -> Footstep:
    foot = Foot.RIGHT if rng.integers(2) == 0 else Foot.LEFT
    return Footstep(
        foot,
        Pose2(rng.uniform(-span, span), rng.uniform(-span, span), rng.uniform(-math.pi, math.pi)),
    )


@pytest.fixture(scope="session")
def mini_model(robot):
    """A small policy trained just long enough to reach targets reliably on a
    2x2 m no-obstacle arena. Cached on disk because several behavioral tests
    only need *a* competent model, not a fresh training run."""
    os.makedirs(ARTIFACT_DIR, exist_ok=True)
    cache = os.path.join(ARTIFACT_DIR, "test-mini-seed3.fsn1")
    if os.path.exists(cache):
        try:
            return load_model(cache)
        except Exception:
            pass
    factory = scenario_mix_factory(("NO",), spec=robot, area_half=1.0)
    cfg = Td3Config(total_steps=30_000, warmup_steps=2_000)
    model, _ = train(factory, cfg, seed=3, robot=robot, hidden_dims=(32, 32), eval_every=0)
    save_model(model, cache)
    return model
