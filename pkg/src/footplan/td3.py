"""Twin-delayed deterministic policy-gradient training for the footstep task.

Networks operate on normalized actions in [-1, 1]^3; the affine map to the
robot's displacement box and the ellipsoid clip happen at the environment
boundary. Twin critics with clipped double-Q targets, delayed policy updates,
polyak-averaged target networks, linearly annealed learning rate and
exploration noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import (
    RewardConfig,
    Scenario,
    ToleranceConfig,
    Transition,
    env_reset,
    env_step,
    observe,
)
from .geometry import Displacement, FeasibleSet, RobotSpec, default_robot_spec
from .ioutil import atomic_write_text
from .neural import (
    MlpParams,
    ModelFormatError,
    OptimizerState,
    adam_init,
    adam_step,
    clone_params,
    format_fsn1,
    mlp_backward,
    mlp_forward,
    mlp_init,
    parse_fsn1,
)

OBS_DIM = 8
ACT_DIM = 3


@dataclass
class Td3Config:
    gamma: float = 0.98
    total_steps: int = 1_000_000
    batch_size: int = 256
    lr_initial: float = 1e-3
    exploration_std_initial: float = 0.1
    target_noise_std: float = 0.2
    target_noise_clip: float = 0.5
    policy_delay: int = 2
    polyak_tau: float = 0.005
    buffer_capacity: int = 1_000_000
    warmup_steps: int = 10_000

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.batch_size > self.buffer_capacity:
            raise ValueError("batch_size cannot exceed buffer_capacity")
        if self.policy_delay < 1:
            raise ValueError("policy_delay must be >= 1")


@dataclass
class TrainedModel:
    """Actor, twin critics, and the inference-time context they were trained for."""

    actor: MlpParams
    critic1: MlpParams
    critic2: MlpParams
    gamma: float
    robot: RobotSpec
    reward_cfg: RewardConfig
    tolerance: ToleranceConfig

    def __post_init__(self):
        if self.actor.layer_dims[0] != OBS_DIM or self.actor.layer_dims[-1] != ACT_DIM:
            raise ValueError("actor must map 8 observations to 3 actions")
        for c in (self.critic1, self.critic2):
            if c.layer_dims[0] != OBS_DIM + ACT_DIM or c.layer_dims[-1] != 1:
                raise ValueError("critics must map (8 obs + 3 act) to 1 value")


def action_center_scale(fs: FeasibleSet) -> tuple[np.ndarray, np.ndarray]:
    """Affine map parameters between [-1,1]^3 and the displacement box."""
    center = np.array([(fs.dx_fwd_max - fs.dx_bwd_max) / 2.0, 0.0, 0.0])
    scale = np.array([(fs.dx_fwd_max + fs.dx_bwd_max) / 2.0, fs.dy_max, fs.dtheta_max])
    return center, scale


def normalized_to_displacement(u: np.ndarray, fs: FeasibleSet) -> Displacement:
    center, scale = action_center_scale(fs)
    v = center + scale * np.asarray(u)
    return Displacement(float(v[0]), float(v[1]), float(v[2]))


def displacement_to_normalized(d: Displacement, fs: FeasibleSet) -> np.ndarray:
    center, scale = action_center_scale(fs)
    return (np.array([d.dx, d.dy, d.dtheta]) - center) / scale


def linear_anneal(initial: float, t: int, total: int) -> float:
    """Linear schedule from `initial` at t=0 to exactly 0 at t=total."""
    if total <= 0:
        return initial
    return initial * max(0.0, 1.0 - t / total)


class ReplayBuffer:
    """Ring store of transitions on preallocated arrays; uniform sampling."""

    def __init__(self, capacity: int, dtype=np.float32):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.size = 0
        self.cursor = 0
        self.obs = np.zeros((capacity, OBS_DIM), dtype)
        self.action = np.zeros((capacity, ACT_DIM), dtype)  # executed displacement
        self.reward = np.zeros(capacity, dtype)
        self.next_obs = np.zeros((capacity, OBS_DIM), dtype)
        self.terminated = np.zeros(capacity, bool)
        self.truncated = np.zeros(capacity, bool)

    def push(self, t: Transition) -> None:
        i = self.cursor
        self.obs[i] = t.obs
        self.action[i] = (t.action.dx, t.action.dy, t.action.dtheta)
        self.reward[i] = t.reward
        self.next_obs[i] = t.next_obs
        self.terminated[i] = t.terminated
        self.truncated[i] = t.truncated
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def get(self, i: int) -> Transition:
        if not 0 <= i < self.size:
            raise IndexError(i)
        return Transition(
            self.obs[i].copy(),
            Displacement(*(float(v) for v in self.action[i])),
            float(self.reward[i]),
            self.next_obs[i].copy(),
            bool(self.terminated[i]),
            bool(self.truncated[i]),
        )

    def sample_indices(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, self.size, size=n)


def buffer_push(b: ReplayBuffer, t: Transition) -> None:
    b.push(t)


@dataclass
class Batch:
    obs: np.ndarray  # (B, 8)
    action_norm: np.ndarray  # (B, 3), normalized units
    reward: np.ndarray  # (B,)
    next_obs: np.ndarray  # (B, 8)
    terminated: np.ndarray  # (B,) bool


def sample_batch(
    b: ReplayBuffer, rng: np.random.Generator, n: int, fs: FeasibleSet
) -> Batch:
    idx = b.sample_indices(rng, n)
    center, scale = action_center_scale(fs)
    dtype = b.action.dtype
    u = (b.action[idx] - center.astype(dtype)) / scale.astype(dtype)
    return Batch(b.obs[idx], u.astype(dtype), b.reward[idx], b.next_obs[idx], b.terminated[idx])


@dataclass
class TargetNets:
    actor: MlpParams
    critic1: MlpParams
    critic2: MlpParams


def critic_target(
    batch: Batch, targets: TargetNets, cfg: Td3Config, rng: np.random.Generator
) -> np.ndarray:
    """Clipped double-Q regression targets.

    Terminated transitions regress to the bare reward (the subsequent return is
    zero by construction); truncated ones bootstrap normally.
    """
    dtype = batch.next_obs.dtype
    a_next, _ = mlp_forward(targets.actor, batch.next_obs)
    noise = rng.standard_normal(a_next.shape, dtype=np.float32).astype(dtype)
    noise *= cfg.target_noise_std
    np.clip(noise, -cfg.target_noise_clip, cfg.target_noise_clip, out=noise)
    a_next = np.clip(a_next + noise, -1.0, 1.0)
    x = np.concatenate([batch.next_obs, a_next.astype(dtype)], axis=1)
    q1, _ = mlp_forward(targets.critic1, x)
    q2, _ = mlp_forward(targets.critic2, x)
    q_min = np.minimum(q1, q2)[:, 0]
    cont = (~batch.terminated).astype(dtype)
    return batch.reward + cfg.gamma * q_min * cont


def update_critics(
    model: TrainedModel,
    targets: TargetNets,
    batch: Batch,
    opt1: OptimizerState,
    opt2: OptimizerState,
    cfg: Td3Config,
    rng: np.random.Generator,
    lr: float,
) -> float:
    """One squared-error regression step on both critics; returns the mean loss."""
    y = critic_target(batch, targets, cfg, rng)
    x = np.concatenate([batch.obs, batch.action_norm], axis=1)
    n = x.shape[0]
    total = 0.0
    for critic, opt in ((model.critic1, opt1), (model.critic2, opt2)):
        q, cache = mlp_forward(critic, x)
        err = q[:, 0] - y
        total += float(np.mean(err * err))
        grad_out = (2.0 / n) * err[:, None]
        grads, _ = mlp_backward(critic, cache, grad_out)
        adam_step(opt, critic, grads, lr)
    return total / 2.0


def update_actor(
    model: TrainedModel,
    batch: Batch,
    opt: OptimizerState,
    lr: float,
) -> float:
    """One ascent step on mean critic1(s, actor(s)); returns the mean Q estimate."""
    u, cache_a = mlp_forward(model.actor, batch.obs)
    dtype = batch.obs.dtype
    x = np.concatenate([batch.obs, u.astype(dtype)], axis=1)
    q, cache_c = mlp_forward(model.critic1, x)
    n = x.shape[0]
    grad_q = np.full((n, 1), -1.0 / n, dtype=q.dtype)
    _, grad_x = mlp_backward(model.critic1, cache_c, grad_q, need_param_grads=False)
    grads_a, _ = mlp_backward(model.actor, cache_a, grad_x[:, OBS_DIM:])
    adam_step(opt, model.actor, grads_a, lr)
    return float(np.mean(q))


def polyak_update(target: MlpParams, online: MlpParams, tau: float) -> None:
    """target <- (1 - tau) * target + tau * online, element-wise, in place."""
    for t_arr, o_arr in zip(target.weights + target.biases, online.weights + online.biases):
        t_arr *= 1.0 - tau
        t_arr += tau * o_arr


def init_model(
    seed: int,
    *,
    hidden_dims: tuple[int, ...] = (400, 300),
    gamma: float = 0.98,
    robot: RobotSpec | None = None,
    reward_cfg: RewardConfig | None = None,
    tolerance: ToleranceConfig | None = None,
    dtype=np.float64,
) -> TrainedModel:
    robot = robot if robot is not None else default_robot_spec()
    seeds = np.random.default_rng(seed).integers(0, 2**63 - 1, size=3)
    actor = mlp_init((OBS_DIM, *hidden_dims, ACT_DIM), int(seeds[0]), dtype=dtype)
    critic1 = mlp_init(
        (OBS_DIM + ACT_DIM, *hidden_dims, 1), int(seeds[1]), output_activation="identity", dtype=dtype
    )
    critic2 = mlp_init(
        (OBS_DIM + ACT_DIM, *hidden_dims, 1), int(seeds[2]), output_activation="identity", dtype=dtype
    )
    return TrainedModel(
        actor,
        critic1,
        critic2,
        gamma,
        robot,
        reward_cfg if reward_cfg is not None else RewardConfig(),
        tolerance if tolerance is not None else ToleranceConfig(),
    )


@dataclass
class LogRow:
    step: int
    eval_success_rate: float
    eval_mean_steps: float
    critic_loss: float
    actor_j: float
    lr: float
    expl_std: float


LOG_COLUMNS = ("step", "eval_success_rate", "eval_mean_steps", "critic_loss", "actor_J", "lr", "expl_std")


def format_log_csv(rows: list[LogRow]) -> str:
    lines = [",".join(LOG_COLUMNS)]
    for r in rows:
        lines.append(
            f"{r.step},{r.eval_success_rate!r},{r.eval_mean_steps!r},"
            f"{r.critic_loss!r},{r.actor_j!r},{r.lr!r},{r.expl_std!r}"
        )
    return "\n".join(lines) + "\n"


def _greedy_episode(
    model: TrainedModel, scenario: Scenario
) -> tuple[bool, int]:
    """Noise-free rollout; returns (reached, steps taken)."""
    fs = model.robot.feasible
    w = env_reset(scenario)
    obs = observe(w)
    while True:
        u, _ = mlp_forward(model.actor, obs)
        w, tr = env_step(
            w, normalized_to_displacement(u, fs), model.reward_cfg, model.tolerance, model.robot
        )
        if tr.terminated:
            return True, w.step_count
        if tr.truncated:
            return False, w.step_count
        obs = tr.next_obs


def evaluate(model: TrainedModel, scenarios: list[Scenario]) -> tuple[float, float]:
    """(success rate, mean episode length) over noise-free episodes."""
    successes = 0
    steps_total = 0
    for sc in scenarios:
        reached, steps = _greedy_episode(model, sc)
        successes += int(reached)
        steps_total += steps
    n = max(len(scenarios), 1)
    return successes / n, steps_total / n


def train(
    scenario_factory,
    cfg: Td3Config,
    seed: int,
    *,
    robot: RobotSpec | None = None,
    reward_cfg: RewardConfig | None = None,
    tolerance: ToleranceConfig | None = None,
    hidden_dims: tuple[int, ...] = (400, 300),
    dtype=np.float32,
    eval_every: int = 50_000,
    eval_episodes: int = 100,
    eval_callback=None,
) -> tuple[TrainedModel, list[LogRow]]:
    """Run the full training loop and return the trained model plus eval log.

    scenario_factory(rng) supplies a fresh Scenario per episode. All randomness
    derives from `seed`; identical seed and config reproduce the run exactly.
    """
    robot = robot if robot is not None else default_robot_spec()
    reward_cfg = reward_cfg if reward_cfg is not None else RewardConfig()
    tolerance = tolerance if tolerance is not None else ToleranceConfig()
    fs = robot.feasible

    root = np.random.default_rng(seed)
    model_seed, loop_seed, eval_seed = (int(s) for s in root.integers(0, 2**63 - 1, size=3))
    model = init_model(
        model_seed,
        hidden_dims=hidden_dims,
        gamma=cfg.gamma,
        robot=robot,
        reward_cfg=reward_cfg,
        tolerance=tolerance,
        dtype=dtype,
    )
    log: list[LogRow] = []
    if cfg.total_steps <= 0:
        return model, log

    targets = TargetNets(
        clone_params(model.actor), clone_params(model.critic1), clone_params(model.critic2)
    )
    opt_actor = adam_init(model.actor)
    opt_c1 = adam_init(model.critic1)
    opt_c2 = adam_init(model.critic2)
    buffer = ReplayBuffer(cfg.buffer_capacity)
    rng = np.random.default_rng(loop_seed)
    eval_rng = np.random.default_rng(eval_seed)
    eval_scenarios = [scenario_factory(eval_rng) for _ in range(eval_episodes)]

    scenario = scenario_factory(rng)
    w = env_reset(scenario)
    obs = observe(w)
    loss_sum, loss_n, j_sum, j_n = 0.0, 0, 0.0, 0

    for t in range(cfg.total_steps):
        lr = linear_anneal(cfg.lr_initial, t, cfg.total_steps)
        expl = linear_anneal(cfg.exploration_std_initial, t, cfg.total_steps)

        if t < cfg.warmup_steps:
            u = rng.uniform(-1.0, 1.0, ACT_DIM)
        else:
            u, _ = mlp_forward(model.actor, obs)
            u = np.clip(u + expl * rng.standard_normal(ACT_DIM), -1.0, 1.0)
        w, tr = env_step(w, normalized_to_displacement(u, fs), reward_cfg, tolerance, robot)
        buffer.push(tr)
        obs = tr.next_obs
        if tr.terminated or tr.truncated:
            scenario = scenario_factory(rng)
            w = env_reset(scenario)
            obs = observe(w)

        if t >= cfg.warmup_steps and buffer.size >= cfg.batch_size:
            batch = sample_batch(buffer, rng, cfg.batch_size, fs)
            loss_sum += update_critics(model, targets, batch, opt_c1, opt_c2, cfg, rng, lr)
            loss_n += 1
            if (t + 1) % cfg.policy_delay == 0:
                j_sum += update_actor(model, batch, opt_actor, lr)
                j_n += 1
                polyak_update(targets.actor, model.actor, cfg.polyak_tau)
                polyak_update(targets.critic1, model.critic1, cfg.polyak_tau)
                polyak_update(targets.critic2, model.critic2, cfg.polyak_tau)

        if eval_every > 0 and (t + 1) % eval_every == 0:
            success, mean_steps = evaluate(model, eval_scenarios)
            row = LogRow(
                step=t + 1,
                eval_success_rate=success,
                eval_mean_steps=mean_steps,
                critic_loss=loss_sum / max(loss_n, 1),
                actor_j=j_sum / max(j_n, 1),
                lr=lr,
                expl_std=expl,
            )
            log.append(row)
            loss_sum, loss_n, j_sum, j_n = 0.0, 0, 0.0, 0
            if eval_callback is not None:
                eval_callback(row, model)

    return model, log


# --- model persistence -----------------------------------------------------


def save_model(model: TrainedModel, path: str) -> None:
    fs = model.robot.feasible
    text = format_fsn1(
        {"actor": model.actor, "critic1": model.critic1, "critic2": model.critic2},
        {
            "gamma": (model.gamma,),
            "fdist": (model.robot.f_dist,),
            "bounds": (fs.dx_fwd_max, fs.dx_bwd_max, fs.dy_max, fs.dtheta_max),
        },
    )
    atomic_write_text(path, text)


def load_model(
    path: str,
    *,
    reward_cfg: RewardConfig | None = None,
    tolerance: ToleranceConfig | None = None,
) -> TrainedModel:
    """Rebuild a TrainedModel from an FSN1 file.

    The file carries network weights, gamma, the stance width, and the
    displacement bounds; foot dimensions and the reward/tolerance settings are
    not part of the format and fall back to the platform defaults.
    """
    with open(path) as fh:
        text = fh.read()
    networks, meta = parse_fsn1(text)
    for role in ("actor", "critic1", "critic2"):
        if role not in networks:
            raise ModelFormatError(f"model file is missing the {role!r} section")
    base = default_robot_spec()
    bounds = meta["bounds"]
    robot = RobotSpec(
        foot_length=base.foot_length,
        foot_width=base.foot_width,
        f_dist=meta["fdist"][0],
        feasible=FeasibleSet(*bounds),
    )
    return TrainedModel(
        networks["actor"],
        networks["critic1"],
        networks["critic2"],
        meta["gamma"][0],
        robot,
        reward_cfg if reward_cfg is not None else RewardConfig(),
        tolerance if tolerance is not None else ToleranceConfig(),
    )
