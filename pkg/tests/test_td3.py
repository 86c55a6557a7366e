import math

import numpy as np
import pytest

from footplan.env import RewardConfig, Scenario, ToleranceConfig, Transition, scenario_mix_factory
from footplan.geometry import Displacement, default_robot_spec
from footplan.neural import MlpParams, adam_init, mlp_forward, mlp_init
from footplan.td3 import (
    Batch,
    ReplayBuffer,
    TargetNets,
    Td3Config,
    TrainedModel,
    action_center_scale,
    buffer_push,
    critic_target,
    displacement_to_normalized,
    init_model,
    linear_anneal,
    load_model,
    normalized_to_displacement,
    polyak_update,
    sample_batch,
    save_model,
    train,
    update_actor,
    update_critics,
)

SPEC = default_robot_spec()
FS = SPEC.feasible

# chi-square upper critical value, df=99, tail 0.001 (frozen from scipy)
CHI2_99_P999 = 148.23035916510173


def transition(
    reward=-1.0, terminated=False, truncated=False, obs_fill=0.1, next_fill=0.2
) -> Transition:
    return Transition(
        np.full(8, obs_fill),
        Displacement(0.01, 0.0, 0.0),
        reward,
        np.full(8, next_fill),
        terminated,
        truncated,
    )


class TestActionMapping:
    def test_midpoint(self):
        d = normalized_to_displacement(np.zeros(3), FS)
        assert d.dx == pytest.approx((FS.dx_fwd_max - FS.dx_bwd_max) / 2)
        assert d.dy == 0.0 and d.dtheta == 0.0

    def test_corners(self):
        hi = normalized_to_displacement(np.ones(3), FS)
        lo = normalized_to_displacement(-np.ones(3), FS)
        assert hi.dx == pytest.approx(FS.dx_fwd_max)
        assert lo.dx == pytest.approx(-FS.dx_bwd_max)
        assert hi.dy == pytest.approx(FS.dy_max)
        assert lo.dtheta == pytest.approx(-FS.dtheta_max)

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            u = rng.uniform(-1, 1, 3)
            back = displacement_to_normalized(normalized_to_displacement(u, FS), FS)
            np.testing.assert_allclose(back, u, atol=1e-12)

    def test_center_scale_shapes(self):
        center, scale = action_center_scale(FS)
        assert center.shape == scale.shape == (3,)
        assert (scale > 0).all()


class TestReplayBuffer:
    def test_push_grows(self):
        b = ReplayBuffer(10)
        buffer_push(b, transition())
        assert b.size == 1

    def test_ring_eviction(self):
        b = ReplayBuffer(3)
        for i in range(4):
            buffer_push(b, transition(reward=float(i)))
        assert b.size == 3
        rewards = {float(b.get(i).reward) for i in range(b.size)}
        assert rewards == {1.0, 2.0, 3.0}  # reward 0 evicted

    def test_sample_only_pushed_items(self):
        b = ReplayBuffer(100)
        for i in range(7):
            buffer_push(b, transition(reward=float(i)))
        rng = np.random.default_rng(0)
        idx = b.sample_indices(rng, 500)
        assert idx.min() >= 0 and idx.max() < 7
        rewards = {float(b.reward[i]) for i in idx}
        assert rewards <= {float(i) for i in range(7)}

    def test_get_round_trip(self):
        b = ReplayBuffer(4)
        t = transition(reward=-2.5, terminated=True)
        buffer_push(b, t)
        back = b.get(0)
        assert back.terminated and not back.truncated
        assert back.reward == -2.5
        assert back.action.dx == pytest.approx(0.01, abs=1e-8)

    def test_uniform_sampling_chi_square(self):
        b = ReplayBuffer(100)
        for i in range(100):
            buffer_push(b, transition(reward=float(i)))
        rng = np.random.default_rng(123)
        idx = b.sample_indices(rng, 100_000)
        counts = np.bincount(idx, minlength=100)
        expected = 1000.0
        stat = float(((counts - expected) ** 2 / expected).sum())
        assert stat < CHI2_99_P999

    def test_empty_sample_fails(self):
        with pytest.raises(ValueError):
            ReplayBuffer(5).sample_indices(np.random.default_rng(0), 1)


def make_batch(reward, terminated, n=4):
    rng = np.random.default_rng(0)
    return Batch(
        obs=rng.standard_normal((n, 8)),
        action_norm=rng.uniform(-1, 1, (n, 3)),
        reward=np.full(n, reward),
        next_obs=rng.standard_normal((n, 8)),
        terminated=np.full(n, terminated),
    )


def constant_critic(value: float) -> MlpParams:
    p = mlp_init((11, 4, 1), 0, output_activation="identity")
    for w in p.weights:
        w[:] = 0
    p.biases[-1][0] = value
    return p


class TestCriticTarget:
    def setup_method(self):
        self.cfg = Td3Config(total_steps=10, warmup_steps=0, batch_size=2, buffer_capacity=10)

    def test_terminated_no_bootstrap(self):
        targets = TargetNets(mlp_init((8, 4, 3), 0), constant_critic(-5.0), constant_critic(-5.0))
        y = critic_target(make_batch(-1.0, True), targets, self.cfg, np.random.default_rng(0))
        np.testing.assert_allclose(y, -1.0, atol=1e-12)

    def test_bootstrap_formula(self):
        targets = TargetNets(mlp_init((8, 4, 3), 0), constant_critic(-5.0), constant_critic(-5.0))
        y = critic_target(make_batch(-1.0, False), targets, self.cfg, np.random.default_rng(0))
        np.testing.assert_allclose(y, -1.0 + 0.98 * -5.0, atol=1e-9)

    def test_min_of_twin_critics(self):
        targets = TargetNets(mlp_init((8, 4, 3), 0), constant_critic(-5.0), constant_critic(-7.0))
        y = critic_target(make_batch(-1.0, False), targets, self.cfg, np.random.default_rng(0))
        np.testing.assert_allclose(y, -1.0 + 0.98 * -7.0, atol=1e-9)

    def test_bootstrap_never_exceeds_either_critic(self):
        cfg = Td3Config(
            total_steps=10, warmup_steps=0, batch_size=2, buffer_capacity=10,
            target_noise_std=0.0,  # makes the next action reproducible here
        )
        targets = TargetNets(
            mlp_init((8, 16, 3), 1),
            mlp_init((11, 16, 1), 2, output_activation="identity"),
            mlp_init((11, 16, 1), 3, output_activation="identity"),
        )
        batch = make_batch(-1.0, False, n=64)
        y = critic_target(batch, targets, cfg, np.random.default_rng(5))
        a_next, _ = mlp_forward(targets.actor, batch.next_obs)
        x = np.concatenate([batch.next_obs, np.clip(a_next, -1, 1)], axis=1)
        q1, _ = mlp_forward(targets.critic1, x)
        q2, _ = mlp_forward(targets.critic2, x)
        assert (y <= batch.reward + cfg.gamma * q1[:, 0] + 1e-12).all()
        assert (y <= batch.reward + cfg.gamma * q2[:, 0] + 1e-12).all()
        np.testing.assert_allclose(
            y, batch.reward + cfg.gamma * np.minimum(q1, q2)[:, 0], atol=1e-12
        )


class TestUpdateCritics:
    def _model(self):
        return init_model(0, hidden_dims=(16, 16))

    def test_zero_error_leaves_params_unchanged(self):
        model = self._model()
        targets = TargetNets(model.actor, model.critic1, model.critic2)
        cfg = Td3Config(total_steps=10, warmup_steps=0, batch_size=4, buffer_capacity=10)
        batch = make_batch(-1.0, True)
        x = np.concatenate([batch.obs, batch.action_norm], axis=1)
        q, _ = mlp_forward(model.critic1, x)
        batch.reward = q[:, 0].copy()  # terminated: y = r = prediction
        q2, _ = mlp_forward(model.critic2, x)
        before1 = [w.copy() for w in model.critic1.weights]
        opt1, opt2 = adam_init(model.critic1), adam_init(model.critic2)
        loss = update_critics(model, targets, batch, opt1, opt2, cfg, np.random.default_rng(0), 1e-3)
        assert loss >= 0.0
        # critic1 had exactly-zero error so its parameters cannot move
        assert all(np.array_equal(a, b) for a, b in zip(before1, model.critic1.weights))

    def test_regression_to_fixed_target(self):
        model = self._model()
        targets = TargetNets(
            mlp_init((8, 4, 3), 9), constant_critic(-3.0), constant_critic(-3.0)
        )
        cfg = Td3Config(
            total_steps=10, warmup_steps=0, batch_size=1, buffer_capacity=10,
            target_noise_std=0.0,
        )
        batch = make_batch(-1.0, False, n=1)
        opt1, opt2 = adam_init(model.critic1), adam_init(model.critic2)
        y = -1.0 + 0.98 * -3.0
        rng = np.random.default_rng(0)
        for _ in range(3000):
            loss = update_critics(model, targets, batch, opt1, opt2, cfg, rng, 1e-3)
        x = np.concatenate([batch.obs, batch.action_norm], axis=1)
        q, _ = mlp_forward(model.critic1, x)
        assert abs(float(q[0, 0]) - y) < 1e-3
        assert loss >= 0.0


def l1_pull_critic(target_action: np.ndarray) -> MlpParams:
    """Hand-built critic: Q(s, a) = -sum_i leaky|a_i - t_i|, maximized at a = t."""
    w1 = np.zeros((6, 11))
    b1 = np.zeros(6)
    for i in range(3):
        w1[2 * i, 8 + i] = 1.0
        b1[2 * i] = -target_action[i]
        w1[2 * i + 1, 8 + i] = -1.0
        b1[2 * i + 1] = target_action[i]
    w2 = -np.ones((1, 6))
    return MlpParams((11, 6, 1), [w1, w2], [b1, np.zeros(1)], output_activation="identity")


class TestUpdateActor:
    def test_action_independent_critic_leaves_actor_unchanged(self):
        model = init_model(0, hidden_dims=(8, 8))
        model.critic1.weights[0][:, 8:] = 0  # critic ignores the action inputs
        before = [w.copy() for w in model.actor.weights]
        batch = make_batch(-1.0, False)
        update_actor(model, batch, adam_init(model.actor), 1e-3)
        assert all(np.array_equal(a, b) for a, b in zip(before, model.actor.weights))

    def test_converges_to_synthetic_optimum(self):
        target = np.array([0.3, -0.2, 0.5])
        model = init_model(1, hidden_dims=(16, 16))
        model.critic1 = l1_pull_critic(target)
        batch = make_batch(-1.0, False, n=8)
        opt = adam_init(model.actor)
        js = [update_actor(model, batch, opt, 3e-3) for _ in range(1500)]
        out, _ = mlp_forward(model.actor, batch.obs)
        np.testing.assert_allclose(out, np.tile(target, (8, 1)), atol=0.05)
        assert js[-1] > js[0]

    def test_objective_improves_on_frozen_critic(self):
        # target components away from the initial actor outputs so the L1
        # kinks are never crossed during these 100 small steps
        target = np.array([0.35, -0.3, -0.4])
        model = init_model(2, hidden_dims=(16, 16))
        model.critic1 = l1_pull_critic(target)
        batch = make_batch(-1.0, False, n=8)
        opt = adam_init(model.actor)
        js = [update_actor(model, batch, opt, 1e-4) for _ in range(100)]
        improvements = sum(b >= a for a, b in zip(js, js[1:]))
        assert improvements >= 97
        assert js[-1] > js[0]


class TestPolyak:
    def _pair(self):
        t = mlp_init((3, 4, 2), 0)
        o = mlp_init((3, 4, 2), 1)
        return t, o

    def test_tau_one_copies(self):
        t, o = self._pair()
        polyak_update(t, o, 1.0)
        assert all(np.allclose(a, b, atol=1e-15) for a, b in zip(t.weights, o.weights))

    def test_tau_zero_identity(self):
        t, o = self._pair()
        before = [w.copy() for w in t.weights]
        polyak_update(t, o, 0.0)
        assert all(np.array_equal(a, b) for a, b in zip(before, t.weights))

    def test_formula(self):
        t, o = self._pair()
        t.weights[0][:] = 0.0
        o.weights[0][:] = 1.0
        polyak_update(t, o, 0.005)
        np.testing.assert_allclose(t.weights[0], 0.005, atol=1e-15)

    def test_bracketing(self):
        t, o = self._pair()
        t.weights[0][:] = 0.0
        o.weights[0][:] = 1.0
        prev = 0.0
        for _ in range(50):
            polyak_update(t, o, 0.01)
            v = float(t.weights[0][0, 0])
            assert prev < v < 1.0  # monotone toward online, never beyond
            prev = v


class TestAnnealing:
    def test_linear_and_terminal_zero(self):
        total = 1000
        values = [linear_anneal(1e-3, t, total) for t in range(0, total + 1, 100)]
        assert values[0] == 1e-3
        assert values[-1] == 0.0
        diffs = np.diff(values)
        assert (diffs <= 0).all()
        np.testing.assert_allclose(diffs, diffs[0], atol=1e-18)


class TestTrain:
    def test_zero_steps_returns_untrained(self):
        factory = scenario_mix_factory(("NO",), spec=SPEC, area_half=1.0)
        cfg = Td3Config(total_steps=0)
        model, log = train(factory, cfg, seed=5, hidden_dims=(8, 8))
        assert log == []
        fresh = init_model(
            int(np.random.default_rng(5).integers(0, 2**63 - 1, size=3)[0]),
            hidden_dims=(8, 8),
            dtype=np.float32,
        )
        assert all(np.array_equal(a, b) for a, b in zip(model.actor.weights, fresh.actor.weights))

    def test_deterministic(self):
        factory = scenario_mix_factory(("NO",), spec=SPEC, area_half=1.0)
        cfg = Td3Config(total_steps=250, warmup_steps=100, batch_size=32, buffer_capacity=1000)
        m1, log1 = train(factory, cfg, seed=7, hidden_dims=(8, 8), eval_every=100, eval_episodes=3)
        m2, log2 = train(factory, cfg, seed=7, hidden_dims=(8, 8), eval_every=100, eval_episodes=3)
        assert all(np.array_equal(a, b) for a, b in zip(m1.actor.weights, m2.actor.weights))
        assert all(np.array_equal(a, b) for a, b in zip(m1.critic2.weights, m2.critic2.weights))
        assert log1 == log2

    def test_log_cadence(self):
        factory = scenario_mix_factory(("NO",), spec=SPEC, area_half=1.0)
        cfg = Td3Config(total_steps=300, warmup_steps=50, batch_size=16, buffer_capacity=1000)
        _, log = train(factory, cfg, seed=1, hidden_dims=(8, 8), eval_every=100, eval_episodes=2)
        assert [r.step for r in log] == [100, 200, 300]
        # the last update used lr(299) = lr0/300; the schedule hits 0 at t=300
        assert log[-1].lr == pytest.approx(cfg.lr_initial / 300, rel=1e-9)


class TestConfigValidation:
    def test_gamma_range(self):
        with pytest.raises(ValueError):
            Td3Config(gamma=1.0)

    def test_batch_vs_capacity(self):
        with pytest.raises(ValueError):
            Td3Config(batch_size=100, buffer_capacity=50)

    def test_policy_delay(self):
        with pytest.raises(ValueError):
            Td3Config(policy_delay=0)


class TestModelPersistence:
    def test_round_trip_exact(self, tmp_path):
        model = init_model(3, hidden_dims=(6, 5), gamma=0.97)
        path = str(tmp_path / "m.fsn1")
        save_model(model, path)
        back = load_model(path)
        assert back.gamma == 0.97
        assert back.robot.f_dist == model.robot.f_dist
        assert back.robot.feasible == model.robot.feasible
        for a, b in zip(model.actor.weights, back.actor.weights):
            assert np.array_equal(a, b)
        for a, b in zip(model.critic2.biases, back.critic2.biases):
            assert np.array_equal(a, b)

    def test_float32_round_trip_exact(self, tmp_path):
        model = init_model(4, hidden_dims=(6, 5), dtype=np.float32)
        path = str(tmp_path / "m32.fsn1")
        save_model(model, path)
        back = load_model(path)
        for a, b in zip(model.actor.weights, back.actor.weights):
            assert np.array_equal(a.astype(np.float64), b)

    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            TrainedModel(
                mlp_init((7, 4, 3), 0),  # wrong input dim
                mlp_init((11, 4, 1), 1, output_activation="identity"),
                mlp_init((11, 4, 1), 2, output_activation="identity"),
                0.98,
                SPEC,
                RewardConfig(),
                ToleranceConfig(),
            )
