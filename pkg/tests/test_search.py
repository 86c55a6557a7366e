import math

import numpy as np
import pytest

from footplan.env import ToleranceConfig, reaches_target, sample_scenario
from footplan.geometry import (
    Displacement,
    Foot,
    Footstep,
    Obstacle,
    Pose2,
    apply_displacement,
    default_robot_spec,
    footstep_collides,
    mirror_footstep,
)
from footplan.search import (
    ActionSet,
    AraResult,
    SearchConfig,
    ara_star,
    astar_plan,
    bfs_oracle,
    builtin_action_set,
    heuristic,
    load_action_set,
    make_search_config,
    step_lower_bound,
    successors,
)

SPEC = default_robot_spec()
TOL = ToleranceConfig()

# small test set: enough variety to steer, small enough for exhaustive BFS
TEST_SET = ActionSet(
    "test",
    (
        Displacement(0.08, 0.0, 0.0),
        Displacement(0.04, 0.0, 0.0),
        Displacement(-0.03, 0.0, 0.0),
        Displacement(0.0, 0.04, 0.0),
        Displacement(0.0, 0.0, math.radians(20.0)),
        Displacement(0.0, 0.0, -math.radians(20.0)),
    ),
)


def make_cfg(**overrides):
    return make_search_config(TEST_SET, SPEC, **overrides)


def reachable_instance(seed: int, situation: str):
    """A start from the situation's distribution plus a target constructed by
    walking 3..5 collision-free actions, so the optimum is small and finite."""
    rng = np.random.default_rng(seed)
    rho = 0.15 if situation != "NO" else 0.0
    sc = sample_scenario(situation, rho, seed, SPEC)
    node = sc.start
    k = int(rng.integers(3, 6))
    walked = 0
    for _ in range(30):
        if walked == k:
            break
        d = TEST_SET.displacements[int(rng.integers(len(TEST_SET.displacements)))]
        nxt = apply_displacement(node, d, SPEC)
        if footstep_collides(nxt, sc.obstacle, SPEC):
            continue
        node = nxt
        walked += 1
    return sc.start, node, sc.obstacle, walked


class TestActionSets:
    def test_builtin_sets_feasible(self):
        for name, size in (("A", 8), ("B", 12)):
            aset = builtin_action_set(name)
            assert len(aset.displacements) == size
            aset.validate(SPEC)

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            builtin_action_set("C")

    def test_infeasible_displacement_rejected(self):
        bad = ActionSet("bad", (Displacement(0.2, 0, 0),))
        with pytest.raises(ValueError, match="infeasible"):
            bad.validate(SPEC)

    def test_no_forward_rejected(self):
        sideways = ActionSet("side", (Displacement(0.0, 0.04, 0.0),))
        with pytest.raises(ValueError, match="forward"):
            sideways.validate(SPEC)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ActionSet("empty", ())

    def test_load_from_file(self, tmp_path):
        p = tmp_path / "set.txt"
        p.write_text("# comment\n0.08 0 0\n0.0 0.04 0.0\n\n-0.03 0 0\n")
        aset = load_action_set(str(p), SPEC, name="file")
        assert len(aset.displacements) == 3
        assert aset.displacements[0] == Displacement(0.08, 0, 0)

    def test_load_rejects_infeasible(self, tmp_path):
        p = tmp_path / "set.txt"
        p.write_text("0.08 0.04 0.3\n")
        with pytest.raises(ValueError, match="line 1"):
            load_action_set(str(p), SPEC)

    def test_load_rejects_malformed(self, tmp_path):
        p = tmp_path / "set.txt"
        p.write_text("0.08 0\n")
        with pytest.raises(ValueError, match="expected"):
            load_action_set(str(p), SPEC)


class TestSuccessors:
    def test_count_without_obstacle(self):
        node = Footstep(Foot.RIGHT, Pose2(0, 0, 0))
        succ = successors(node, TEST_SET, Obstacle(0, 0, 0), SPEC)
        assert len(succ) == len(TEST_SET.displacements)

    def test_collision_filter(self):
        node = Footstep(Foot.RIGHT, Pose2(0, 0, 0))
        # obstacle sits right where the swing foot would land
        blocked = successors(node, TEST_SET, Obstacle(0.0, 0.15, 0.1), SPEC)
        free = successors(node, TEST_SET, Obstacle(0, 0, 0), SPEC)
        assert len(blocked) < len(free)

    def test_mirrored_nodes_give_mirrored_successors(self):
        node = Footstep(Foot.RIGHT, Pose2(0.3, 0.2, 0.5))
        mirrored = mirror_footstep(node)
        a = successors(node, TEST_SET, Obstacle(0, 0, 0), SPEC)
        b = successors(mirrored, TEST_SET, Obstacle(0, 0, 0), SPEC)
        for fa, fb in zip(a, b):
            assert fb.foot is fa.foot.mirror()
            assert fb.pose.x == pytest.approx(fa.pose.x, abs=1e-12)
            assert fb.pose.y == pytest.approx(-fa.pose.y, abs=1e-12)


class TestHeuristic:
    def test_zero_at_target(self):
        f = Footstep(Foot.RIGHT, Pose2(0.2, 0.1, 0.3))
        assert heuristic(f, f, make_cfg()) == 0.0

    def test_translation_term(self):
        cfg = make_cfg(d_max=0.25)
        a = Footstep(Foot.RIGHT, Pose2(0, 0, 0))
        b = Footstep(Foot.RIGHT, Pose2(1.0, 0, 0))
        assert heuristic(a, b, cfg) == pytest.approx(4.0)

    def test_rotation_term(self):
        cfg = make_cfg(dtheta_max=math.radians(20))
        a = Footstep(Foot.RIGHT, Pose2(0, 0, 0))
        b = Footstep(Foot.RIGHT, Pose2(0, 0, math.radians(40)))
        assert heuristic(a, b, cfg) == pytest.approx(2.0)

    def test_admissible_on_random_instances(self):
        # h never exceeds the BFS optimum on instances where BFS terminates
        for seed in range(8):
            start, target, obstacle, _ = reachable_instance(seed, "NO")
            n = bfs_oracle(start, target, obstacle, TEST_SET, TOL, 7, spec=SPEC)
            if n is None:
                continue
            assert heuristic(start, target, make_cfg()) <= n + 1e-9


class TestAstar:
    def test_already_at_target(self):
        f = Footstep(Foot.RIGHT, Pose2(0.5, 0.5, 0))
        plan = astar_plan(f, f, Obstacle(0, 0, 0), make_cfg(), 1.0, TOL)
        assert plan is not None and plan.reached and plan.length == 0

    def test_wrong_foot_needs_a_step(self):
        target = Footstep(Foot.RIGHT, Pose2(0, 0, 0))
        start = Footstep(Foot.LEFT, Pose2(0.004, 0.0, 0.01))
        assert not reaches_target(start, target, TOL)
        plan = astar_plan(start, target, Obstacle(0, 0, 0), make_cfg(node_budget=40_000), 2.0, TOL)
        assert plan is None or plan.length >= 1

    def test_single_forward_step(self):
        start = Footstep(Foot.RIGHT, Pose2(0, 0, 0))
        target = apply_displacement(start, Displacement(0.08, 0, 0), SPEC)
        plan = astar_plan(start, target, Obstacle(0, 0, 0), make_cfg(), 1.0, TOL)
        assert plan.length == 1
        assert bfs_oracle(start, target, Obstacle(0, 0, 0), TEST_SET, TOL, 3, spec=SPEC) == 1

    def test_rejects_epsilon_below_one(self):
        f = Footstep(Foot.RIGHT, Pose2(0, 0, 0))
        with pytest.raises(ValueError):
            astar_plan(f, f, Obstacle(0, 0, 0), make_cfg(), 0.5, TOL)

    def test_budget_exhaustion_fails(self):
        start = Footstep(Foot.RIGHT, Pose2(-1.5, -1.5, 0))
        target = Footstep(Foot.RIGHT, Pose2(1.5, 1.5, 0))
        plan = astar_plan(start, target, Obstacle(0, 0, 0), make_cfg(node_budget=10), 1.0, TOL)
        assert plan is None

    @pytest.mark.parametrize("situation", ["NO", "AO", "FO"])
    def test_matches_bfs_oracle(self, situation):
        matched = 0
        for seed in range(20):
            start, target, obstacle, _ = reachable_instance(1000 + seed, situation)
            n = bfs_oracle(start, target, obstacle, TEST_SET, TOL, 7, spec=SPEC)
            if n is None:
                continue
            plan = astar_plan(start, target, obstacle, make_cfg(), 1.0, TOL)
            assert plan is not None
            assert plan.length == n
            matched += 1
        assert matched >= 10

    def test_plans_collision_free_and_feasible(self):
        start, target, obstacle, _ = reachable_instance(77, "AO")
        plan = astar_plan(start, target, obstacle, make_cfg(), 1.5, TOL)
        if plan is None:
            pytest.skip("instance unsolvable at this budget")
        for f in plan.steps[1:]:
            assert not footstep_collides(f, obstacle, SPEC)


class TestEpsilonBound:
    def test_suboptimality_within_epsilon(self):
        for seed in range(10):
            start, target, obstacle, _ = reachable_instance(2000 + seed, "NO")
            best = astar_plan(start, target, obstacle, make_cfg(), 1.0, TOL)
            if best is None:
                continue
            for eps in (1.5, 2.0, 3.0, 5.0):
                plan = astar_plan(start, target, obstacle, make_cfg(), eps, TOL)
                assert plan is not None
                assert plan.length <= eps * best.length + 1e-9


class TestAraStar:
    def test_generous_budget_reaches_optimal(self):
        start, target, obstacle, _ = reachable_instance(3000, "NO")
        optimal = astar_plan(start, target, obstacle, make_cfg(), 1.0, TOL)
        result = ara_star(start, target, obstacle, make_cfg(), TOL)
        assert result.plan is not None
        assert result.epsilon_achieved == 1.0
        assert result.plan.length == optimal.length

    def test_tiny_budget_keeps_greedy_plan(self):
        start, target, obstacle, _ = reachable_instance(3001, "NO")
        generous = ara_star(start, target, obstacle, make_cfg(), TOL)
        first_level = ara_star(
            start, target, obstacle, make_cfg(), TOL,
            max_nodes=generous.expansions // 8 + 5,
        )
        if first_level.plan is not None:
            assert first_level.epsilon_achieved >= generous.epsilon_achieved
            assert first_level.plan.length >= generous.plan.length

    def test_length_non_increasing_in_budget(self):
        start, target, obstacle, _ = reachable_instance(3002, "NO")
        lengths = []
        for budget in (50, 200, 1000, 5000, 50_000):
            r = ara_star(start, target, obstacle, make_cfg(), TOL, max_nodes=budget)
            lengths.append(r.plan.length if r.plan is not None else math.inf)
        for a, b in zip(lengths, lengths[1:]):
            assert b <= a

    def test_unreachable_fails(self):
        # target fully inside the obstacle: no collision-free goal footstep
        start = Footstep(Foot.RIGHT, Pose2(-1.0, 0, 0))
        target = Footstep(Foot.RIGHT, Pose2(0, 0, 0))
        r = ara_star(start, target, Obstacle(0, 0, 0.3), make_cfg(node_budget=20_000), TOL,
                     max_nodes=60_000)
        assert r.plan is None


class TestStepLowerBound:
    def test_zero_at_target(self):
        f = Footstep(Foot.RIGHT, Pose2(0.1, 0.2, 0.3))
        assert step_lower_bound(f, f, SPEC, TOL) == 0

    def test_translation_bound(self):
        a = Footstep(Foot.RIGHT, Pose2(0, 0, 0))
        b = Footstep(Foot.RIGHT, Pose2(1.0, 0, 0))
        assert step_lower_bound(a, b, SPEC, TOL, d_max=0.25) == 4

    def test_rotation_bound(self):
        a = Footstep(Foot.RIGHT, Pose2(0, 0, 0))
        b = Footstep(Foot.RIGHT, Pose2(0, 0, math.pi))
        assert step_lower_bound(a, b, SPEC, TOL) == 9

    def test_foot_parity(self):
        a = Footstep(Foot.LEFT, Pose2(0, 0, 0))
        b = Footstep(Foot.RIGHT, Pose2(0, 0, 0))
        assert step_lower_bound(a, b, SPEC, TOL) == 1

    def test_never_exceeds_bfs_optimum(self):
        for seed in range(10):
            start, target, obstacle, _ = reachable_instance(4000 + seed, "NO")
            n = bfs_oracle(start, target, obstacle, TEST_SET, TOL, 7, spec=SPEC)
            if n is None:
                continue
            assert step_lower_bound(start, target, SPEC, TOL) <= n


class TestSearchConfig:
    def test_epsilon_schedule_validation(self):
        with pytest.raises(ValueError):
            SearchConfig(TEST_SET, SPEC, epsilon_schedule=(1.0, 2.0))
        with pytest.raises(ValueError):
            SearchConfig(TEST_SET, SPEC, epsilon_schedule=(3.0, 0.5))

    def test_make_config_derives_bounds(self):
        cfg = make_search_config(TEST_SET, SPEC)
        assert cfg.d_max == pytest.approx(0.23, abs=0.01)
        assert cfg.dtheta_max == SPEC.feasible.dtheta_max
