import math

import numpy as np
import pytest

from arcmpc.arcs import arc_propagate, rollout
from arcmpc.behaviors import (BehaviorConfig, certified_depth, evasive_parameters, gen_arc_then_reference,
                              gen_point_to_point, gen_single_arc, gen_turn, initialize, point_to_point_arc,
                              speed_circle)
from arcmpc.core import INF_COST, CostWeights, HorizonConfig, Pose, VelocityPair
from arcmpc.costs import HorizonProblem
from arcmpc.planner import ReferenceTrajectory, time_parameterize


def _problem(ctrl, obstacles=np.zeros((0, 2)), ref=None, x0=None, t0=0.0):
    ref = ref or time_parameterize([[0.2, 0.0], [6.0, 0.0]], 0.9, 0.5, 2.0)
    x0 = ctrl.plant.initial_state(Pose(0.0, 0.0, 0.0)) if x0 is None else x0
    return HorizonProblem(ctrl, x0, t0, HorizonConfig(), ref, obstacles, CostWeights())


def test_speed_circle():
    pts = speed_circle(0.9, 20)
    assert pts.shape == (20, 2)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 0.9)
    np.testing.assert_allclose(pts[0], [0.9, 0.0])


def test_candidates_are_forward_only(unicycle_ctrl):
    prob = _problem(unicycle_ctrl)
    cfg = BehaviorConfig()
    for gen in (gen_single_arc, gen_arc_then_reference, gen_turn, gen_point_to_point):
        for sol in gen(prob, cfg):
            assert sol.params[:, 0].min() >= 0.0
            assert np.abs(sol.params[:, 1]).max() <= prob.limits.omega_max
            assert sol.horizon == pytest.approx(prob.horizon.delta)
    assert len(gen_single_arc(prob, cfg)) == cfg.n_circle + cfg.n_half_ring
    assert len(gen_turn(prob, cfg)) == 2 * len(cfg.turn_lengths)


def test_point_to_point_arc_reaches_target(rng):
    eps = 0.2
    for _ in range(100):
        pose = Pose(*rng.uniform(-2, 2, 2), rng.uniform(-math.pi, math.pi))
        target = np.array([pose.x1, pose.x2]) + rng.uniform(-2, 2, 2)
        T = rng.uniform(0.5, 3.0)
        vel = point_to_point_arc(pose, target, T, eps)
        if vel is None:
            continue
        end = arc_propagate(pose, vel, T)
        y = np.array([end.x1 + eps * math.cos(end.psi), end.x2 + eps * math.sin(end.psi)])
        np.testing.assert_allclose(y, target, atol=1e-9)
        assert vel.v >= 0


def test_point_to_point_rejects_targets_behind():
    assert point_to_point_arc(Pose(0, 0, 0), [-1.0, 0.0], 1.0) is None


def test_initialize_returns_cheapest_candidate(ctrl):
    slow = time_parameterize([[0.2, 0.0], [6.0, 0.0]], 0.3, 0.1, 2.0)
    prob = _problem(ctrl, obstacles=np.array([[1.0, 0.6]]), ref=slow)
    res = initialize(prob, None, BehaviorConfig(), VelocityPair(0.0, 0.0))
    assert res.finite
    assert res.report.total == pytest.approx(res.costs[np.isfinite(res.costs)].min())
    assert res.report.total == pytest.approx(np.min(res.costs))


def test_initialize_never_worse_than_previous(unicycle_ctrl):
    prob = _problem(unicycle_ctrl)
    first = initialize(prob, None, BehaviorConfig())
    later = _problem(unicycle_ctrl, t0=0.2, x0=rollout(prob.x0, first.solution, unicycle_ctrl,
                                                         prob.reference).states[4])
    second = initialize(later, first.solution, BehaviorConfig())
    prev_cost = later.evaluate_solutions([first.solution.shifted(0.2)])[1].total[0]
    assert second.report.total <= prev_cost + 1e-12


def test_initialize_all_blocked_gives_stop(unicycle_ctrl):
    ring = 0.3 * np.c_[np.cos(np.linspace(0, 2 * np.pi, 60)), np.sin(np.linspace(0, 2 * np.pi, 60))]
    res = initialize(_problem(unicycle_ctrl, obstacles=ring), None, BehaviorConfig())
    assert res.label == "stop" and res.report is None
    np.testing.assert_allclose(res.solution.params, 0.0)


def test_certified_depth_at_rest_on_goal(unicycle_ctrl):
    """Resting on the goal with the tracker costs nothing now and at every later shift."""
    ref = ReferenceTrajectory.constant([0.2, 0.0])
    prob = _problem(unicycle_ctrl, ref=ref)
    res = initialize(prob, None, BehaviorConfig(), certify_shift=0.2, certify_count=3)
    assert res.report.total == pytest.approx(0.0, abs=1e-12)
    costs = np.array([res.report.total])
    assert certified_depth(prob, [res.solution], costs, 0.2, 3)[0] == 3
    assert certified_depth(prob, [res.solution], np.array([INF_COST]), 0.2, 3)[0] == 0


def test_evasive_parameters_avoid_collision(unicycle_ctrl):
    wall = np.c_[np.full(21, 1.5), np.linspace(-1, 1, 21)]
    prob = _problem(unicycle_ctrl, obstacles=wall)
    sol = evasive_parameters(prob, VelocityPair(0.9, 0.0))
    _, cost = prob.evaluate_solutions([sol])
    assert cost.collision_index[0] < 0
    assert 0 < sol.params[0, 0] < 0.9


def test_config_validation():
    with pytest.raises(ValueError):
        BehaviorConfig(alpha=1.5)
    with pytest.raises(ValueError):
        BehaviorConfig(tail_fraction=1.0)
