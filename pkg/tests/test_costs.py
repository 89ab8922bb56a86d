import math

import numpy as np
import pytest

from arcmpc.arcs import ArcSolution, rollout
from arcmpc.core import INF_COST, CostWeights, HorizonConfig, Pose
from arcmpc.costs import (HorizonProblem, inst_cost, l_avoid, l_goal, terminal_cost, tilt_barrier, total_cost)
from arcmpc.planner import OccupancyGrid, ReferenceTrajectory


def test_goal_gate():
    assert l_goal(0.1, 0.25, 2.0) == 0.0
    assert l_goal(0.25, 0.25, 2.0) == pytest.approx(0.0)
    assert l_goal(0.25 + math.log(3) / 2.0, 0.25, 2.0) == pytest.approx(0.5)
    assert l_goal(100.0, 0.25, 2.0) == pytest.approx(1.0)


def test_avoid_barrier():
    assert l_avoid(0.25, 0.25, 1.5, 1.0) == math.inf
    assert l_avoid(1.5, 0.25, 1.5, 1.0) == pytest.approx(0.0)
    assert l_avoid(2.0, 0.25, 1.5, 1.0) == 0.0
    assert l_avoid(0.35, 0.25, 1.5, 1.0) == pytest.approx(math.log(12.5))


def test_tilt_barrier():
    assert tilt_barrier(0.0, 0.5, 1.0) == 0.0
    assert tilt_barrier(0.5, 0.5, 1.0) == math.inf
    assert tilt_barrier(-0.25, 0.5, 2.0) == pytest.approx(-2.0 * math.log(0.75))


def test_terminal_cost():
    w = CostWeights(rho4=2.0, rho5=0.5)
    assert terminal_cost([0.1, 0.0], [0.0, 0.0], w, 0.25) == pytest.approx(0.01 - 0.5 * math.log(0.6))
    assert terminal_cost([1.0, 0.0], [0.0, 0.0], w, 0.25) == math.inf
    assert terminal_cost([1.0, 0.0], [0.0, 0.0], w, 0.25, barrier=False) == pytest.approx(1.0)


def test_inst_cost_terms():
    w = CostWeights()
    far_goal = [100.0, 0.0]
    base = inst_cost([0, 0], (0.4, 1.0), np.zeros((0, 2)), w, far_goal, 0.25)
    gate = l_goal(100.0, 0.25, w.a_goal_slope)
    assert base == pytest.approx(gate * (0.5 * w.rho1 * 0.5**2 + 0.5 * w.rho2))
    with_obs = inst_cost([0, 0], (0.4, 1.0), np.array([[0.5, 0.0]]), w, far_goal, 0.25)
    assert with_obs - base == pytest.approx(0.5 * w.rho3 * l_avoid(0.5, w.d_min, w.d_max, w.a_avoid_slope))
    assert inst_cost([0, 0], (0.4, 1.0), np.array([[0.1, 0.0]]), w, far_goal, 0.25) == math.inf
    assert inst_cost([0, 0], (0.4, 1.0), np.zeros((0, 2)), w, far_goal, 0.25, phi=0.2) == pytest.approx(
        base + tilt_barrier(0.2, w.phi_max, w.rho6))


def _grid_with(points):
    cells = np.zeros((61, 121), np.int8)
    for x, y in points:
        cells[int(round(y / 0.1)), int(round(x / 0.1))] = 1
    return OccupancyGrid(0.1, (0.0, 0.0), cells)


def test_total_cost_matches_trapezoid_of_instantaneous_cost(unicycle_ctrl):
    w = CostWeights(rho7=0.0)
    grid = _grid_with([(3.0, 3.8)])
    ref = ReferenceTrajectory.constant([3.5, 3.0])
    sol = ArcSolution.from_relative(0.0, [0.0, 1.0, 3.0, 3.0], [[0.6, 0.2], [0.8, -0.2]])
    traj = rollout(np.array([1.0, 3.0, 0.0]), sol, unicycle_ctrl, ref)
    report = total_cost(traj, grid, ref, w, 0.25, barrier=False)
    inst = np.array([inst_cost(traj.epsilon_track[k], traj.velocities[k], grid, w, ref.goal, 0.25)
                     for k in range(len(traj.times))])
    running = np.sum(0.5 * (inst[1:] + inst[:-1]) * np.diff(traj.times))
    assert report.running_integral == pytest.approx(running, rel=1e-12)
    assert report.terminal == pytest.approx(terminal_cost(traj.epsilon_track[-1], ref.goal, w, 0.25, False))
    assert not report.barrier_hit


def test_collision_gives_infinite_cost(unicycle_ctrl):
    w = CostWeights()
    ref = ReferenceTrajectory.constant([5.0, 3.0])
    grid = _grid_with([(2.0, 3.0)])
    sol = ArcSolution.from_relative(0.0, [0.0, 3.0, 3.0], [[1.0, 0.0]])
    report = total_cost(rollout(np.array([0.0, 3.0, 0.0]), sol, unicycle_ctrl, ref), grid, ref, w, 0.25)
    assert report.barrier_hit and report.total == INF_COST
    assert report.collision_time is not None and report.collision_time < 2.0


def test_shifted_cost_equals_cost_from_shifted_state(ctrl):
    """Window j of the extended rollout is exactly the problem posed j shifts later."""
    h = HorizonConfig()
    w = CostWeights()
    ref = ReferenceTrajectory.constant([4.0, 3.0])
    obstacles = np.array([[2.5, 3.8]])
    x0 = ctrl.plant.initial_state(Pose(1.0, 3.0, 0.1))
    sol = ArcSolution.from_relative(0.0, [0.0, 0.4, 0.8, 1.2, 3.0], [[0.3, 0.1], [0.4, 0.0], [0.3, -0.1]])
    prob = HorizonProblem(ctrl, x0, 0.0, h, ref, obstacles, w, barrier=False)
    shifted = prob.shifted_costs([sol], 0.2, count=2)[0]
    for j, t in enumerate((0.2, 0.4)):
        ext = ArcSolution(np.r_[sol.switch_times[:-1], sol.switch_times[-1] + t], sol.params)
        long = rollout(x0, ext, ctrl, ref, h.rollout_step, h.sample_step)
        k = int(round(t / h.sample_step))
        later = HorizonProblem(ctrl, long.states[k], t, h, ref, obstacles, w, barrier=False)
        _, cost = later.evaluate_solutions([sol.shifted(t)])
        assert shifted[j] == pytest.approx(cost.total[0], rel=1e-6, abs=1e-9)


def test_cost_vectors_count_evaluations(unicycle_ctrl):
    h = HorizonConfig()
    prob = HorizonProblem(unicycle_ctrl, np.array([0.0, 0.0, 0.0]), 0.0, h,
                          ReferenceTrajectory.constant([2.0, 0.0]), np.zeros((0, 2)), CostWeights(), barrier=False)
    sol = ArcSolution.from_relative(0.0, [0.0, 1.0, 2.0, 3.0, 3.0], np.tile([0.5, 0.0], (3, 1)))
    costs = prob.cost_vectors(np.stack([sol.vector(), sol.vector()]))
    assert prob.n_evals == 2 and costs[0] == costs[1] and np.isfinite(costs[0])
