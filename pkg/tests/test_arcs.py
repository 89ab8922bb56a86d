import math

import numpy as np
import pytest

from arcmpc.arcs import (ArcSolution, arc_propagate, closed_form_pose, first_collision, propagate_arrays,
                         rollout, scale_solution)
from arcmpc.control import Controller
from arcmpc.core import Pose, VelocityPair
from arcmpc.plants import make_plant, rk4_step, unicycle_derivative
from arcmpc.planner import OccupancyGrid


def test_quarter_circle():
    p = arc_propagate(Pose(0, 0, 0), VelocityPair(1.0, 1.0), math.pi / 2)
    np.testing.assert_allclose([p.x1, p.x2, p.psi], [1.0, 1.0, math.pi / 2], atol=1e-12)


def test_straight_line_limit_is_continuous():
    a = propagate_arrays(0.0, 0.0, 0.3, 1.0, 0.0, 2.0)
    b = propagate_arrays(0.0, 0.0, 0.3, 1.0, 1e-7, 2.0)
    np.testing.assert_allclose(np.ravel(a), np.ravel(b), atol=1e-6)


def test_closed_form_matches_rk4(rng):
    for _ in range(20):
        x = rng.uniform(-5, 5, 3)
        v, w, t = rng.uniform(-1, 1), rng.uniform(-2, 2), rng.uniform(0, 3)
        z = x.copy()
        h = t / 3000
        for k in range(3000):
            z = rk4_step(lambda s, y: unicycle_derivative(y, (v, w)), k * h, z, h)
        np.testing.assert_allclose(propagate_arrays(*x, v, w, t), z, atol=1e-9)


def test_solution_validation():
    with pytest.raises(ValueError):
        ArcSolution([0.0, 1.0], [[1.0, 0.0]])
    with pytest.raises(ValueError):
        ArcSolution([0.0, 2.0, 1.0], [[1.0, 0.0]])


def test_vector_round_trip():
    sol = ArcSolution.from_relative(3.0, [0, 0.5, 1.5, 2.0], [[1, 0.1], [0.5, -0.2]])
    back = ArcSolution.from_vector(3.0, 2.0, sol.vector())
    np.testing.assert_array_equal(back.switch_times, sol.switch_times)
    np.testing.assert_array_equal(back.params, sol.params)


def test_shift_extends_tracking_tail():
    sol = ArcSolution.from_relative(0.0, [0, 0.5, 1.5, 2.0], [[1, 0], [1, 0]])
    sh = sol.shifted(1.0)
    np.testing.assert_allclose(sh.switch_times, [1.0, 1.0, 1.5, 3.0])
    assert sh.horizon == pytest.approx(2.0) and sh.mode_at(1.2) == 1 and sh.mode_at(2.0) == 2


def test_snapping_rounds_to_grid():
    sol = ArcSolution.from_relative(0.0, [0, 0.013, 0.026, 1.0], [[1, 0], [1, 0]])
    np.testing.assert_allclose(sol.snapped(0.01).relative_times, [0, 0.01, 0.03, 1.0])


def test_scale_example():
    """A 4 s straight run at 1 m/s colliding at t = 2 s scales by 0.4 and ends at 1.6 m."""
    sol = ArcSolution.from_relative(0.0, [0.0, 4.0, 4.0], [[1.0, 0.0]])
    scaled = scale_solution(sol, 2.0)
    np.testing.assert_allclose(scaled.params, [[0.4, 0.0]])
    end = closed_form_pose(Pose(0, 0, 0), scaled, [4.0])[0]
    np.testing.assert_allclose(end, [1.6, 0.0, 0.0], atol=1e-12)


def test_scaling_is_time_dilation(rng):
    for _ in range(50):
        n = 3
        rel = np.r_[0.0, np.sort(rng.uniform(0, 2, n - 1)), 2.0, 2.0]
        sol = ArcSolution.from_relative(0.0, rel, np.c_[rng.uniform(0, 1, n), rng.uniform(-2, 2, n)])
        t_c = rng.uniform(0.1, 2.0)
        scaled = scale_solution(sol, t_c, 0.8)
        s = 0.8 * t_c / 2.0
        if s >= 1:
            continue
        t = np.linspace(0, 2.0, 41)
        start = Pose(*rng.uniform(-1, 1, 3))
        np.testing.assert_allclose(closed_form_pose(start, scaled, t), closed_form_pose(start, sol, s * t),
                                   atol=1e-9)


def test_scale_leaves_slow_solutions_alone():
    sol = ArcSolution.from_relative(0.0, [0.0, 2.0, 2.0], [[1.0, 0.0]])
    assert scale_solution(sol, 5.0) is sol
    with pytest.raises(ValueError):
        scale_solution(sol, 1.0, alpha=1.0)


def test_rollout_matches_closed_form_for_unicycle():
    ctrl = Controller(make_plant("unicycle"), 0.2)
    sol = ArcSolution.from_relative(0.0, [0.0, 1.0, 2.0, 2.0], [[0.8, 0.5], [0.6, -1.0]])
    traj = rollout(np.zeros(3), sol, ctrl, None, step=0.01, sample_step=0.05)
    exact = closed_form_pose(Pose(0, 0, 0), sol, traj.times)
    np.testing.assert_allclose(traj.states, exact, atol=1e-8)


def test_first_collision_time():
    ctrl = Controller(make_plant("unicycle"), 0.2)
    cells = np.zeros((41, 41), np.int8)
    cells[20, 30] = 1                     # obstacle at (3.0, 2.0)
    grid = OccupancyGrid(0.1, (0.0, 0.0), cells)
    sol = ArcSolution.from_relative(0.0, [0.0, 4.0, 4.0], [[1.0, 0.0]])
    traj = rollout(np.array([0.0, 2.0, 0.0]), sol, ctrl, None)
    # the epsilon point x + 0.2 comes within 0.52 of x = 3.0 first at t = 2.3
    assert first_collision(traj, grid, d_min=0.52) == pytest.approx(2.3, abs=1e-9)
    assert first_collision(traj, OccupancyGrid(0.1, (0.0, 0.0), np.zeros_like(cells)), d_min=0.5) is None
