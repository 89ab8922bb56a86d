"""Slow a blocked multi-arc solution down so it stops short of a wall.

A three-arc solution heads into a wall.  Scaling its velocities by
``s = alpha t_c / horizon`` retraces the same path more slowly, so within the
horizon the robot only covers the collision-free prefix.
"""

import numpy as np

from arcmpc.arcs import ArcSolution, closed_form_pose, first_collision, rollout, scale_solution
from arcmpc.control import Controller
from arcmpc.core import Pose
from arcmpc.planner import OCCUPIED, OccupancyGrid
from arcmpc.plants import make_plant

ctrl = Controller(make_plant("unicycle"), 0.2)
start = Pose(0.5, 2.0, 0.0)
sol = ArcSolution([0.0, 1.0, 2.0, 3.0, 3.0], [[1.0, 0.3], [1.0, -0.3], [1.0, 0.0]])

cells = np.zeros((40, 60), np.int8)
cells[:, 25] = OCCUPIED                      # wall at x = 2.5 m
grid = OccupancyGrid(0.1, (0.0, 0.0), cells)

t_c = first_collision(rollout(ctrl.plant.initial_state(start), sol, ctrl, None), grid, d_min=0.25)
print(f"original solution collides at t_c = {t_c:.2f} s")

scaled = scale_solution(sol, t_c - sol.t0, alpha=0.8)
s = scaled.params[0, 0] / sol.params[0, 0]
print(f"scale factor s = {s:.3f}, scaled switch times {np.round(scaled.switch_times, 3)}")
print("scaled rollout collides:", first_collision(rollout(ctrl.plant.initial_state(start), scaled, ctrl, None),
                                                  grid, d_min=0.25))

t = np.linspace(0.0, 3.0, 7)
err = np.abs(closed_form_pose(start, scaled, t) - closed_form_pose(start, sol, s * t)).max()
print(f"max |x_s(t) - x(s t)| over the horizon: {err:.1e}")
