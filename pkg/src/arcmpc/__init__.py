"""Arc-based receding-horizon navigation for unicycle, first-order and inverted-pendulum robots."""

from .arcs import ArcSolution, arc_propagate, closed_form_pose, first_collision, rollout, scale_solution
from .control import Controller, TrackerGains
from .core import CostWeights, HorizonConfig, Pose, VelocityLimits, VelocityPair
from .mpc import MPCConfig, PlannerConfig, tick
from .optimizer import OptBudget
from .planner import OccupancyGrid, ReferenceTrajectory, plan_path, time_parameterize
from .plants import make_plant
from .sim import RunLog, Scenario, World, load_world, run_scenario

__all__ = [
    "ArcSolution", "Controller", "CostWeights", "HorizonConfig", "MPCConfig", "OccupancyGrid", "OptBudget",
    "PlannerConfig", "Pose", "ReferenceTrajectory", "RunLog", "Scenario", "TrackerGains", "VelocityLimits",
    "VelocityPair", "World", "arc_propagate", "closed_form_pose", "first_collision", "load_world",
    "make_plant", "plan_path", "rollout", "run_scenario", "scale_solution", "tick", "time_parameterize",
]
