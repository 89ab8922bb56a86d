"""The receding-horizon loop: replanning, initialization, refinement and bookkeeping."""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .arcs import ArcSolution
from .behaviors import BehaviorConfig, InitResult, certified_depth, evasive_parameters, initialize
from .control import Controller
from .core import INF_COST, CostWeights, HorizonConfig, VelocityPair, epsilon_points
from .costs import HorizonProblem
from .optimizer import OptBudget, refine
from .planner import OccupancyGrid, ReferenceTrajectory, plan_path, reference_collision_time, time_parameterize
from .plants import UNICYCLE

STRATEGIES = ("tracking", "behaviors", "refine")


class Mode(enum.Enum):
    INIT = "Init"
    NOMINAL = "Nominal"
    COLLISION_REPLAN = "CollisionReplan"
    GOAL_DWELL = "GoalDwell"


@dataclass(frozen=True)
class PlannerConfig:
    inflation: float = 0.3
    v_cruise: float = 0.9
    a_cap: float = 0.09
    curvature_cap: float = 1.0
    omega_cap: float = 0.8
    fillet_clearance: float = 0.28
    retime_distance: float = 1.0
    retime_interval: float = 2.0
    reference: str = "planned"     # "planned" (A* + fillets) or "goal" (hold the goal point)

    def __post_init__(self):
        if self.reference not in ("planned", "goal"):
            raise ValueError("planner reference must be 'planned' or 'goal'")


@dataclass(frozen=True)
class MPCConfig:
    horizon: HorizonConfig = field(default_factory=HorizonConfig)
    weights: CostWeights = field(default_factory=CostWeights)
    behaviors: BehaviorConfig = field(default_factory=BehaviorConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    budget: OptBudget = field(default_factory=OptBudget)
    r_robot: float = 0.25
    strategy: str = "refine"
    collision_margin: float | None = None
    certify_dwell: bool = True     # once the reference rests at the goal, only pick non-increasing solutions
    certify_steps: int = 5         # number of future ticks over which that is checked

    def __post_init__(self):
        if self.certify_steps < 1:
            raise ValueError("certify_steps must be positive")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        limit = self.budget.wall_clock_limit
        if limit is not None and limit >= self.horizon.delta_execute:
            raise ValueError("optimizer wall-clock budget must be below delta_execute")

    def margin(self, v_max: float) -> float:
        if self.collision_margin is not None:
            return self.collision_margin
        return 0.5 * v_max * self.horizon.sample_step


@dataclass(frozen=True)
class TickInfo:
    t0: float
    mode: Mode
    admissible: bool
    barrier: bool
    J_total: float
    J_running: float
    J_terminal: float
    terms: dict
    quadrature_error: float
    label: str
    n_candidates: int
    n_evals: int
    replanned: bool
    reference_collision: bool
    solution_collision: bool
    predicted_clearance: float
    init_cost: float
    wall_time: float
    path_found: bool = True


@dataclass(frozen=True)
class LoopState:
    t0: float
    goal: np.ndarray
    current_solution: ArcSolution | None = None
    reference: ReferenceTrajectory | None = None
    mode: Mode = Mode.INIT
    admissible: bool = False
    last_velocity: VelocityPair = VelocityPair(0.0, 0.0)
    budget_scale: float = 1.0
    last_retime: float = -np.inf
    metrics: TickInfo | None = None
    path_found: bool = True

    def with_goal(self, goal) -> "LoopState":
        """New goal: the reference is re-planned on the next tick."""
        return replace(self, goal=np.asarray(goal, float), reference=None, mode=Mode.INIT)


@dataclass(frozen=True)
class Command:
    """Controls for the next ``duration`` seconds: run ``solution`` against ``reference``."""

    solution: ArcSolution
    reference: ReferenceTrajectory
    duration: float


def initial_loop_state(t0: float, goal) -> LoopState:
    return LoopState(t0=t0, goal=np.asarray(goal, float))


def current_velocity(ctrl: Controller, state, loop: LoopState) -> VelocityPair:
    if ctrl.kind == UNICYCLE:
        return loop.last_velocity
    return ctrl.plant.velocity(state)


def epsilon_state(ctrl: Controller, state, vel: VelocityPair) -> tuple[np.ndarray, np.ndarray]:
    """Epsilon point and its velocity."""
    psi = float(ctrl.plant.heading(np.asarray(state)))
    y = epsilon_points(state[0], state[1], psi, ctrl.epsilon)
    c, s = np.cos(psi), np.sin(psi)
    ydot = vel.v * np.array([c, s]) + ctrl.epsilon * vel.omega * np.array([-s, c])
    return y, ydot


def plan_reference(grid: OccupancyGrid, y, ydot, goal, t0: float, cfg: MPCConfig) -> ReferenceTrajectory | None:
    """A* path from ``y`` to ``goal`` turned into a reference starting at the current speed."""
    pc = cfg.planner
    path = plan_path(grid, y, goal, pc.inflation)
    if len(path) == 0:
        return None
    if len(path) >= 2:
        d = path[1] - path[0]
        v_start = float(max(np.dot(ydot, d) / max(np.linalg.norm(d), 1e-12), 0.0))
    else:
        v_start = 0.0
    return time_parameterize(path, min(pc.v_cruise, cfg.weights.v_desired), pc.a_cap, pc.curvature_cap,
                             omega_cap=pc.omega_cap, v_start=v_start, t_start=t0,
                             clearance_fn=grid.clearance_at, min_clearance=pc.fillet_clearance)


def make_problem(ctrl: Controller, cfg: MPCConfig, state, t0: float, reference: ReferenceTrajectory,
                 grid: OccupancyGrid, barrier: bool = True) -> HorizonProblem:
    h = cfg.horizon
    lim = ctrl.plant.limits
    margin = cfg.margin(lim.v_max)
    reach = lim.v_max * h.delta + ctrl.epsilon + cfg.weights.d_max + cfg.r_robot + margin + grid.resolution
    obstacles = grid.obstacles_near(np.asarray(state)[:2], reach)
    return HorizonProblem(ctrl, state, t0, h, reference, obstacles, cfg.weights, barrier,
                          cfg.r_robot, margin)


def check_admissible(sol: ArcSolution, state, reference: ReferenceTrajectory, grid: OccupancyGrid,
                     ctrl: Controller, cfg: MPCConfig) -> tuple[bool, str]:
    """Whether ``sol`` keeps the epsilon point clear of obstacles and ends in the terminal ball."""
    problem = make_problem(ctrl, cfg, state, sol.t0, reference, grid)
    batch, costs = problem.evaluate_solutions([sol])
    if not batch.ok[0]:
        return False, "rollout failed"
    if costs.collision_index[0] >= 0:
        return False, "collision"
    end = batch.eps[0, -1]
    if np.linalg.norm(end - problem.y_d_end) >= cfg.horizon.delta_ball:
        return False, "terminal"
    if costs.hit[0]:
        return False, "tilt"
    return True, "admissible"


def _choose(problem: HorizonProblem, loop: LoopState, cfg: MPCConfig, vel: VelocityPair,
            certify_shift: float | None) -> InitResult:
    previous = loop.current_solution
    if cfg.strategy == "tracking":
        return initialize(problem, None, cfg.behaviors, behaviors=False)
    return initialize(problem, previous, cfg.behaviors, current=vel, certify_shift=certify_shift,
                      certify_count=cfg.certify_steps)


def tick(loop: LoopState, grid: OccupancyGrid, state, ctrl: Controller, cfg: MPCConfig) -> tuple[Command, LoopState]:
    """One pass of the receding-horizon loop at time ``loop.t0``."""
    start = time.perf_counter()
    state = np.asarray(state, float)
    t0 = loop.t0
    h = cfg.horizon
    vel = current_velocity(ctrl, state, loop)
    y, ydot = epsilon_state(ctrl, state, vel)
    reference = loop.reference
    replanned = False
    last_retime = loop.last_retime
    path_found = loop.path_found

    ref_hit = False
    if cfg.planner.reference == "goal":
        if reference is None:
            reference = ReferenceTrajectory.constant(loop.goal, t0)
            replanned = True
    elif reference is not None:
        tc = reference_collision_time(reference, grid, (t0, max(reference.goal_time, t0 + h.delta)),
                                      cfg.weights.d_min, h.sample_step)
        ref_hit = tc is not None
    lost = (cfg.planner.reference == "planned" and reference is not None and not loop.admissible and t0 - last_retime >= cfg.planner.retime_interval
            and np.linalg.norm(y - reference.position(t0)) > cfg.planner.retime_distance)
    if reference is None or ref_hit or lost:
        new_ref = plan_reference(grid, y, ydot, loop.goal, t0, cfg)
        replanned = True
        last_retime = t0
        path_found = new_ref is not None
        if new_ref is None:
            # no path on the current map: hold position until the map changes
            new_ref = ReferenceTrajectory.constant(y, t0)
        reference = new_ref

    problem = make_problem(ctrl, cfg, state, t0, reference, grid, barrier=True)
    sol_hit = False
    if loop.current_solution is not None:
        _, prev_costs = problem.evaluate_solutions([loop.current_solution.shifted(t0)])
        sol_hit = bool(prev_costs.collision_index[0] >= 0)

    dwell = cfg.certify_dwell and t0 >= reference.goal_time
    shift = h.delta_execute if dwell else None
    result = _choose(problem, loop, cfg, vel, shift)
    barrier = True
    if not result.finite:
        # no admissible candidate: drop the terminal barrier and keep the quadratic pull
        problem.barrier = False
        barrier = False
        result = _choose(problem, loop, cfg, vel, shift)
    if result.report is None:
        sol = evasive_parameters(problem, vel, cfg.behaviors.alpha)
        label = "evasive"
    else:
        sol = result.solution
        label = result.label

    init_cost = result.report.total if result.report is not None else INF_COST
    if cfg.strategy == "refine" and result.report is not None:
        budget = cfg.budget
        if loop.budget_scale < 1.0 and budget.wall_clock_limit is not None:
            budget = OptBudget(budget.wall_clock_limit * loop.budget_scale, budget.max_evals, budget.step_scales)
        refined, res = refine(sol, problem, budget, initial_cost=init_cost, current=vel.clipped(ctrl.plant.limits))
        if refined is not sol and dwell:
            depth = certified_depth(problem, [refined, sol], np.array([res.cost, init_cost]),
                                    h.delta_execute, cfg.certify_steps)
            if depth[0] >= depth[1]:
                sol = refined
        else:
            sol = refined

    sol = sol.snapped(h.rollout_step)
    batch, costs = problem.evaluate_solutions([sol])
    rep = costs.report(0, batch.times)
    admissible = barrier and not rep.barrier_hit
    if t0 >= reference.goal_time and admissible:
        mode = Mode.GOAL_DWELL
    elif ref_hit or sol_hit:
        mode = Mode.COLLISION_REPLAN
    elif loop.mode == Mode.INIT and loop.current_solution is None:
        mode = Mode.INIT
    else:
        mode = Mode.NOMINAL

    wall = time.perf_counter() - start
    scale = loop.budget_scale
    if cfg.budget.wall_clock_limit is not None:
        scale = max(scale / 2, 0.125) if wall > h.delta_execute else min(1.0, scale * 2)
    info = TickInfo(t0, mode, admissible, barrier, rep.total, rep.running_integral, rep.terminal,
                    rep.decomposition, costs.quadrature_error(0), label, result.n_candidates, problem.n_evals,
                    replanned, ref_hit, sol_hit, rep.min_clearance, init_cost, wall, path_found)
    # for the unicycle the simulator records the velocity actually commanded
    new_loop = LoopState(t0 + h.delta_execute, loop.goal, sol, reference, mode, admissible,
                         loop.last_velocity, scale, last_retime, info, path_found)
    return Command(sol, reference, h.delta_execute), new_loop


@dataclass
class ConvergenceReport:
    costs: np.ndarray
    increases: np.ndarray
    tolerances: np.ndarray
    violations: int
    dwell_ticks: int

    @property
    def passed(self) -> bool:
        return self.violations == 0


def goal_convergence_monitor(history: list[TickInfo], tol: float = 1e-6) -> ConvergenceReport:
    """Check that the per-tick cost never increases across consecutive goal-dwell ticks.

    The allowance for each step is ``tol`` plus the quadrature error estimates of both ticks.
    """
    J, inc, tols = [], [], []
    violations = 0
    dwell = 0
    prev = None
    for info in history:
        if info.mode != Mode.GOAL_DWELL:
            prev = None
            continue
        dwell += 1
        J.append(info.J_total)
        if prev is not None:
            d = info.J_total - prev.J_total
            allow = tol + info.quadrature_error + prev.quadrature_error
            inc.append(d)
            tols.append(allow)
            if d > allow:
                violations += 1
        prev = info
    return ConvergenceReport(np.array(J), np.array(inc), np.array(tols), violations, dwell)
