"""Property suites behind ``arcmpc verify``: each returns a :class:`PropertyResult`."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .arcs import ArcSolution, PredictedTrajectory, closed_form_pose, first_collision, pack, propagate_arrays, \
    rollout_batch, scale_solution
from .control import Controller, lyapunov_tracking_check
from .core import CostWeights, HorizonConfig, Pose, epsilon_points
from .costs import terminal_cost
from .planner import OCCUPIED, OccupancyGrid, ReferenceTrajectory
from .plants import PLANTS, UNICYCLE, UnicyclePlant, make_plant


@dataclass
class PropertyResult:
    name: str
    passed: bool
    samples: int
    detail: str = ""
    elapsed: float = 0.0
    counterexample: dict | None = field(default=None)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"{status} {self.name} samples={self.samples} time={self.elapsed:.2f}s {self.detail}".rstrip()
        if self.counterexample is not None:
            items = " ".join(f"{k}={_show(v)}" for k, v in self.counterexample.items())
            text += f"\n  counterexample: {items}"
        return text


def _show(v) -> str:
    if isinstance(v, np.ndarray):
        return np.array2string(v, precision=6, separator=",").replace("\n", "")
    if isinstance(v, float):
        return f"{v:.6g}"
    return repr(v)


def _timed(fn):
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        res = fn(*args, **kwargs)
        res.elapsed = time.perf_counter() - start
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def closed_form_vs_rk4(n: int = 1000, seed: int = 0, step: float = 1e-3,
                       pos_tol: float = 1e-6, ang_tol: float = 1e-8) -> PropertyResult:
    """Closed-form arcs against RK4 integration of the unicycle for random (pose, v, omega, t)."""
    rng = np.random.default_rng(seed)
    pose = np.c_[rng.uniform(-5, 5, (n, 2)), rng.uniform(-np.pi, np.pi, n)]
    v = rng.uniform(-1, 1, n)
    w = rng.uniform(-2, 2, n)
    w[: n // 10] = 0.0                       # exercise the straight-line branch
    t = rng.uniform(0, 3, n)
    # integrate every tuple on a common grid scaled to its own duration
    n_steps = int(np.ceil(t.max() / step))
    h = t / n_steps
    x = pose.copy()
    plant = UnicyclePlant()
    u = np.c_[v, w]
    for _ in range(n_steps):
        k1 = plant.derivative(x, u)
        k2 = plant.derivative(x + 0.5 * h[:, None] * k1, u)
        k3 = plant.derivative(x + 0.5 * h[:, None] * k2, u)
        k4 = plant.derivative(x + h[:, None] * k3, u)
        x = x + h[:, None] / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    cf = np.stack(propagate_arrays(pose[:, 0], pose[:, 1], pose[:, 2], v, w, t), axis=1)
    pos_err = np.linalg.norm(cf[:, :2] - x[:, :2], axis=1)
    ang_err = np.abs(cf[:, 2] - x[:, 2])
    bad = np.flatnonzero((pos_err > pos_tol) | (ang_err > ang_tol))
    detail = f"max_pos_err={pos_err.max():.2e} max_ang_err={ang_err.max():.2e}"
    cex = None
    if len(bad):
        i = int(bad[0])
        cex = {"pose": pose[i], "v": float(v[i]), "omega": float(w[i]), "t": float(t[i]),
               "pos_err": float(pos_err[i]), "ang_err": float(ang_err[i])}
    return PropertyResult("closed_form_vs_rk4", not len(bad), n, detail, counterexample=cex)


def random_solution(rng: np.random.Generator, delta: float, n_arcs: int) -> ArcSolution:
    """Pure multi-arc solution (no tracking tail) with random switch times and velocities."""
    rel = np.r_[0.0, np.sort(rng.uniform(0, delta, n_arcs - 1)), delta, delta]
    theta = np.c_[rng.uniform(0.2, 1.0, n_arcs), rng.uniform(-1.5, 1.5, n_arcs)]
    return ArcSolution.from_relative(0.0, rel, theta)


def _dense_trajectory(start: Pose, sol: ArcSolution, times: np.ndarray, epsilon: float) -> PredictedTrajectory:
    poses = closed_form_pose(start, sol, times)
    eps = epsilon_points(poses[:, 0], poses[:, 1], poses[:, 2], epsilon)
    return PredictedTrajectory(times, poses, eps, np.zeros((len(times), 2)), np.zeros(len(times)), True, UNICYCLE)


def random_wall(rng: np.random.Generator, start: Pose, reach: float) -> OccupancyGrid:
    """A wall segment placed across a random bearing ahead of ``start``."""
    grid = OccupancyGrid.empty(8.0, 8.0, 0.05, origin=(-4.0, -4.0))
    ang = start.psi + rng.uniform(-1.0, 1.0)
    dist = rng.uniform(0.8, reach)
    center = np.array([start.x1, start.x2]) + dist * np.array([np.cos(ang), np.sin(ang)])
    normal = np.array([-np.sin(ang), np.cos(ang)])
    pts = center + np.outer(np.linspace(-1.5, 1.5, 121), normal)
    rows, cols = grid.world_to_cell(pts)
    ok = grid.in_bounds(rows, cols)
    cells = grid.cells.copy()
    cells[rows[ok], cols[ok]] = OCCUPIED
    return grid.with_cells(cells)


@_timed
def scaling_theorem(n: int = 500, seed: int = 0, scale_fn: Callable = scale_solution,
                    delta: float = 3.0, n_arcs: int = 3, alpha: float = 0.8, d_min: float = 0.25,
                    epsilon: float = 0.2, tol: float = 1e-9, dt: float = 1e-3) -> PropertyResult:
    """Scaled solutions retrace the original path, ``x_s(t) = x(s t)``, and avoid the first collision.

    ``scale_fn`` is the scaling implementation under test (swappable so the
    harness itself can be checked against a broken one).
    """
    rng = np.random.default_rng(seed)
    times = np.arange(0.0, delta + 0.5 * dt, dt)
    worst = 0.0
    collided = 0
    for k in range(n):
        start = Pose(0.0, 0.0, rng.uniform(-np.pi, np.pi))
        sol = random_solution(rng, delta, n_arcs)
        grid = random_wall(rng, start, 2.5)
        t_c = first_collision(_dense_trajectory(start, sol, times, epsilon), grid, d_min)
        if t_c is None or t_c <= dt:
            t_c = delta                      # no collision: scale by alpha over the full horizon
        else:
            collided += 1
        s = alpha * t_c / delta
        scaled = scale_fn(sol, t_c, alpha)
        xs = closed_form_pose(start, scaled, times)
        xo = closed_form_pose(start, sol, s * times)
        err = float(np.max(np.abs(xs - xo)))
        worst = max(worst, err)
        hit = first_collision(_dense_trajectory(start, scaled, times, epsilon), grid, d_min) if t_c < delta else None
        if err > tol or hit is not None:
            i = int(np.argmax(np.max(np.abs(xs - xo), axis=1)))
            cex = {"switch_times": sol.switch_times, "params": sol.params.ravel(), "s": s, "t": float(times[i]),
                   "x_s": xs[i], "x_st": xo[i], "collision_after_scaling": hit}
            return PropertyResult("scaling_theorem", False, k + 1, f"max_err={err:.2e}", counterexample=cex)
    return PropertyResult("scaling_theorem", True, n, f"max_err={worst:.2e} with_collision={collided}")


@_timed
def tracker_lyapunov(robot: str, n: int = 10_000, seed: int = 0, epsilon: float = 0.2) -> PropertyResult:
    """Sampled derivative of the tracker's Lyapunov function is negative away from the target."""
    rep = lyapunov_tracking_check(Controller(make_plant(robot), epsilon), n, seed, min_error=1e-9)
    return PropertyResult(f"lyapunov_{robot}", rep.passed, rep.samples,
                          f"negative={rep.negative} worst={rep.worst:.3e}")


def _hold_rollouts(ctrl: Controller, starts: np.ndarray, goal, duration: float, step: float):
    """Track the constant reference ``goal`` from every start state."""
    ref = ReferenceTrajectory.constant(goal, 0.0)
    sol = ArcSolution.all_tracking(0.0, duration, 1)
    taus, thetas = pack([sol])
    out = []
    for x0 in starts:
        out.append(rollout_batch(ctrl, x0, 0.0, taus, thetas, ref, duration, step, step))
    return out


def _ball_starts(rng, ctrl: Controller, goal, radius: float, n: int) -> np.ndarray:
    """Start states whose epsilon point lies inside the ball, at rest."""
    plant = ctrl.plant
    starts = []
    for _ in range(n):
        r = radius * np.sqrt(rng.uniform(0, 0.95))
        a = rng.uniform(-np.pi, np.pi)
        psi = rng.uniform(-np.pi, np.pi)
        y = goal + r * np.array([np.cos(a), np.sin(a)])
        center = y - ctrl.epsilon * np.array([np.cos(psi), np.sin(psi)])
        starts.append(plant.initial_state(Pose(center[0], center[1], psi)))
    return np.array(starts)


@_timed
def ball_invariance(robot: str, n: int = 100, seed: int = 0, duration: float = 10.0,
                    horizon: HorizonConfig = HorizonConfig()) -> PropertyResult:
    """Starting inside the terminal ball with the goal held fixed, the epsilon point never leaves it."""
    rng = np.random.default_rng(seed)
    ctrl = Controller(make_plant(robot), horizon.epsilon)
    goal = np.zeros(2)
    starts = _ball_starts(rng, ctrl, goal, horizon.delta_ball, n)
    worst = 0.0
    for x0, batch in zip(starts, _hold_rollouts(ctrl, starts, goal, duration, horizon.rollout_step)):
        d = np.linalg.norm(batch.eps[0] - goal, axis=1)
        worst = max(worst, float(d.max()))
        if not batch.ok[0] or d.max() >= horizon.delta_ball:
            k = int(np.argmax(d))
            return PropertyResult(f"ball_invariance_{robot}", False, n, f"max_dist={d.max():.4f}",
                                  counterexample={"x0": x0, "t": float(batch.times[k]), "dist": float(d[k])})
    return PropertyResult(f"ball_invariance_{robot}", True, n,
                          f"max_dist={worst:.4f} radius={horizon.delta_ball}")


@_timed
def terminal_decrease(n: int = 100, seed: int = 0, duration: float = 5.0,
                      horizon: HorizonConfig = HorizonConfig(), weights: CostWeights = CostWeights()) -> PropertyResult:
    """The terminal cost strictly decreases along the unicycle tracker's flow towards a held goal."""
    rng = np.random.default_rng(seed)
    ctrl = Controller(make_plant("unicycle"), horizon.epsilon)
    goal = np.zeros(2)
    starts = _ball_starts(rng, ctrl, goal, horizon.delta_ball, n)
    for x0, batch in zip(starts, _hold_rollouts(ctrl, starts, goal, duration, 0.05)):
        psi = np.array([terminal_cost(y, goal, weights, horizon.delta_ball) for y in batch.eps[0]])
        moving = np.linalg.norm(batch.eps[0, :-1] - goal, axis=1) > 1e-6
        inc = np.diff(psi)[moving]
        if np.any(inc >= 0):
            k = int(np.flatnonzero(moving)[np.argmax(inc)])
            return PropertyResult("terminal_decrease_unicycle", False, n, f"max_increase={inc.max():.3e}",
                                  counterexample={"x0": x0, "t": float(batch.times[k])})
    return PropertyResult("terminal_decrease_unicycle", True, n)


@_timed
def barrier_admissibility(settings, ticks: int = 150) -> PropertyResult:
    """Every tick whose initialization kept the terminal barrier ends with an admissible solution."""
    from .sim import run_scenario
    from dataclasses import replace
    sc = settings.build(strategy="behaviors")
    sc = replace(sc, timeout=ticks * sc.mpc.horizon.delta_execute)
    log = run_scenario(sc)
    with_barrier = [h for h in log.history if h.barrier]
    bad = [h for h in with_barrier if not h.admissible]
    cex = None
    if bad:
        cex = {"t0": bad[0].t0, "label": bad[0].label, "J": bad[0].J_total}
    return PropertyResult("barrier_admissibility", not bad, len(with_barrier),
                          f"violations={len(bad)} ticks={len(log.history)}", counterexample=cex)


def run_suite(settings=None, seed: int = 0, quick: bool = False) -> list[PropertyResult]:
    """All property checks; ``quick`` shrinks sample counts."""
    f = 10 if quick else 1
    results = [
        closed_form_vs_rk4(1000 // f, seed),
        scaling_theorem(500 // f, seed),
        tracker_lyapunov("unicycle", 10_000 // f, seed),
        tracker_lyapunov("pendulum", 10_000 // f, seed),
    ]
    results += [ball_invariance(name, 100 // f, seed) for name in PLANTS]
    results.append(terminal_decrease(100 // f, seed))
    if settings is not None:
        results.append(barrier_admissibility(settings, 150 // f))
    return results
