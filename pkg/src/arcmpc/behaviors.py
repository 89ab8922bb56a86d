"""Behavior-based initialization: candidate arc solutions, rescaling and selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .arcs import ArcSolution, scale_solution
from .core import INF_COST, Pose, VelocityPair
from .costs import CostReport, HorizonProblem


@dataclass(frozen=True)
class BehaviorConfig:
    n_circle: int = 20
    n_half_ring: int = 10
    tail_fraction: float = 0.5
    turn_lengths: tuple[float, ...] = (0.0, 0.125, 0.25, 0.375, 0.5)
    turn_rate: float = 1.0
    turn_speed_fraction: float = 0.5
    target_fractions: tuple[float, ...] = (0.5, 0.75, 1.0)
    alpha: float = 0.8

    def __post_init__(self):
        if self.n_circle < 1:
            raise ValueError("n_circle must be positive")
        if not 0 <= self.tail_fraction < 1:
            raise ValueError("tail_fraction must lie in [0, 1)")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")


def speed_circle(radius: float, count: int) -> np.ndarray:
    """``count`` (v, omega) points evenly spaced on a circle, starting straight ahead."""
    ang = 2 * np.pi * np.arange(count) / count
    pts = radius * np.c_[np.cos(ang), np.sin(ang)]
    pts[np.abs(pts) < 1e-15] = 0.0
    return pts


def _candidate_speeds(problem: HorizonProblem, cfg: BehaviorConfig) -> np.ndarray:
    lim = problem.limits
    v_d = min(problem.weights.v_desired, lim.v_max)
    pts = speed_circle(v_d, cfg.n_circle)
    if cfg.n_half_ring:
        pts = np.vstack([pts, speed_circle(0.5 * v_d, cfg.n_half_ring)])
    pts[:, 0] = np.clip(pts[:, 0], lim.v_min, lim.v_max)
    pts[:, 1] = np.clip(pts[:, 1], -lim.omega_max, lim.omega_max)
    return pts


def gen_single_arc(problem: HorizonProblem, cfg: BehaviorConfig) -> list[ArcSolution]:
    """Same (v, omega) on every interval, no tracking tail."""
    h = problem.horizon
    return [ArcSolution.single_arc(problem.t0, h.delta, h.n_arcs, VelocityPair(v, w))
            for v, w in _candidate_speeds(problem, cfg)]


def gen_arc_then_reference(problem: HorizonProblem, cfg: BehaviorConfig) -> list[ArcSolution]:
    """Single arcs for the first part of the horizon, then the tracking tail.

    The final arc's speed is set to the reference speed at the switch, keeping
    its curvature.
    """
    if cfg.tail_fraction == 0:
        return gen_single_arc(problem, cfg)
    h = problem.horizon
    t_n = (1.0 - cfg.tail_fraction) * h.delta
    rel = np.r_[t_n * np.arange(h.n_arcs) / h.n_arcs, t_n, h.delta]
    v_ref = float(np.linalg.norm(problem.reference.sample(problem.t0 + t_n)[1]))
    lim = problem.limits
    out = []
    for v, w in _candidate_speeds(problem, cfg):
        theta = np.tile([v, w], (h.n_arcs, 1))
        if abs(v) > 1e-12:
            v_last = min(v_ref, lim.v_max) if v > 0 else -min(v_ref, -lim.v_min)
            theta[-1] = [v_last, np.clip(w * v_last / v, -lim.omega_max, lim.omega_max)]
        out.append(ArcSolution.from_relative(problem.t0, rel, theta))
    return out


def gen_turn(problem: HorizonProblem, cfg: BehaviorConfig) -> list[ArcSolution]:
    """Straight, then a quarter turn, then straight again; both directions, several lengths."""
    h = problem.horizon
    if h.n_arcs < 2:
        return []
    lim = problem.limits
    v = min(problem.weights.v_desired, lim.v_max)
    rate = min(cfg.turn_rate, lim.omega_max)
    v_turn = cfg.turn_speed_fraction * v
    t_turn = 0.5 * math.pi / rate
    out = []
    for direction in (1.0, -1.0):
        for frac in cfg.turn_lengths:
            t1 = min(frac * h.delta, h.delta)
            t2 = min(t1 + t_turn, h.delta)
            if h.n_arcs == 2:
                rel = np.r_[0.0, t1, t2, h.delta]      # tracking after the turn
            else:
                rel = np.r_[0.0, t1, t2, np.full(h.n_arcs - 1, h.delta)]
            theta = np.zeros((h.n_arcs, 2))
            theta[:, 0] = v
            theta[1] = [v_turn, direction * rate]
            out.append(ArcSolution.from_relative(problem.t0, rel, theta))
    return out


def point_to_point_arc(pose: Pose, target, duration: float, epsilon: float = 0.0) -> VelocityPair | None:
    """Constant (v, omega) that carries the point ``epsilon`` ahead of ``pose`` onto ``target``.

    With ``epsilon = 0`` this is the circle through the target tangent to the
    current heading.  Returns ``None`` when the swept angle exceeds pi.
    """
    c, s = math.cos(pose.psi), math.sin(pose.psi)
    dx, dy = np.asarray(target, float) - (pose.x1, pose.x2)
    tx, ty = c * dx + s * dy, -s * dx + c * dy      # target in the body frame
    if abs(ty) < 1e-12:
        if tx < epsilon:
            return None
        return VelocityPair((tx - epsilon) / duration, 0.0)
    radius = (tx * tx + ty * ty - epsilon * epsilon) / (2.0 * ty)
    if abs(radius) < 1e-9:
        return None
    a = np.array([epsilon, -radius])               # epsilon point relative to the turn center
    b = np.array([tx, ty - radius])
    ang = math.atan2(a[0] * b[1] - a[1] * b[0], a @ b)
    sweep = ang % (2 * math.pi) if radius > 0 else (-ang) % (2 * math.pi)
    if sweep > math.pi:
        return None
    v = abs(radius) * sweep / duration
    return VelocityPair(v, v / radius)


def gen_point_to_point(problem: HorizonProblem, cfg: BehaviorConfig) -> list[ArcSolution]:
    """Arcs reaching points sampled from the reference, followed by tracking."""
    h = problem.horizon
    pose = problem.ctrl.plant.pose(problem.x0)
    lim = problem.limits
    out = []
    for frac in cfg.target_fractions:
        t = frac * h.delta
        target = problem.reference.position(problem.t0 + t)
        vel = point_to_point_arc(pose, target, t, problem.ctrl.epsilon)
        if vel is None or not vel.within(lim):
            continue
        rel = np.r_[0.0, np.full(h.n_arcs, t), h.delta]
        out.append(ArcSolution.from_relative(problem.t0, rel, np.tile([vel.v, vel.omega], (h.n_arcs, 1))))
    return out


def stop_solution(t0: float, delta: float, n_arcs: int) -> ArcSolution:
    return ArcSolution.single_arc(t0, delta, n_arcs, VelocityPair(0.0, 0.0))


def evasive_parameters(problem: HorizonProblem, current: VelocityPair, alpha: float = 0.8) -> ArcSolution:
    """Keep the current arc but slow it down below the predicted collision; stop if that fails."""
    h = problem.horizon
    sol = ArcSolution.single_arc(problem.t0, h.delta, h.n_arcs, current.clipped(problem.limits))
    stop = stop_solution(problem.t0, h.delta, h.n_arcs)
    for _ in range(3):
        batch, costs = problem.evaluate_solutions([sol])
        idx = int(costs.collision_index[0])
        if idx < 0 and batch.ok[0]:
            return sol
        t_c = float(batch.times[idx] - problem.t0) if idx >= 0 else 0.0
        if t_c <= h.sample_step:
            return stop
        sol = scale_solution(sol, t_c, alpha)
    return stop


@dataclass
class InitResult:
    solution: ArcSolution
    report: CostReport | None
    label: str
    n_candidates: int
    costs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def finite(self) -> bool:
        return self.report is not None and not self.report.barrier_hit


def _select(costs: np.ndarray, sols: list[ArcSolution], labels: list[str]) -> int:
    finite = costs < INF_COST
    if not finite.any():
        return -1
    best = costs[finite].min()
    tol = 1e-12 * max(1.0, abs(best))
    tied = [i for i in np.flatnonzero(costs <= best + tol)]
    for i in tied:
        if labels[i] == "previous":
            return int(i)
    return int(min(tied, key=lambda i: (abs(sols[i].params[0, 1]), i)))


def certified_depth(problem: HorizonProblem, sols: list[ArcSolution], costs: np.ndarray, shift: float,
                    count: int = 1) -> np.ndarray:
    """Number of successive shifts by ``shift`` (up to ``count``) over which each solution's
    cost keeps from growing, the horizon being extended by the tracker.  Infinite-cost
    solutions get depth 0."""
    depth = np.zeros(len(sols), int)
    finite = np.flatnonzero(costs < INF_COST)
    if len(finite):
        later = problem.shifted_costs([sols[i] for i in finite], shift, count)
        chain = np.c_[costs[finite], later]
        tol = 1e-12 * np.maximum(1.0, np.abs(chain[:, :-1]))
        good = np.diff(chain, axis=1) <= tol
        depth[finite] = np.where(good.all(axis=1), count, np.argmin(good, axis=1))
    return depth


def certified(problem: HorizonProblem, sols: list[ArcSolution], costs: np.ndarray, shift: float,
              count: int = 1) -> np.ndarray:
    """Whether each solution's cost keeps from growing over ``count`` successive shifts."""
    return certified_depth(problem, sols, costs, shift, count) == count


def initialize(problem: HorizonProblem, previous: ArcSolution | None, cfg: BehaviorConfig,
               current: VelocityPair | None = None, behaviors: bool = True,
               certify_shift: float | None = None, certify_count: int = 1) -> InitResult:
    """Evaluate the shifted previous solution, the all-tracking solution and the behavior
    candidates (colliding ones rescaled), and return the cheapest finite one.

    With ``certify_shift`` the choice is restricted to candidates that cost no
    more than the carried-over solution and, among those, to the ones whose cost
    keeps from growing over the most successive shifts, up to ``certify_count``
    (see :func:`certified_depth`).
    When nothing is finite the result holds a stop solution and ``report`` is None.
    """
    h = problem.horizon
    sols, labels = [], []
    if previous is not None:
        sols.append(previous.shifted(problem.t0))
        labels.append("previous")
    sols.append(ArcSolution.all_tracking(problem.t0, h.delta, h.n_arcs, current))
    labels.append("tracking")
    if behaviors:
        for name, gen in (("single", gen_single_arc), ("arc+ref", gen_arc_then_reference),
                          ("turn", gen_turn), ("p2p", gen_point_to_point)):
            cands = gen(problem, cfg)
            sols.extend(cands)
            labels.extend([name] * len(cands))
        if current is not None:
            sols.append(ArcSolution.single_arc(problem.t0, h.delta, h.n_arcs, current.clipped(problem.limits)))
            labels.append("current")
    batch, costs = problem.evaluate_solutions(sols)
    totals = costs.total.copy()
    reports_from = [(costs, batch.times, i) for i in range(len(sols))]
    if behaviors:
        scaled, origin = [], []
        for i, idx in enumerate(costs.collision_index):
            if idx > 0:
                t_c = float(batch.times[idx] - problem.t0)
                cand = scale_solution(sols[i], t_c, cfg.alpha)
                if cand is not sols[i]:
                    scaled.append(cand)
                    origin.append(labels[i])
        if scaled:
            sbatch, scosts = problem.evaluate_solutions(scaled)
            sols.extend(scaled)
            labels.extend(f"{lab}/scaled" for lab in origin)
            totals = np.concatenate([totals, scosts.total])
            reports_from.extend((scosts, sbatch.times, i) for i in range(len(scaled)))
    if certify_shift is not None:
        # among candidates no worse than the carried-over solution, keep those certified the
        # furthest ahead
        cap = totals[0] if previous is not None and totals[0] < INF_COST else INF_COST
        depth = certified_depth(problem, sols, totals, certify_shift, certify_count)
        depth[totals > cap] = -1
        best = depth.max()
        if best > 0:
            totals = np.where(depth == best, totals, INF_COST)
    k = _select(totals, sols, labels)
    if k < 0:
        return InitResult(stop_solution(problem.t0, h.delta, h.n_arcs), None, "stop", len(sols), totals)
    src, times, i = reports_from[k]
    return InitResult(sols[k], src.report(i, times), labels[k], len(sols), totals)
