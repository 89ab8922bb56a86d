"""Running and terminal costs with log barriers on obstacles, the terminal set and tilt."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .arcs import (ArcSolution, PredictedTrajectory, RolloutBatch, pack, reference_table,
                   rollout_batch)
from .control import Controller
from .core import INF_COST, CostWeights, HorizonConfig
from .planner import OccupancyGrid, ReferenceTrajectory

l_goal = K.l_goal
l_avoid = K.l_avoid
tilt_barrier = K.tilt_barrier

TERM_NAMES = ("velocity", "obstacle", "tilt", "terminal_quadratic", "terminal_barrier", "terminal_velocity")


def weight_vector(w: CostWeights, delta_ball: float, k_p: float = 1.0) -> np.ndarray:
    W = np.zeros(K.N_WEIGHTS)
    W[K.W_RHO:K.W_RHO + 6] = [w.rho1, w.rho2, w.rho3, w.rho4, w.rho5, w.rho6]
    W[K.W_A_GOAL] = w.a_goal_slope
    W[K.W_A_AVOID] = w.a_avoid_slope
    W[K.W_D_MIN] = w.d_min
    W[K.W_D_MAX] = w.d_max
    W[K.W_V_D] = w.v_desired
    W[K.W_PHI_MAX] = w.phi_max
    W[K.W_DELTA] = delta_ball
    W[K.W_RHO7] = w.rho7
    W[K.W_KP] = k_p
    return W


def terminal_cost(y_end, y_d_end, weights: CostWeights, delta_ball: float, barrier: bool = True) -> float:
    """Quadratic pull towards ``y_d_end`` plus a log barrier on the open ball of radius ``delta_ball``."""
    e = np.asarray(y_end, float) - np.asarray(y_d_end, float)
    quad, bar = K.terminal_terms(e[0], e[1], weights.rho4, weights.rho5 if barrier else 0.0, delta_ball)
    return float(quad + bar)


def inst_cost(y, vel, obstacles, weights: CostWeights, y_goal, delta_ball: float, phi: float | None = None) -> float:
    """Instantaneous cost at epsilon point ``y`` with velocities ``vel = (v, omega)``.

    ``obstacles`` is an ``(M, 2)`` array of occupied points or an
    :class:`OccupancyGrid`.  The tilt barrier is added when ``phi`` is given.
    Returns ``inf`` when an obstacle lies within ``d_min``.
    """
    if isinstance(obstacles, OccupancyGrid):
        obstacles = obstacles.occupied_points
    y = np.asarray(y, float)
    v, w = (vel.v, vel.omega) if hasattr(vel, "v") else vel
    gate = l_goal(float(np.linalg.norm(y - np.asarray(y_goal, float))), delta_ball, weights.a_goal_slope)
    cost = gate * (0.5 * weights.rho1 * (weights.v_desired - v) ** 2 + 0.5 * weights.rho2 * w**2)
    if len(obstacles):
        cost += 0.5 * weights.rho3 * K.avoid_sum(y[0], y[1], np.ascontiguousarray(obstacles, float),
                                                 weights.d_min, weights.d_max, weights.a_avoid_slope)
    if phi is not None:
        cost += tilt_barrier(phi, weights.phi_max, weights.rho6)
    return float(cost)


@dataclass(frozen=True)
class CostReport:
    running_integral: float
    terminal: float
    total: float
    barrier_hit: bool
    decomposition: dict
    collision_time: float | None = None
    min_clearance: float = np.inf

    @property
    def finite(self) -> bool:
        return not self.barrier_hit


@dataclass
class CostBatch:
    total: np.ndarray
    terms: np.ndarray
    hit: np.ndarray
    collision_index: np.ndarray
    clearance: np.ndarray
    coarse: np.ndarray

    def quadrature_error(self, k: int) -> float:
        """Richardson estimate of the running-integral quadrature error."""
        if self.hit[k]:
            return 0.0
        return abs(float(self.terms[k, :3].sum()) - float(self.coarse[k])) / 3.0

    def report(self, k: int, times) -> CostReport:
        terms = self.terms[k]
        hit = bool(self.hit[k])
        running = INF_COST if hit else float(terms[:3].sum())
        terminal = INF_COST if hit else float(terms[3:].sum())
        tc = None if self.collision_index[k] < 0 else float(times[self.collision_index[k]])
        return CostReport(running, terminal, float(self.total[k]), hit,
                          dict(zip(TERM_NAMES, map(float, terms))), tc, float(self.clearance[k]))


def cost_batch(batch: RolloutBatch, obstacles: np.ndarray, y_goal, y_d_end, weights: CostWeights,
               delta_ball: float, *, barrier: bool = True, r_robot: float = 0.25,
               margin: float = 0.0, k_p: float = 1.0) -> CostBatch:
    """Trapezoidal running cost plus terminal cost for every rollout in ``batch``.

    ``y_d_end`` is the reference position at the horizon end, optionally
    followed by the reference velocity (taken as zero when omitted).

    Any infinite term (obstacle within ``d_min``, robot disk touching an
    obstacle, endpoint outside the terminal ball while ``barrier`` is on, tilt
    beyond ``phi_max``, failed rollout) yields ``INF_COST`` and ``hit``.
    """
    n_k = batch.states.shape[0]
    out = CostBatch(np.empty(n_k), np.empty((n_k, K.N_TERMS)), np.empty(n_k, np.bool_),
                    np.empty(n_k, np.int64), np.empty(n_k), np.empty(n_k))
    dt = float(batch.times[1] - batch.times[0]) if len(batch.times) > 1 else 0.0
    phi = batch.states[..., 5] if batch.kind == 2 else np.zeros(batch.states.shape[:2])
    yd = np.zeros(4)
    y_d_end = np.ravel(np.asarray(y_d_end, float))
    yd[:len(y_d_end)] = y_d_end
    K.cost_batch(np.ascontiguousarray(batch.states[..., :2]), np.ascontiguousarray(batch.eps),
                 np.ascontiguousarray(batch.vel), np.ascontiguousarray(phi), batch.ok,
                 np.ascontiguousarray(obstacles, float).reshape(-1, 2),
                 np.asarray(y_goal, float), yd, weight_vector(weights, delta_ball, k_p), dt,
                 barrier, batch.kind == 2, r_robot, margin,
                 out.terms, out.total, out.hit, out.collision_index, out.clearance, out.coarse)
    return out


def total_cost(traj: PredictedTrajectory, grid: OccupancyGrid, reference: ReferenceTrajectory,
               weights: CostWeights, delta_ball: float, *, barrier: bool = True, r_robot: float = 0.25,
               margin: float = 0.0, k_p: float = 1.0) -> CostReport:
    """Cost of a single predicted trajectory against ``reference`` (see :func:`cost_batch`)."""
    batch = RolloutBatch(traj.times, traj.states[None], traj.epsilon_track[None], traj.velocities[None],
                         traj.phi_d[None], np.array([traj.ok]), traj.kind)
    y, ydot, _ = reference.sample(traj.times[-1])
    res = cost_batch(batch, grid.occupied_points, reference.goal, np.r_[y, ydot],
                     weights, delta_ball, barrier=barrier, r_robot=r_robot, margin=margin, k_p=k_p)
    return res.report(0, traj.times)


@dataclass
class HorizonProblem:
    """Everything needed to cost candidate solutions at one tick.

    ``obstacles`` should already be restricted to the neighbourhood reachable
    within the horizon.  ``n_evals`` counts costed candidates.
    """

    ctrl: Controller
    x0: np.ndarray
    t0: float
    horizon: HorizonConfig
    reference: ReferenceTrajectory
    obstacles: np.ndarray
    weights: CostWeights
    barrier: bool = True
    r_robot: float = 0.25
    margin: float = 0.0
    n_evals: int = 0

    def __post_init__(self):
        h = self.horizon
        self.x0 = np.ascontiguousarray(self.x0, dtype=float)
        self.obstacles = np.ascontiguousarray(self.obstacles, dtype=float).reshape(-1, 2)
        self._ref_table = reference_table(self.reference, self.t0, h.rollout_step, h.n_steps)
        y, ydot, _ = self.reference.sample(self.t0 + h.delta)
        self.y_d_end = np.asarray(y, float)
        self._yd_state = np.r_[y, ydot]
        self.y_goal = self.reference.goal

    @property
    def limits(self):
        return self.ctrl.plant.limits

    def rollout(self, taus, thetas) -> RolloutBatch:
        h = self.horizon
        return rollout_batch(self.ctrl, self.x0, self.t0, taus, thetas, self.reference, h.delta,
                             h.rollout_step, h.sample_step, ref_table=self._ref_table)

    def cost(self, batch: RolloutBatch, barrier: bool | None = None) -> CostBatch:
        return cost_batch(batch, self.obstacles, self.y_goal, self._yd_state, self.weights,
                          self.horizon.delta_ball, barrier=self.barrier if barrier is None else barrier,
                          r_robot=self.r_robot, margin=self.margin, k_p=self.ctrl.gains.k_p)

    def evaluate(self, taus, thetas) -> tuple[RolloutBatch, CostBatch]:
        batch = self.rollout(taus, thetas)
        self.n_evals += batch.states.shape[0]
        return batch, self.cost(batch)

    def evaluate_solutions(self, sols: list[ArcSolution]) -> tuple[RolloutBatch, CostBatch]:
        return self.evaluate(*pack(sols))

    def shifted_costs(self, sols: list[ArcSolution], shift: float, count: int = 1) -> np.ndarray:
        """Costs each solution would have ``shift``, ``2 shift``, ... ``count shift`` seconds
        later if executed exactly; shape ``(len(sols), count)``.

        The rollout is extended past the horizon with the reference tracker and
        costed on the windows ``[t0 + j shift, t0 + j shift + delta]``.
        """
        h = self.horizon
        stride = int(round(shift / h.sample_step))
        if stride <= 0 or abs(stride * h.sample_step - shift) > 1e-9:
            raise ValueError("shift must be a positive multiple of the sample step")
        if count < 1:
            raise ValueError("count must be positive")
        taus, thetas = pack(sols)
        taus = taus.copy()
        taus[:, -1] += count * shift
        batch = rollout_batch(self.ctrl, self.x0, self.t0, taus, thetas, self.reference,
                              h.delta + count * shift, h.rollout_step, h.sample_step)
        self.n_evals += len(sols)
        n_win = h.n_samples
        out = np.empty((len(sols), count))
        for j in range(1, count + 1):
            w = slice(j * stride, j * stride + n_win)
            window = RolloutBatch(batch.times[w], batch.states[:, w], batch.eps[:, w], batch.vel[:, w],
                                  batch.phi_d[:, w], batch.ok, batch.kind)
            y, ydot, _ = self.reference.sample(self.t0 + j * shift + h.delta)
            out[:, j - 1] = cost_batch(window, self.obstacles, self.y_goal, np.r_[y, ydot], self.weights,
                                       h.delta_ball, barrier=self.barrier, r_robot=self.r_robot,
                                       margin=self.margin, k_p=self.ctrl.gains.k_p).total
        return out

    def cost_vectors(self, vecs: np.ndarray) -> np.ndarray:
        """Total cost for decision vectors ``[tau_1..tau_N, theta]`` (rows)."""
        vecs = np.atleast_2d(vecs)
        n = self.horizon.n_arcs
        taus = np.concatenate([np.zeros((len(vecs), 1)), vecs[:, :n],
                               np.full((len(vecs), 1), self.horizon.delta)], axis=1)
        thetas = vecs[:, n:].reshape(len(vecs), n, 2)
        return self.evaluate(taus, thetas)[1].total
