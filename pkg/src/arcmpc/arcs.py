"""Closed-form arcs, multi-arc solutions, rollouts, collision checks and time scaling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .control import Controller
from .core import Pose, VelocityPair, epsilon_points, wrap_angles
from .planner import OccupancyGrid, ReferenceTrajectory

OMEGA_EPS = 1e-8


def arc_propagate(start: Pose, vel: VelocityPair, t: float) -> Pose:
    """Exact pose after moving for ``t`` seconds at constant ``(v, omega)``."""
    x1, x2, psi = propagate_arrays(start.x1, start.x2, start.psi, vel.v, vel.omega, t)
    return Pose(float(x1), float(x2), float(psi))


def propagate_arrays(x1, x2, psi, v, omega, t):
    """Vectorized closed-form arc; returns unwrapped heading ``psi + omega t``."""
    x1, x2, psi, v, omega, t = np.broadcast_arrays(*(np.asarray(a, float) for a in (x1, x2, psi, v, omega, t)))
    straight = np.abs(omega) < OMEGA_EPS
    w = np.where(straight, 1.0, omega)
    psi_t = psi + omega * t
    r = v / w
    nx = np.where(straight, x1 + v * t * np.cos(psi), x1 + r * (np.sin(psi_t) - np.sin(psi)))
    ny = np.where(straight, x2 + v * t * np.sin(psi), x2 + r * (np.cos(psi) - np.cos(psi_t)))
    return nx, ny, psi_t


@dataclass(frozen=True)
class ArcSolution:
    """Switch times ``tau_0..tau_{N+1}`` (absolute) and arc velocities ``theta_0..theta_{N-1}``.

    On ``[tau_i, tau_{i+1})`` for ``i < N`` the robot regulates to ``theta_i``; on
    ``[tau_N, tau_{N+1}]`` it tracks the reference (the tracking tail, present
    when ``tau_N < tau_{N+1}``).
    """

    switch_times: np.ndarray
    params: np.ndarray

    def __post_init__(self):
        tau = np.array(self.switch_times, dtype=float)
        theta = np.array(self.params, dtype=float).reshape(-1, 2)
        if len(tau) != len(theta) + 2:
            raise ValueError("need N + 2 switch times for N arcs")
        if np.any(np.diff(tau) < -1e-12):
            raise ValueError("switch times must be non-decreasing")
        tau.setflags(write=False)
        theta.setflags(write=False)
        object.__setattr__(self, "switch_times", tau)
        object.__setattr__(self, "params", theta)

    @property
    def n_arcs(self) -> int:
        return len(self.params)

    @property
    def t0(self) -> float:
        return float(self.switch_times[0])

    @property
    def horizon(self) -> float:
        return float(self.switch_times[-1] - self.switch_times[0])

    @property
    def tracking_tail(self) -> bool:
        return bool(self.switch_times[-2] < self.switch_times[-1])

    @property
    def relative_times(self) -> np.ndarray:
        return self.switch_times - self.switch_times[0]

    def velocities(self) -> list[VelocityPair]:
        return [VelocityPair(float(v), float(w)) for v, w in self.params]

    @classmethod
    def from_relative(cls, t0: float, rel_times, params) -> "ArcSolution":
        return cls(t0 + np.asarray(rel_times, float), params)

    @classmethod
    def all_tracking(cls, t0: float, delta: float, n_arcs: int, vel: VelocityPair | None = None) -> "ArcSolution":
        """Track the reference over the whole horizon; the (zero-length) arcs carry ``vel``."""
        params = np.zeros((n_arcs, 2)) if vel is None else np.tile([vel.v, vel.omega], (n_arcs, 1))
        return cls(np.r_[np.full(n_arcs + 1, t0), t0 + delta], params)

    def snapped(self, step: float) -> "ArcSolution":
        """Switch times rounded to the ``step`` grid relative to ``t0``.

        Rollouts switch controllers at the nearest step boundary; snapping makes
        finer integrators (whose grid contains this one) switch at the same instants.
        """
        rel = self.relative_times
        # a rollout step is governed by the controller active at its midpoint
        snapped = np.minimum(np.ceil(rel / step - 0.5) * step, rel[-1])
        snapped[-1] = rel[-1]
        return ArcSolution(self.t0 + np.maximum.accumulate(snapped), self.params)

    def with_idle_arcs(self, vel: VelocityPair) -> "ArcSolution":
        """Same trajectory, with zero-length arcs given continuous velocities.

        Leading empty arcs take ``vel``; later ones copy the preceding arc.  The
        rollout is unchanged, but stretching such an arc is now a small
        perturbation rather than a sudden stop.
        """
        params = self.params.copy()
        durations = np.diff(self.switch_times[:-1])
        for i in range(self.n_arcs):
            if durations[i] <= 0.0:
                params[i] = [vel.v, vel.omega] if i == 0 else params[i - 1]
        return ArcSolution(self.switch_times, params)

    @classmethod
    def single_arc(cls, t0: float, delta: float, n_arcs: int, vel: VelocityPair) -> "ArcSolution":
        tau = t0 + delta * np.r_[np.arange(n_arcs) / n_arcs, 1.0, 1.0]
        return cls(tau, np.tile([vel.v, vel.omega], (n_arcs, 1)))

    def shifted(self, t_new: float) -> "ArcSolution":
        """Re-anchor at ``t_new``: elapsed switch times clamp to ``t_new`` and the
        horizon end moves to ``t_new + horizon`` (extending the tracking tail)."""
        tau = np.maximum(self.switch_times, t_new)
        tau[0] = t_new
        tau[-1] = t_new + self.horizon
        return ArcSolution(tau, self.params)

    def mode_at(self, t: float) -> int:
        return int(K.mode_at(self.relative_times, self.n_arcs, t - self.t0))

    def vector(self) -> np.ndarray:
        """Decision vector ``[tau_1..tau_N (relative), theta (flattened)]``."""
        return np.concatenate([self.relative_times[1:-1], self.params.ravel()])

    @classmethod
    def from_vector(cls, t0: float, delta: float, vec) -> "ArcSolution":
        vec = np.asarray(vec, float)
        n = (len(vec)) // 3
        return cls.from_relative(t0, np.r_[0.0, vec[:n], delta], vec[n:].reshape(n, 2))


def pack(solutions: list[ArcSolution]) -> tuple[np.ndarray, np.ndarray]:
    taus = np.stack([s.relative_times for s in solutions])
    thetas = np.stack([s.params for s in solutions])
    return np.ascontiguousarray(taus), np.ascontiguousarray(thetas)


def closed_form_pose(start: Pose, sol: ArcSolution, t_rel) -> np.ndarray:
    """Poses of the pure-arc part of ``sol`` at relative times (tracking tail ignored).

    Returns ``(len(t_rel), 3)`` with unwrapped headings.
    """
    t_rel = np.atleast_1d(np.asarray(t_rel, float))
    tau = sol.relative_times
    out = np.empty((len(t_rel), 3))
    # pose at the start of every arc
    starts = [(start.x1, start.x2, start.psi)]
    for i in range(sol.n_arcs):
        v, w = sol.params[i]
        starts.append(tuple(float(a) for a in propagate_arrays(*starts[-1], v, w, tau[i + 1] - tau[i])))
    idx = np.clip(np.searchsorted(tau[1:sol.n_arcs], t_rel, side="right"), 0, sol.n_arcs - 1)
    base = np.array(starts)[idx]
    dt = np.minimum(t_rel, tau[sol.n_arcs]) - tau[idx]
    v, w = sol.params[idx, 0], sol.params[idx, 1]
    out[:, 0], out[:, 1], out[:, 2] = propagate_arrays(base[:, 0], base[:, 1], base[:, 2], v, w, dt)
    return out


@dataclass(frozen=True)
class PredictedTrajectory:
    """Sampled rollout: absolute ``times``, full ``states``, epsilon points,
    velocities ``(v, omega)`` and the pendulum's desired tilt."""

    times: np.ndarray
    states: np.ndarray
    epsilon_track: np.ndarray
    velocities: np.ndarray
    phi_d: np.ndarray
    ok: bool
    kind: int

    @property
    def centers(self) -> np.ndarray:
        return self.states[:, :2]

    @property
    def headings(self) -> np.ndarray:
        return self.states[:, K.heading_index(self.kind)]

    @property
    def tilt(self) -> np.ndarray:
        return self.states[:, 5] if self.kind == 2 else np.zeros(len(self.times))


@dataclass
class RolloutBatch:
    times: np.ndarray          # (S,) absolute
    states: np.ndarray         # (K, S, n)
    eps: np.ndarray            # (K, S, 2)
    vel: np.ndarray            # (K, S, 2)
    phi_d: np.ndarray          # (K, S)
    ok: np.ndarray             # (K,)
    kind: int

    def trajectory(self, k: int) -> PredictedTrajectory:
        return PredictedTrajectory(self.times, self.states[k], self.eps[k], self.vel[k],
                                   self.phi_d[k], bool(self.ok[k]), self.kind)


def reference_table(reference: ReferenceTrajectory | None, t0: float, step: float, n_steps: int) -> np.ndarray:
    """Reference rows ``[y, ydot, yddot]`` on the RK4 half-step grid."""
    if reference is None:
        return np.zeros((2 * n_steps + 1, 6))
    return np.ascontiguousarray(reference.stacked(t0 + 0.5 * step * np.arange(2 * n_steps + 1)))


def rollout_batch(ctrl: Controller, x0, t0: float, taus, thetas, reference: ReferenceTrajectory | None,
                  duration: float, step: float, sample_step: float, ref_table=None) -> RolloutBatch:
    """Roll out many solutions (relative ``taus``, ``thetas``) from ``x0`` with RK4."""
    n_steps = int(round(duration / step))
    stride = int(round(sample_step / step))
    if n_steps % stride:
        raise ValueError("duration must be a multiple of sample_step")
    taus = np.ascontiguousarray(taus, dtype=float)
    thetas = np.ascontiguousarray(thetas, dtype=float)
    n_k = taus.shape[0]
    n_s = n_steps // stride + 1
    x0 = np.ascontiguousarray(x0, dtype=float)
    states = np.empty((n_k, n_s, len(x0)))
    vel = np.empty((n_k, n_s, 2))
    phi_d = np.empty((n_k, n_s))
    ok = np.empty(n_k, dtype=np.bool_)
    if ref_table is None:
        ref_table = reference_table(reference, t0, step, n_steps)
    K.rollout_batch(ctrl.kind, x0, taus, thetas, ctrl.plant.param_vector(), ctrl.vector, ref_table,
                    step, n_steps, stride, states, vel, phi_d, ok)
    psi = states[..., K.heading_index(ctrl.kind)]
    eps = epsilon_points(states[..., 0], states[..., 1], psi, ctrl.epsilon)
    return RolloutBatch(t0 + sample_step * np.arange(n_s), states, eps, vel, phi_d, ok, ctrl.kind)


def rollout(start, sol: ArcSolution, ctrl: Controller, reference: ReferenceTrajectory | None,
            step: float = 0.01, sample_step: float = 0.05) -> PredictedTrajectory:
    """Simulate ``sol`` from state ``start`` over its horizon."""
    taus, thetas = pack([sol])
    return rollout_batch(ctrl, start, sol.t0, taus, thetas, reference, sol.horizon,
                         step, sample_step).trajectory(0)


def first_collision(traj: PredictedTrajectory, grid: OccupancyGrid, d_min: float,
                    r_robot: float = 0.0, margin: float = 0.0) -> float | None:
    """First sample time at which the epsilon point is within ``d_min`` of an occupied
    cell, or the robot disk of radius ``r_robot`` touches one.  Unknown counts as free."""
    obstacles = grid.occupied_points
    if len(obstacles) == 0:
        return None
    idx = K.first_collision_index(np.ascontiguousarray(traj.centers), np.ascontiguousarray(traj.epsilon_track),
                                  obstacles, d_min, r_robot, margin)
    return None if idx < 0 else float(traj.times[idx])


def scale_solution(sol: ArcSolution, t_c: float, alpha: float = 0.8) -> ArcSolution:
    """Slow ``sol`` down so the path up to the first collision is not reached within the horizon.

    ``t_c`` is the collision time relative to ``sol.t0``.  Velocities are
    multiplied by ``s = alpha t_c / horizon`` and relative switch times divided
    by ``s`` (clamped to the horizon end).  For ``s >= 1`` the input is returned.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if t_c <= 0:
        raise ValueError("t_c must be positive")
    s = alpha * t_c / sol.horizon
    if s >= 1:
        return sol
    rel = np.minimum(sol.relative_times / s, sol.horizon)
    rel[-1] = sol.horizon
    return ArcSolution.from_relative(sol.t0, rel, sol.params * s)


def wrapped_heading_error(a, b):
    return np.abs(wrap_angles(np.asarray(a) - np.asarray(b)))
