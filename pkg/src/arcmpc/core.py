"""Shared geometry, time and configuration types."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Largest finite float, used in place of +inf so downstream arithmetic stays finite.
INF_COST = float(np.finfo(np.float64).max)


def angle_normalize(theta: float) -> float:
    """Wrap ``theta`` into (-pi, pi]."""
    if not math.isfinite(theta):
        raise ValueError(f"cannot normalize non-finite angle {theta!r}")
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def wrap_angles(theta: np.ndarray) -> np.ndarray:
    """Vectorized :func:`angle_normalize` (no finiteness check)."""
    theta = np.asarray(theta, dtype=float)
    wrapped = np.remainder(theta + np.pi, 2.0 * np.pi) - np.pi
    return np.where(wrapped <= -np.pi, wrapped + 2.0 * np.pi, wrapped)


@dataclass(frozen=True)
class Pose:
    x1: float
    x2: float
    psi: float

    def __post_init__(self):
        object.__setattr__(self, "psi", angle_normalize(float(self.psi)))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x1, self.x2])

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.psi])


@dataclass(frozen=True)
class VelocityPair:
    v: float
    omega: float

    def within(self, limits: "VelocityLimits") -> bool:
        return (limits.v_min - 1e-12 <= self.v <= limits.v_max + 1e-12
                and abs(self.omega) <= limits.omega_max + 1e-12)

    def clipped(self, limits: "VelocityLimits") -> "VelocityPair":
        return VelocityPair(float(np.clip(self.v, limits.v_min, limits.v_max)),
                            float(np.clip(self.omega, -limits.omega_max, limits.omega_max)))


@dataclass(frozen=True)
class VelocityLimits:
    """Commanded velocity bounds.

    ``v_min = 0`` keeps arcs forward-only: the scanner never sees behind the
    robot, so reversing would drive into space that is only assumed free.
    """

    v_max: float = 1.0
    omega_max: float = 2.0
    v_min: float = 0.0

    def __post_init__(self):
        if self.v_max <= 0 or self.omega_max <= 0:
            raise ValueError("velocity limits must be positive")
        if not -self.v_max <= self.v_min <= 0:
            raise ValueError("need -v_max <= v_min <= 0")


@dataclass(frozen=True)
class EpsilonPoint:
    y1: float
    y2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.y1, self.y2])


def epsilon_point(pose: Pose, epsilon: float) -> EpsilonPoint:
    """Point a distance ``epsilon`` ahead of the robot along its heading."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return EpsilonPoint(pose.x1 + epsilon * math.cos(pose.psi),
                        pose.x2 + epsilon * math.sin(pose.psi))


def epsilon_points(x1, x2, psi, epsilon: float) -> np.ndarray:
    """Array version of :func:`epsilon_point`; returns shape ``(..., 2)``."""
    x1, x2, psi = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float),
                                      np.asarray(psi, float))
    return np.stack([x1 + epsilon * np.cos(psi), x2 + epsilon * np.sin(psi)], axis=-1)


@dataclass(frozen=True)
class HorizonConfig:
    """Receding-horizon timing and the terminal set.

    ``rollout_step`` is the RK4 step used for predictions, ``sample_step`` the
    spacing of the samples used for costing and collision checks.
    """

    delta: float = 3.0
    delta_execute: float = 0.2
    n_arcs: int = 3
    epsilon: float = 0.2
    delta_ball: float = 0.25
    rollout_step: float = 0.01
    sample_step: float = 0.05

    def __post_init__(self):
        if not 0 < self.delta_execute < self.delta:
            raise ValueError("need 0 < delta_execute < delta")
        if self.n_arcs < 1:
            raise ValueError("n_arcs must be at least 1")
        if self.epsilon <= 0 or self.delta_ball <= 0:
            raise ValueError("epsilon and delta_ball must be positive")
        for name in ("rollout_step", "sample_step"):
            step = getattr(self, name)
            if step <= 0:
                raise ValueError(f"{name} must be positive")
        ratio = self.sample_step / self.rollout_step
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("sample_step must be a multiple of rollout_step")
        n = self.delta / self.sample_step
        if abs(n - round(n)) > 1e-9:
            raise ValueError("delta must be a multiple of sample_step")

    @property
    def n_steps(self) -> int:
        return int(round(self.delta / self.rollout_step))

    @property
    def stride(self) -> int:
        return int(round(self.sample_step / self.rollout_step))

    @property
    def n_samples(self) -> int:
        return self.n_steps // self.stride + 1


@dataclass(frozen=True)
class CostWeights:
    rho1: float = 1.0
    rho2: float = 0.2
    rho3: float = 0.05
    rho4: float = 2.0
    rho5: float = 0.5
    rho6: float = 1.0
    rho7: float = 10.0
    a_goal_slope: float = 2.0
    a_avoid_slope: float = 1.0
    d_min: float = 0.25
    d_max: float = 1.5
    v_desired: float = 0.9
    phi_max: float = 0.5

    def __post_init__(self):
        if not self.d_min < self.d_max:
            raise ValueError("need d_min < d_max")
        for name in ("rho1", "rho2", "rho3", "rho4", "rho5", "rho6", "rho7"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.v_desired <= 0 or self.a_goal_slope <= 0 or self.a_avoid_slope <= 0:
            raise ValueError("slopes and v_desired must be positive")
        if self.phi_max <= 0:
            raise ValueError("phi_max must be positive")
