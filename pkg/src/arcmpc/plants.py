"""Plant models: unicycle, first-order velocity plant and wheeled inverted pendulum.

State layouts (plain float arrays, leading batch dimensions allowed):

* unicycle      ``[x1, x2, psi]``, input ``[v, omega]``
* first order   ``[x1, x2, psi, v, omega]``, input ``[u1, u2]``
* pendulum      ``[x1, x2, v, psi, omega, phi, phidot]``, input ``[u1, u2]``
  where ``u1 = alpha + beta`` and ``u2 = alpha - beta`` are sums and
  differences of the two wheel torques.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, ClassVar

import numpy as np

from .core import Pose, VelocityLimits, VelocityPair, angle_normalize

UNICYCLE, FIRST_ORDER, PENDULUM = 0, 1, 2

#: Published linearization constants of the reference pendulum robot.
PUBLISHED_LINEARIZATION = {"a13": 2.1639, "a43": 72.4858, "b11": -1.6687, "b21": 0.0290, "b41": -24.1514}


@dataclass(frozen=True)
class FirstOrderParams:
    a1: float = -3.0
    a2: float = -3.0
    b1: float = 3.0
    b2: float = 3.0
    a_max: float = 0.1
    alpha_max: float = 2.0

    def __post_init__(self):
        if self.b1 == 0 or self.b2 == 0:
            raise ValueError("b1 and b2 must be nonzero")
        if self.a_max <= 0 or self.alpha_max <= 0:
            raise ValueError("acceleration limits must be positive")

    def as_vector(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.b1, self.b2, self.a_max, self.alpha_max])


@dataclass(frozen=True)
class PendulumParams:
    """Physical parameters of the two-wheeled inverted pendulum.

    The defaults were fitted so that the linearization reproduces the
    published constants of the reference robot (see ``PUBLISHED_LINEARIZATION``).
    """

    m_c: float = 2.02476112
    m_s: float = 2.78635179
    d: float = 0.1546376
    L: float = 0.40391426
    R: float = 0.07310645
    I2: float = 0.10390243
    I3: float = 0.00454659
    g: float = 9.81

    def __post_init__(self):
        for name in ("m_c", "m_s", "d", "L", "R", "I2", "I3", "g"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def as_vector(self) -> np.ndarray:
        return np.array([self.m_c, self.m_s, self.d, self.L, self.R, self.I2, self.I3, self.g])

    @cached_property
    def linearization(self) -> dict:
        """Closed-form constants of ``z' = A z + B u`` at the upright equilibrium.

        ``z = [v, omega, phi, phidot]``; the only nonzero entries are
        ``A[0,2] = a13, A[3,2] = a43, B[0,0] = b11, B[1,1] = b21, B[3,0] = b41``.
        """
        mc, ms, d, L, R, I2, I3, g = self.as_vector()
        D = 2 * d**2 * ms**2 + 3 * mc * d**2 * ms + 3 * I3 * ms + 3 * I3 * mc
        return {
            "a13": float(d**2 * g * ms**2 / D),
            "a43": float(3 * d * g * ms * (ms + mc) / D),
            "b11": float(-(ms * d**2 + R * ms * d + I3) / (R * D)),
            "b21": float(2 * L * R / (6 * mc * L**2 * R**2 + 2 * I2 * R**2 + mc)),
            "b41": float(-(3 * R * mc + 3 * R * ms + d * ms) / (R * D)),
        }


def linear_matrices(const: dict) -> tuple[np.ndarray, np.ndarray]:
    """Assemble ``(A, B)`` for ``z = [v, omega, phi, phidot]`` from linearization constants."""
    A = np.zeros((4, 4))
    B = np.zeros((4, 2))
    A[0, 2] = const["a13"]
    A[2, 3] = 1.0
    A[3, 2] = const["a43"]
    B[0, 0] = const["b11"]
    B[1, 1] = const["b21"]
    B[3, 0] = const["b41"]
    return A, B


# ---------------------------------------------------------------------------
# derivatives


def unicycle_derivative(state, vel) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    if isinstance(vel, VelocityPair):
        vel = (vel.v, vel.omega)
    vel = np.asarray(vel, dtype=float)
    v, w = vel[..., 0], vel[..., 1]
    psi = state[..., 2]
    return np.stack(np.broadcast_arrays(v * np.cos(psi), v * np.sin(psi), w), axis=-1)


def first_order_derivative(state, u, params: FirstOrderParams) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    u = np.asarray(u, dtype=float)
    psi, v, w = state[..., 2], state[..., 3], state[..., 4]
    vdot = np.clip(params.a1 * v + params.b1 * u[..., 0], -params.a_max, params.a_max)
    wdot = np.clip(params.a2 * w + params.b2 * u[..., 1], -params.alpha_max, params.alpha_max)
    return np.stack(np.broadcast_arrays(v * np.cos(psi), v * np.sin(psi), w, vdot, wdot), axis=-1)


def _pendulum_accelerations(state, u, p: PendulumParams):
    v, w, phi, phid = state[..., 2], state[..., 4], state[..., 5], state[..., 6]
    u1, u2 = u[..., 0], u[..., 1]
    s, c = np.sin(phi), np.cos(phi)
    msd = p.m_s * p.d
    # translation and tilt equations are coupled through vdot and phiddot
    a11 = 3 * (p.m_c + p.m_s)
    a12 = -msd * c
    r1 = -u1 / p.R - msd * s * (phid**2 + w**2)
    a21 = msd * c
    a22 = -(msd * p.d + p.I3)
    r2 = u1 - msd * p.d * s * c * phid**2 - msd * p.g * s
    det = a11 * a22 - a12 * a21
    if np.any(np.abs(det) < 1e-12):
        raise np.linalg.LinAlgError("singular pendulum mass matrix")
    vdot = (r1 * a22 - a12 * r2) / det
    phidd = (a11 * r2 - a21 * r1) / det
    J = (3 * p.L**2 + 1 / (2 * p.R**2)) * p.m_c + msd * p.d * s**2 + p.I2
    psidd = (p.L / p.R * u2 - msd * p.d * s * c * w * phid) / J
    return vdot, psidd, phidd


def pendulum_derivative(state, u, params: PendulumParams) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    u = np.asarray(u, dtype=float)
    v, psi, w, phid = state[..., 2], state[..., 3], state[..., 4], state[..., 6]
    vdot, psidd, phidd = _pendulum_accelerations(state, u, params)
    return np.stack(np.broadcast_arrays(v * np.cos(psi), v * np.sin(psi), vdot, w, psidd, phid, phidd),
                    axis=-1)


def pendulum_residuals(state, u, deriv, p: PendulumParams) -> np.ndarray:
    """Residuals of the three coupled equations of motion at a candidate derivative."""
    state, u, deriv = (np.asarray(a, dtype=float) for a in (state, u, deriv))
    w, phi, phid = state[..., 4], state[..., 5], state[..., 6]
    vdot, psidd, phidd = deriv[..., 2], deriv[..., 4], deriv[..., 6]
    u1, u2 = u[..., 0], u[..., 1]
    s, c = np.sin(phi), np.cos(phi)
    M = p.m_c + p.m_s
    J = (3 * p.L**2 + 1 / (2 * p.R**2)) * p.m_c + p.m_s * p.d**2 * s**2 + p.I2
    e1 = 3 * M * vdot - p.m_s * p.d * c * phidd + p.m_s * p.d * s * (phid**2 + w**2) + u1 / p.R
    e2 = J * psidd + p.m_s * p.d**2 * s * c * w * phid - p.L / p.R * u2
    e3 = (p.m_s * p.d * c * vdot - (p.m_s * p.d**2 + p.I3) * phidd
          + p.m_s * p.d**2 * s * c * phid**2 + p.m_s * p.g * p.d * s - u1)
    return np.stack([e1, e2, e3], axis=-1)


def pendulum_energy(state, p: PendulumParams) -> np.ndarray:
    """Kinetic plus potential energy of the translation/tilt subsystem (omega = 0)."""
    state = np.asarray(state, dtype=float)
    v, phi, phid = state[..., 2], state[..., 5], state[..., 6]
    kinetic = (1.5 * (p.m_c + p.m_s) * v**2 - p.m_s * p.d * np.cos(phi) * v * phid
               + 0.5 * (p.m_s * p.d**2 + p.I3) * phid**2)
    return kinetic + p.m_s * p.g * p.d * np.cos(phi)


def pendulum_nonconservative_power(state, p: PendulumParams) -> np.ndarray:
    """Power of the ``phidot**2`` coupling term in the tilt equation (zero torque, omega = 0)."""
    state = np.asarray(state, dtype=float)
    phi, phid = state[..., 5], state[..., 6]
    return p.m_s * p.d**2 * np.sin(phi) * np.cos(phi) * phid**3


# ---------------------------------------------------------------------------
# plant objects


@dataclass(frozen=True)
class UnicyclePlant:
    limits: VelocityLimits = field(default_factory=VelocityLimits)

    kind: ClassVar[int] = UNICYCLE
    n_states: ClassVar[int] = 3
    name: ClassVar[str] = "unicycle"

    def derivative(self, state, u):
        return unicycle_derivative(state, u)

    def param_vector(self) -> np.ndarray:
        return np.zeros(1)

    def initial_state(self, pose: Pose, v: float = 0.0, omega: float = 0.0) -> np.ndarray:
        return np.array([pose.x1, pose.x2, pose.psi])

    @staticmethod
    def pose(state) -> Pose:
        return Pose(state[0], state[1], state[2])

    @staticmethod
    def heading(state):
        return state[..., 2]

    @staticmethod
    def velocity(state):
        """Velocities are inputs for the unicycle; they are not part of its state."""
        return None

    @staticmethod
    def tilt(state) -> float:
        return 0.0


@dataclass(frozen=True)
class FirstOrderPlant:
    params: FirstOrderParams = field(default_factory=FirstOrderParams)
    limits: VelocityLimits = field(default_factory=VelocityLimits)

    kind: ClassVar[int] = FIRST_ORDER
    n_states: ClassVar[int] = 5
    name: ClassVar[str] = "firstorder"

    def derivative(self, state, u):
        return first_order_derivative(state, u, self.params)

    def param_vector(self) -> np.ndarray:
        return self.params.as_vector()

    def initial_state(self, pose: Pose, v: float = 0.0, omega: float = 0.0) -> np.ndarray:
        return np.array([pose.x1, pose.x2, pose.psi, v, omega])

    @staticmethod
    def pose(state) -> Pose:
        return Pose(state[0], state[1], state[2])

    @staticmethod
    def heading(state):
        return state[..., 2]

    @staticmethod
    def velocity(state) -> VelocityPair:
        return VelocityPair(float(state[3]), float(state[4]))

    @staticmethod
    def tilt(state) -> float:
        return 0.0


@dataclass(frozen=True)
class PendulumPlant:
    params: PendulumParams = field(default_factory=PendulumParams)
    limits: VelocityLimits = field(default_factory=VelocityLimits)

    kind: ClassVar[int] = PENDULUM
    n_states: ClassVar[int] = 7
    name: ClassVar[str] = "pendulum"

    def derivative(self, state, u):
        return pendulum_derivative(state, u, self.params)

    def param_vector(self) -> np.ndarray:
        return self.params.as_vector()

    def initial_state(self, pose: Pose, v: float = 0.0, omega: float = 0.0) -> np.ndarray:
        return np.array([pose.x1, pose.x2, v, pose.psi, omega, 0.0, 0.0])

    @staticmethod
    def pose(state) -> Pose:
        return Pose(state[0], state[1], state[3])

    @staticmethod
    def heading(state):
        return state[..., 3]

    @staticmethod
    def velocity(state) -> VelocityPair:
        return VelocityPair(float(state[2]), float(state[4]))

    @staticmethod
    def tilt(state) -> float:
        return float(state[5])


Plant = UnicyclePlant | FirstOrderPlant | PendulumPlant

PLANTS = {cls.name: cls for cls in (UnicyclePlant, FirstOrderPlant, PendulumPlant)}


def make_plant(name: str, **kwargs) -> Plant:
    try:
        return PLANTS[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown robot {name!r}; choose from {sorted(PLANTS)}") from None


def numeric_linearization(params: PendulumParams, h: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference Jacobians of ``[v, omega, phi, phidot]`` dynamics at the upright rest state."""
    idx = [2, 4, 5, 6]          # z components inside the full state
    rate = [2, 4, 5, 6]         # derivative components giving z'
    x0 = np.zeros(7)
    u0 = np.zeros(2)
    A = np.zeros((4, 4))
    B = np.zeros((4, 2))
    for j, k in enumerate(idx):
        dx = np.zeros(7)
        dx[k] = h
        A[:, j] = (pendulum_derivative(x0 + dx, u0, params)[rate]
                   - pendulum_derivative(x0 - dx, u0, params)[rate]) / (2 * h)
    for j in range(2):
        du = np.zeros(2)
        du[j] = h
        B[:, j] = (pendulum_derivative(x0, u0 + du, params)[rate]
                   - pendulum_derivative(x0, u0 - du, params)[rate]) / (2 * h)
    return A, B


# ---------------------------------------------------------------------------
# integration


def rk4_step(f: Callable, t: float, x: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, x)
    k2 = f(t + h / 2, x + h / 2 * k1)
    k3 = f(t + h / 2, x + h / 2 * k2)
    k4 = f(t + h, x + h * k3)
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(plant: Plant, state, control_law: Callable, duration: float, step: float):
    """Fixed-step RK4 integration of ``plant`` under ``control_law(t, x) -> u``.

    ``state`` may carry leading batch dimensions.  Returns ``(times, states)``
    with ``states[k]`` the state at ``times[k]``; the last sample sits exactly
    at ``duration`` (the final step is shortened if needed).
    """
    if step <= 0 or duration < 0:
        raise ValueError("need step > 0 and duration >= 0")
    x = np.array(state, dtype=float)
    n_full = int(math.floor(duration / step + 1e-9))
    times = [step * k for k in range(n_full + 1)]
    if duration - times[-1] > 1e-9 * max(1.0, duration):
        times.append(duration)
    times[-1] = duration if len(times) > 1 else 0.0

    def f(t, z):
        return plant.derivative(z, control_law(t, z))

    out = [x]
    for k in range(1, len(times)):
        x = rk4_step(f, times[k - 1], x, times[k] - times[k - 1])
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite state at t={times[k]:.6g}")
        out.append(x)
    return np.asarray(times), np.stack(out)
