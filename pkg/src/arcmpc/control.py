"""Constant-velocity regulators and epsilon-point reference trackers for each plant."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_continuous_are

from . import _kernels as K
from .core import VelocityPair
from .plants import (FIRST_ORDER, PUBLISHED_LINEARIZATION, PENDULUM, UNICYCLE, Plant,
                     PendulumParams, pendulum_derivative)

PUBLISHED_K_PHI = (-8.5223, -0.9922)
PUBLISHED_P = ((2.8929, 0.0037), (0.0037, 0.0210))


def lqr(A, B, Q, R) -> np.ndarray:
    """Continuous-time LQR gain ``K`` for ``u = -K x``."""
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    Q, R = np.atleast_2d(Q), np.atleast_2d(R)
    P = solve_continuous_are(A, B, Q, R)
    return np.linalg.solve(R, B.T @ P)


def tilt_gain(const: dict) -> float:
    """Steady-state tilt that produces a unit forward acceleration under the tilt loop.

    With ``u1`` holding ``phi = phi_d`` (``u1 = -(a43/b41) phi_d``) the linear model
    gives ``vdot = (a13 - b11 a43 / b41) phi_d``; this returns the inverse factor.
    """
    return const["b41"] / (const["a13"] * const["b41"] - const["b11"] * const["a43"])


def printed_tilt_gain(const: dict) -> float:
    """Alternative tilt factor ``b41 a13 / (a13**2 b41 - b11 a43)``, kept for comparison."""
    a13, a43, b11, b41 = const["a13"], const["a43"], const["b11"], const["b41"]
    return b41 * a13 / (a13**2 * b41 - b11 * a43)


@dataclass(frozen=True)
class TrackerGains:
    """Tracker and regulator gains.

    ``k_v`` and the regulator gains default to identity-weight LQR designs.
    The pendulum velocity regulator uses its own weights because identity
    weights leave the heading loop with a time constant of tens of seconds.
    """

    k_p: float = 1.0
    k_d: float = 2.5
    k_v: np.ndarray | None = None
    k_phi: tuple[float, float] = PUBLISHED_K_PHI
    phi_d_max: float = 0.25
    linearization: str = "physical"      # or "published"
    pendulum_q: tuple[float, float, float] = (4.0, 1.0, 0.1)
    pendulum_r: float = 1.0
    pendulum_omega_q: float = 1.0
    pendulum_omega_r: float = 1e-4

    def __post_init__(self):
        if self.k_p <= 0:
            raise ValueError("k_p must be positive")
        if self.k_d < 0 or self.phi_d_max <= 0:
            raise ValueError("k_d must be nonnegative and phi_d_max positive")
        if self.linearization not in ("physical", "published"):
            raise ValueError("linearization must be 'physical' or 'published'")


def _hurwitz(M) -> bool:
    return bool(np.all(np.linalg.eigvals(np.atleast_2d(M)).real < 0))


@dataclass(frozen=True)
class Controller:
    """Plant-specific controller bundle with the packed gain vector used by rollouts."""

    plant: Plant
    epsilon: float
    gains: TrackerGains = field(default_factory=TrackerGains)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        object.__setattr__(self, "vector", self._build())

    @property
    def kind(self) -> int:
        return self.plant.kind

    def linear_constants(self) -> dict:
        if self.gains.linearization == "published":
            return dict(PUBLISHED_LINEARIZATION)
        params = self.plant.params if self.plant.kind == PENDULUM else PendulumParams()
        return {k: float(v) for k, v in params.linearization.items()}

    def _build(self) -> np.ndarray:
        g = self.gains
        G = np.zeros(K.N_GAINS)
        G[K.G_EPS] = self.epsilon
        G[K.G_KP] = g.k_p
        G[K.G_KD] = g.k_d
        G[K.G_PHI_D_MAX] = g.phi_d_max
        G[K.G_KPHI:K.G_KPHI + 2] = g.k_phi
        if self.kind == FIRST_ORDER:
            p = self.plant.params
            A = np.diag([p.a1, p.a2])
            B = np.diag([p.b1, p.b2])
            k_v = lqr(A, B, np.eye(2), np.eye(2)) if g.k_v is None else np.asarray(g.k_v, float)
            if not _hurwitz(A - B @ k_v):
                raise ValueError("first-order tracker gain k_v is not stabilizing")
            G[K.G_KV:K.G_KV + 4] = k_v.ravel()
            G[K.G_KV_REG] = lqr(p.a1, p.b1, 1.0, 1.0)[0, 0]
            G[K.G_KW_REG] = lqr(p.a2, p.b2, 1.0, 1.0)[0, 0]
        elif self.kind == PENDULUM:
            c = self.linear_constants()
            G[K.G_A13], G[K.G_A43], G[K.G_B11] = c["a13"], c["a43"], c["b11"]
            G[K.G_B21], G[K.G_B41] = c["b21"], c["b41"]
            G[K.G_TILT_GAIN] = tilt_gain(c)
            Acl = np.array([[0.0, 1.0], [c["a43"] - c["b41"] * g.k_phi[0], -c["b41"] * g.k_phi[1]]])
            if not _hurwitz(Acl):
                raise ValueError("tilt gain k_phi is not stabilizing")
            Av = np.array([[0.0, c["a13"], 0.0], [0.0, 0.0, 1.0], [0.0, c["a43"], 0.0]])
            Bv = np.array([[c["b11"]], [0.0], [c["b41"]]])
            G[K.G_KZ:K.G_KZ + 3] = lqr(Av, Bv, np.diag(g.pendulum_q), g.pendulum_r)[0]
            G[K.G_KW] = lqr(0.0, c["b21"], g.pendulum_omega_q, g.pendulum_omega_r)[0, 0]
        return G

    def tilt_matrix(self) -> np.ndarray:
        """Closed-loop matrix of the linearized tilt error ``[phi - phi_d, phidot]``."""
        c = self.linear_constants()
        k = self.gains.k_phi
        return np.array([[0.0, 1.0], [c["a43"] - c["b41"] * k[0], -c["b41"] * k[1]]])


def _ref_row(y_d, ydot_d, yddot_d=(0.0, 0.0)) -> np.ndarray:
    return np.concatenate([np.asarray(y_d, float), np.asarray(ydot_d, float), np.asarray(yddot_d, float)])


def unicycle_tracker(state, y_d, ydot_d, ctrl: Controller) -> VelocityPair:
    u = np.zeros(2)
    K.track(UNICYCLE, np.asarray(state, float), _ref_row(y_d, ydot_d), np.zeros(1), ctrl.vector, u)
    return VelocityPair(float(u[0]), float(u[1]))


def first_order_tracker(state, y_d, ydot_d, yddot_d, ctrl: Controller) -> np.ndarray:
    u = np.zeros(2)
    K.track(FIRST_ORDER, np.asarray(state, float), _ref_row(y_d, ydot_d, yddot_d),
            ctrl.plant.param_vector(), ctrl.vector, u)
    return u


def pendulum_tracker(state, y_d, ydot_d, yddot_d, ctrl: Controller) -> tuple[np.ndarray, float]:
    """Torques ``(u1, u2)`` and the (clamped) desired tilt."""
    u = np.zeros(2)
    phi_d = K.track(PENDULUM, np.asarray(state, float), _ref_row(y_d, ydot_d, yddot_d),
                    ctrl.plant.param_vector(), ctrl.vector, u)
    return u, float(phi_d)


def track(ctrl: Controller, state, y_d, ydot_d, yddot_d=(0.0, 0.0)) -> np.ndarray:
    """Tracker output for any plant (velocities for the unicycle, inputs otherwise)."""
    u = np.zeros(2)
    K.track(ctrl.kind, np.asarray(state, float), _ref_row(y_d, ydot_d, yddot_d),
            ctrl.plant.param_vector(), ctrl.vector, u)
    return u


def velocity_regulator(ctrl: Controller, state, target: VelocityPair) -> np.ndarray:
    u = np.zeros(2)
    K.regulate(ctrl.kind, np.asarray(state, float), target.v, target.omega,
               ctrl.plant.param_vector(), ctrl.vector, u)
    return u


@dataclass
class LyapunovReport:
    name: str
    samples: int
    negative: int
    worst: float

    @property
    def fraction(self) -> float:
        return self.negative / self.samples if self.samples else 1.0

    @property
    def passed(self) -> bool:
        return self.negative == self.samples


def lyapunov_tracking_check(ctrl: Controller, trials: int = 10_000, seed: int = 0,
                            min_error: float = 0.0) -> LyapunovReport:
    """Sample states and evaluate the derivative of the tracker's Lyapunov function.

    Unicycle: ``V = |y_d - y|^2 / 2`` with a random moving reference.
    Pendulum: ``V = e^T P e / 2`` for the tilt error ``e = [phi - phi_d, phidot]``,
    evaluated with the nonlinear tilt dynamics over |phi| <= 0.5, |phidot| < 5,
    |v| <= 2, |omega| <= 2, |phi_d| <= 0.25.  Samples with ``|e| <= min_error``
    are skipped.
    """
    rng = np.random.default_rng(seed)
    eps = ctrl.epsilon
    if ctrl.kind == UNICYCLE:
        pos = rng.uniform(-5, 5, (trials, 2))
        psi = rng.uniform(-np.pi, np.pi, trials)
        y = pos + eps * np.c_[np.cos(psi), np.sin(psi)]
        y_d = y + rng.normal(0, 1, (trials, 2)) * rng.uniform(0, 2, (trials, 1))
        ydot_d = rng.uniform(-1, 1, (trials, 2))
        vdots = np.empty(trials)
        for i in range(trials):
            vel = unicycle_tracker([pos[i, 0], pos[i, 1], psi[i]], y_d[i], ydot_d[i], ctrl)
            c, s = np.cos(psi[i]), np.sin(psi[i])
            ydot = vel.v * np.array([c, s]) + eps * vel.omega * np.array([-s, c])
            e = y_d[i] - y[i]
            vdots[i] = e @ (ydot_d[i] - ydot)
        err = np.linalg.norm(y_d - y, axis=1)
        keep = err > min_error
        return LyapunovReport("unicycle", int(keep.sum()), int((vdots[keep] < 0).sum()),
                              float(vdots[keep].max(initial=-np.inf)))
    if ctrl.kind == PENDULUM:
        P = np.array(PUBLISHED_P)
        c = ctrl.linear_constants()
        k = ctrl.gains.k_phi
        p = ctrl.plant.params
        phi = rng.uniform(-0.5, 0.5, trials)
        phid = rng.uniform(-5, 5, trials)
        phi_d = rng.uniform(-ctrl.gains.phi_d_max, ctrl.gains.phi_d_max, trials)
        v = rng.uniform(-2, 2, trials)
        w = rng.uniform(-2, 2, trials)
        state = np.zeros((trials, 7))
        state[:, 2], state[:, 4], state[:, 5], state[:, 6] = v, w, phi, phid
        u = np.zeros((trials, 2))
        u[:, 0] = -(k[0] * (phi - phi_d) + k[1] * phid) - c["a43"] / c["b41"] * phi_d
        phidd = pendulum_derivative(state, u, p)[:, 6]
        e = np.c_[phi - phi_d, phid]
        edot = np.c_[phid, phidd]
        vdots = np.einsum("ij,jk,ik->i", e, P, edot)
        keep = np.linalg.norm(e, axis=1) > min_error
        return LyapunovReport("pendulum-tilt", int(keep.sum()), int((vdots[keep] < 0).sum()),
                              float(vdots[keep].max(initial=-np.inf)))
    raise ValueError("Lyapunov check is defined for the unicycle and pendulum trackers")
