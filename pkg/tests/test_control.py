import numpy as np
import pytest

from arcmpc.control import (PUBLISHED_K_PHI, Controller, TrackerGains, first_order_tracker, lqr,
                            lyapunov_tracking_check, pendulum_tracker, printed_tilt_gain, tilt_gain, track,
                            unicycle_tracker, velocity_regulator)
from arcmpc.core import VelocityPair
from arcmpc.plants import PUBLISHED_LINEARIZATION, FirstOrderParams, make_plant


def test_lqr_scalar_integrator():
    # A = 0, B = 1, Q = R = 1: Riccati gives P = 1, K = 1
    np.testing.assert_allclose(lqr(0.0, 1.0, 1.0, 1.0), [[1.0]], atol=1e-12)


def test_lqr_double_integrator():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    np.testing.assert_allclose(lqr(A, B, np.eye(2), np.eye(1)), [[1.0, np.sqrt(3.0)]], atol=1e-10)


def test_unicycle_tracker_linearizes_epsilon_point(unicycle_ctrl, rng):
    eps = unicycle_ctrl.epsilon
    for _ in range(100):
        x = rng.uniform(-3, 3, 3)
        y = x[:2] + eps * np.array([np.cos(x[2]), np.sin(x[2])])
        y_d, ydot_d = rng.uniform(-3, 3, 2), rng.uniform(-1, 1, 2)
        vel = unicycle_tracker(x, y_d, ydot_d, unicycle_ctrl)
        c, s = np.cos(x[2]), np.sin(x[2])
        ydot = vel.v * np.array([c, s]) + eps * vel.omega * np.array([-s, c])
        np.testing.assert_allclose(ydot, ydot_d + unicycle_ctrl.gains.k_p * (y_d - y), atol=1e-12)


def test_first_order_tracker_on_manifold_gives_error_dynamics(rng):
    # acceleration limits lifted so the exact linearization is visible
    ctrl = Controller(make_plant("firstorder", params=FirstOrderParams(a_max=1e3, alpha_max=1e3)), 0.2)
    kp, eps = ctrl.gains.k_p, ctrl.epsilon
    plant = ctrl.plant
    for _ in range(50):
        pose = rng.uniform(-1, 1, 3)
        c, s = np.cos(pose[2]), np.sin(pose[2])
        y = pose[:2] + eps * np.array([c, s])
        y_d = y + rng.uniform(-0.1, 0.1, 2)
        ydot_d = rng.uniform(-0.2, 0.2, 2)
        yddot_d = rng.uniform(-0.1, 0.1, 2)
        ue = ydot_d + kp * (y_d - y)
        v, w = c * ue[0] + s * ue[1], (-s * ue[0] + c * ue[1]) / eps
        x = np.r_[pose, v, w]
        u = first_order_tracker(x, y_d, ydot_d, yddot_d, ctrl)
        vdot, wdot = plant.derivative(x, u)[3:]
        ydd = np.array([vdot * c - v * w * s - eps * (wdot * s + w**2 * c),
                        vdot * s + v * w * c + eps * (wdot * c - w**2 * s)])
        ydot = np.array([v * c - eps * w * s, v * s + eps * w * c])
        np.testing.assert_allclose(ydd, yddot_d + kp * (ydot_d - ydot), atol=1e-10)


def test_first_order_rejects_destabilizing_gain():
    with pytest.raises(ValueError):
        Controller(make_plant("firstorder"), 0.2, TrackerGains(k_v=-10 * np.eye(2)))


def test_velocity_regulator_holds_target_for_first_order():
    ctrl = Controller(make_plant("firstorder"), 0.2)
    x = np.array([0, 0, 0, 0.5, -0.3])
    u = velocity_regulator(ctrl, x, VelocityPair(0.5, -0.3))
    np.testing.assert_allclose(ctrl.plant.derivative(x, u)[3:], 0.0, atol=1e-12)


def test_tilt_gain_inverts_linear_acceleration():
    c = PUBLISHED_LINEARIZATION
    phi_d = 0.1
    u1 = -c["a43"] / c["b41"] * phi_d         # holds phi = phi_d in the linear model
    assert c["a43"] * phi_d + c["b41"] * u1 == pytest.approx(0.0)
    vdot = c["a13"] * phi_d + c["b11"] * u1
    assert tilt_gain(c) * vdot == pytest.approx(phi_d)
    assert printed_tilt_gain(c) != pytest.approx(tilt_gain(c))


def test_pendulum_desired_tilt_consistent_and_clamped():
    ctrl = Controller(make_plant("pendulum"), 0.2)
    c = ctrl.linear_constants()
    x = np.zeros(7)
    y = np.array([0.2, 0.0])
    u, phi_d = pendulum_tracker(x, y + [0.01, 0.0], np.zeros(2), np.zeros(2), ctrl)
    assert 0 < abs(phi_d) < ctrl.gains.phi_d_max
    # at phi = phi_d, phidot = 0 the linear model accelerates by phi_d / tilt_gain
    x[5] = phi_d
    u, _ = pendulum_tracker(x, y + [0.01, 0.0], np.zeros(2), np.zeros(2), ctrl)
    assert c["a13"] * phi_d + c["b11"] * u[0] == pytest.approx(phi_d / tilt_gain(c), rel=1e-9)
    _, big = pendulum_tracker(np.zeros(7), y + [50.0, 0.0], np.zeros(2), np.zeros(2), ctrl)
    assert abs(big) == pytest.approx(ctrl.gains.phi_d_max)


def test_tilt_loop_is_hurwitz():
    ctrl = Controller(make_plant("pendulum"), 0.2)
    assert np.all(np.linalg.eigvals(ctrl.tilt_matrix()).real < 0)
    with pytest.raises(ValueError):
        Controller(make_plant("pendulum"), 0.2, TrackerGains(k_phi=(0.0, 0.0)))
    assert TrackerGains().k_phi == PUBLISHED_K_PHI


def test_track_dispatch_matches_plant_specific(unicycle_ctrl):
    x = np.array([0.1, 0.2, 0.3])
    vel = unicycle_tracker(x, [1.0, 1.0], [0.1, 0.0], unicycle_ctrl)
    np.testing.assert_allclose(track(unicycle_ctrl, x, [1.0, 1.0], [0.1, 0.0]), [vel.v, vel.omega])


@pytest.mark.parametrize("robot", ["unicycle", "pendulum"])
def test_lyapunov_derivative_negative(robot):
    report = lyapunov_tracking_check(Controller(make_plant(robot), 0.2), trials=2000, seed=1, min_error=1e-6)
    assert report.passed, report


def test_gain_validation():
    with pytest.raises(ValueError):
        TrackerGains(k_p=0.0)
    with pytest.raises(ValueError):
        TrackerGains(linearization="other")
    with pytest.raises(ValueError):
        Controller(make_plant("unicycle"), 0.0)
