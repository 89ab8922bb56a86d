import numpy as np
import pytest

from arcmpc.core import Pose
from arcmpc.plants import (PUBLISHED_LINEARIZATION, FirstOrderParams, PendulumParams, PendulumPlant, integrate,
                           make_plant, numeric_linearization, pendulum_derivative, pendulum_energy,
                           pendulum_nonconservative_power, pendulum_residuals, unicycle_derivative)


def test_unicycle_derivative():
    np.testing.assert_allclose(unicycle_derivative([0, 0, np.pi / 2], (2.0, 0.5)), [0.0, 2.0, 0.5], atol=1e-15)


def test_make_plant_rejects_unknown_name():
    with pytest.raises(ValueError):
        make_plant("boat")


def test_first_order_reaches_feedforward_velocity():
    plant = make_plant("firstorder")
    p = plant.params
    v_target, w_target = 0.5, 0.3
    u = np.array([-p.a1 * v_target / p.b1, -p.a2 * w_target / p.b2])
    x = plant.initial_state(Pose(0, 0, 0), v_target, w_target)
    np.testing.assert_allclose(plant.derivative(x, u)[3:], 0.0, atol=1e-12)


def test_first_order_acceleration_saturates():
    plant = make_plant("firstorder")
    x = plant.initial_state(Pose(0, 0, 0))
    d = plant.derivative(x, np.array([100.0, -100.0]))
    assert d[3] == pytest.approx(plant.params.a_max)
    assert d[4] == pytest.approx(-plant.params.alpha_max)


def test_integrate_lands_on_duration():
    plant = make_plant("unicycle")
    t, x = integrate(plant, [0, 0, 0], lambda t, z: np.array([1.0, 0.0]), 0.2345, 0.01)
    assert t[-1] == pytest.approx(0.2345)
    np.testing.assert_allclose(x[-1], [0.2345, 0, 0], atol=1e-12)


def test_pendulum_equations_of_motion_residuals(rng):
    p = PendulumParams()
    for _ in range(50):
        x = np.r_[rng.uniform(-1, 1, 2), rng.uniform(-1, 1), rng.uniform(-np.pi, np.pi), rng.uniform(-1, 1),
                  rng.uniform(-0.5, 0.5), rng.uniform(-2, 2)]
        u = rng.uniform(-2, 2, 2)
        res = pendulum_residuals(x, u, pendulum_derivative(x, u, p), p)
        np.testing.assert_allclose(res, 0.0, atol=1e-10)


def test_pendulum_energy_balance():
    """With zero torque and no turning, dE/dt equals the power of the centripetal coupling term."""
    p = PendulumParams()
    x0 = np.array([0, 0, 0.3, 0, 0.0, 0.2, 0.5])
    t, xs = integrate(PendulumPlant(p), x0, lambda t, z: np.zeros(2), 0.5, 1e-4)
    E = pendulum_energy(xs, p)
    P = pendulum_nonconservative_power(xs, p)
    work = np.concatenate([[0.0], np.cumsum(0.5 * (P[1:] + P[:-1]) * np.diff(t))])
    np.testing.assert_allclose(E - E[0], work, atol=1e-5)


def test_linearization_matches_numeric_jacobian():
    p = PendulumParams()
    A, B = numeric_linearization(p)
    c = p.linearization
    assert A[0, 2] == pytest.approx(c["a13"], rel=1e-4)
    assert A[3, 2] == pytest.approx(c["a43"], rel=1e-4)
    assert B[0, 0] == pytest.approx(c["b11"], rel=1e-4)
    assert B[1, 1] == pytest.approx(c["b21"], rel=1e-4)
    assert A[2, 3] == pytest.approx(1.0)
    assert B[3, 0] == pytest.approx(c["b41"], rel=1e-4)


def test_default_parameters_reproduce_published_constants():
    c = PendulumParams().linearization
    for key, value in PUBLISHED_LINEARIZATION.items():
        assert c[key] == pytest.approx(value, rel=1e-4), key


def test_torque_sign_matches_linearization():
    plant = make_plant("pendulum")
    x = plant.initial_state(Pose(0, 0, 0))
    u = np.array([-1.0, 0.0])
    assert np.sign(plant.derivative(x, u)[2]) == np.sign(PUBLISHED_LINEARIZATION["b11"] * u[0])


def test_parameter_validation():
    with pytest.raises(ValueError):
        FirstOrderParams(b1=0.0)
    with pytest.raises(ValueError):
        PendulumParams(m_c=-1.0)
