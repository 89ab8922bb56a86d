import numpy as np
import pytest

from arcmpc.arcs import ArcSolution
from arcmpc.core import INF_COST, CostWeights, HorizonConfig, Pose
from arcmpc.costs import HorizonProblem
from arcmpc.optimizer import OptBudget, minimize, numeric_gradient, project_vector, refine
from arcmpc.planner import time_parameterize


def _quadratic(center, weights):
    def f(X):
        X = np.atleast_2d(X)
        return np.sum(weights * (X - center) ** 2, axis=1)
    return f


def _stencil5(f, x, h):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (-f(x + 2 * e)[0] + 8 * f(x + e)[0] - 8 * f(x - e)[0] + f(x - 2 * e)[0]) / (12 * h)
    return g


def test_gradient_matches_analytic_and_five_point_stencil(rng):
    center, weights = rng.normal(size=5), rng.uniform(0.5, 2, 5)
    f = _quadratic(center, weights)
    x = rng.normal(size=5)
    g, evals = numeric_gradient(x, f, 1e-3)
    np.testing.assert_allclose(g, 2 * weights * (x - center), rtol=1e-8)
    assert evals == 10

    def smooth(X):
        X = np.atleast_2d(X)
        return np.sin(X[:, 0]) * np.exp(0.3 * X[:, 1]) + X[:, 2] ** 3
    x = np.array([0.3, -0.5, 0.7])
    g, _ = numeric_gradient(x, smooth, 1e-4)
    np.testing.assert_allclose(g, _stencil5(smooth, x, 1e-3), rtol=1e-6)


def test_gradient_one_sided_next_to_barrier():
    def f(X):
        X = np.atleast_2d(X)
        return np.where(X[:, 0] > 1.0, INF_COST, X[:, 0] ** 2)
    g, _ = numeric_gradient(np.array([0.995]), f, 0.01)
    assert g[0] == pytest.approx((0.995**2 - 0.985**2) / 0.01)


def test_gradient_uses_projected_displacement():
    f = _quadratic(np.zeros(1), np.ones(1))
    g, _ = numeric_gradient(np.array([1.0]), f, 0.1, project=lambda p: np.minimum(p, 1.0))
    assert g[0] == pytest.approx((1.0 - 0.81) / 0.1)


def test_minimize_quadratic_and_budget():
    f = _quadratic(np.array([1.0, -2.0]), np.array([1.0, 4.0]))
    res = minimize(np.zeros(2), f, lambda p: p, 0.1, OptBudget(None, max_evals=2000))
    np.testing.assert_allclose(res.x, [1.0, -2.0], atol=1e-3)
    assert res.cost <= res.initial_cost and res.evals <= 2000
    small = minimize(np.zeros(2), f, lambda p: p, 0.1, OptBudget(None, max_evals=12))
    assert small.evals <= 12 and small.iterations == 1


def test_minimize_respects_projection():
    f = _quadratic(np.array([5.0]), np.ones(1))
    res = minimize(np.zeros(1), f, lambda p: np.clip(p, -1, 1), 0.1, OptBudget(None, max_evals=500))
    assert res.x[0] == pytest.approx(1.0)


def test_project_vector():
    out = project_vector(np.array([0.5, -0.2, 4.0, 2.0, 3.0, -1.0, 0.1, 0.2, -9.0]), 3, 3.0, 1.0, 2.0, 0.0)
    np.testing.assert_allclose(out[:3], [0.5, 0.5, 3.0])
    np.testing.assert_allclose(out[3:], [1.0, 2.0, 0.0, 0.1, 0.2, -2.0])


def test_budget_validation():
    with pytest.raises(ValueError):
        OptBudget(None, None)
    assert OptBudget(0.1).halved().wall_clock_limit == pytest.approx(0.05)
    assert OptBudget(None, 10).halved().max_evals == 10
    assert OptBudget(0.0).empty


def test_refine_never_increases_cost(ctrl):
    ref = time_parameterize([[0.2, 0.0], [6.0, 0.0]], 0.9, 0.5, 2.0)
    prob = HorizonProblem(ctrl, ctrl.plant.initial_state(Pose(0, 0, 0)), 0.0, HorizonConfig(), ref,
                          np.array([[2.0, 0.5]]), CostWeights())
    init = ArcSolution.from_relative(0.0, [0, 1, 2, 2.5, 3.0], [[0.4, 0.0], [0.5, -0.2], [0.5, 0.2]])
    c0 = prob.evaluate_solutions([init])[1].total[0]
    sol, res = refine(init, prob, OptBudget(None, max_evals=120), c0)
    c1 = prob.evaluate_solutions([sol])[1].total[0]
    assert c1 <= c0 and res.evals <= 120
    assert c1 == pytest.approx(res.cost)
