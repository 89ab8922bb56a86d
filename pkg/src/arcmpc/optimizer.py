"""Budgeted projected gradient descent over switch times and arc velocities."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .arcs import ArcSolution
from .core import INF_COST, VelocityPair
from .costs import HorizonProblem

BatchCost = Callable[[np.ndarray], np.ndarray]

LINE_STEPS = np.array([4.0, 2.0, 1.0, 0.5, 0.25, 0.125])


@dataclass(frozen=True)
class OptBudget:
    """Optimizer budget.

    ``wall_clock_limit=None`` gives the deterministic evaluation-count mode;
    ``step_scales`` are the perturbation sizes for (switch time, v, omega).
    """

    wall_clock_limit: float | None = 0.05
    max_evals: int | None = None
    step_scales: tuple[float, float, float] = (0.05, 0.02, 0.05)

    def __post_init__(self):
        if self.wall_clock_limit is not None and self.wall_clock_limit < 0:
            raise ValueError("wall_clock_limit must be nonnegative")
        if self.max_evals is not None and self.max_evals < 0:
            raise ValueError("max_evals must be nonnegative")
        if self.wall_clock_limit is None and self.max_evals is None:
            raise ValueError("give a wall-clock limit, an evaluation limit, or both")

    @property
    def empty(self) -> bool:
        return self.wall_clock_limit == 0 or self.max_evals == 0

    def halved(self) -> "OptBudget":
        if self.wall_clock_limit is None:
            return self
        return OptBudget(self.wall_clock_limit / 2, self.max_evals, self.step_scales)


def _infinite(f) -> np.ndarray:
    f = np.asarray(f, float)
    return ~np.isfinite(f) | (f >= INF_COST)


def numeric_gradient(x, cost_fn: BatchCost, step_scales, f0: float | None = None,
                     project: Callable[[np.ndarray], np.ndarray] | None = None):
    """Central-difference gradient of a batched cost.

    With ``project`` the perturbed points are projected first and the difference
    is taken over the actual displacement, so coordinates on a bound get a
    one-sided estimate.  Coordinates whose one-sided perturbation hits an
    infinite cost fall back to a one-sided difference; when both sides are
    infinite the coordinate is frozen (zero).  Returns ``(gradient, evaluations)``.
    """
    x = np.asarray(x, float)
    h = np.broadcast_to(np.asarray(step_scales, float), x.shape)
    n = len(x)
    pert = np.repeat(x[None], 2 * n, axis=0)
    idx = np.arange(n)
    pert[2 * idx, idx] += h
    pert[2 * idx + 1, idx] -= h
    if project is not None:
        pert = np.array([project(p) for p in pert])
    dp = pert[2 * idx, idx] - x
    dm = x - pert[2 * idx + 1, idx]
    f = np.asarray(cost_fn(pert), float)
    evals = 2 * n
    fp, fm = f[0::2], f[1::2]
    ip, im = _infinite(fp), _infinite(fm)
    g = np.zeros(n)
    both = ~ip & ~im & (dp + dm > 0)
    g[both] = (fp[both] - fm[both]) / (dp[both] + dm[both])
    if (ip ^ im).any():
        if f0 is None:
            f0 = float(cost_fn(x[None])[0])
            evals += 1
        if not _infinite(f0):
            only_p = ~ip & im & (dp > 0)
            only_m = ip & ~im & (dm > 0)
            g[only_p] = (fp[only_p] - f0) / dp[only_p]
            g[only_m] = (f0 - fm[only_m]) / dm[only_m]
    return g, evals


@dataclass
class OptResult:
    x: np.ndarray
    cost: float
    initial_cost: float
    evals: int
    iterations: int
    elapsed: float


def minimize(x0, cost_fn: BatchCost, project: Callable[[np.ndarray], np.ndarray], scales,
             budget: OptBudget, f0: float | None = None) -> OptResult:
    """Projected normalized-gradient descent with a batched backtracking line search.

    Never returns a point worse than the (projected) start.
    """
    start = time.perf_counter()
    scales = np.broadcast_to(np.asarray(scales, float), np.shape(x0))
    x = project(np.asarray(x0, float))
    evals = 0
    if f0 is None:
        f0 = float(cost_fn(x[None])[0])
        evals += 1
    f = f0
    it = 0
    step = 1.0
    n = len(x)

    def remaining(batch: int) -> bool:
        if budget.max_evals is not None and evals + batch > budget.max_evals:
            return False
        if budget.wall_clock_limit is not None and time.perf_counter() - start >= budget.wall_clock_limit:
            return False
        return True

    if _infinite(f) or budget.empty:
        return OptResult(x, f, f0, evals, 0, time.perf_counter() - start)
    while remaining(2 * n + 1 + len(LINE_STEPS)):
        g, used = numeric_gradient(x, cost_fn, scales, f, project)
        evals += used
        gz = g * scales
        norm = np.linalg.norm(gz)
        if norm < 1e-12:
            break
        direction = -gz / norm * scales
        trials = np.array([project(x + step * t * direction) for t in LINE_STEPS])
        fc = np.asarray(cost_fn(trials), float)
        evals += len(trials)
        it += 1
        k = int(np.argmin(fc))
        if fc[k] < f:
            x, f = trials[k], float(fc[k])
            step *= LINE_STEPS[k]
        else:
            step *= LINE_STEPS[-1] / 2
            if step < 1e-4:
                break
    return OptResult(x, f, f0, evals, it, time.perf_counter() - start)


def project_vector(vec: np.ndarray, n_arcs: int, delta: float, v_max: float, omega_max: float,
                   v_min: float | None = None) -> np.ndarray:
    """Clip switch times into [0, delta] and make them non-decreasing; clip velocities
    (``v`` into ``[v_min, v_max]``, ``v_min`` defaulting to ``-v_max``)."""
    out = np.array(vec, float)
    tau = np.clip(out[:n_arcs], 0.0, delta)
    out[:n_arcs] = np.maximum.accumulate(tau)
    th = out[n_arcs:].reshape(n_arcs, 2)
    th[:, 0] = np.clip(th[:, 0], -v_max if v_min is None else v_min, v_max)
    th[:, 1] = np.clip(th[:, 1], -omega_max, omega_max)
    out[n_arcs:] = th.ravel()
    return out


def refine(initial: ArcSolution, problem: HorizonProblem, budget: OptBudget,
           initial_cost: float | None = None, current: VelocityPair | None = None) -> tuple[ArcSolution, OptResult]:
    """Locally improve ``initial`` on the horizon cost of ``problem`` within ``budget``.

    With ``current`` given, zero-length arcs are seeded with continuous
    velocities before optimizing (this does not change the initial cost).
    """
    h = problem.horizon
    if current is not None:
        initial = initial.with_idle_arcs(current)
    lim = problem.limits
    n = h.n_arcs
    scales = np.r_[np.full(n, budget.step_scales[0]), np.tile(budget.step_scales[1:], n)]

    def project(v):
        return project_vector(v, n, h.delta, lim.v_max, lim.omega_max, lim.v_min)

    res = minimize(initial.vector(), problem.cost_vectors, project, scales, budget, initial_cost)
    if res.cost < res.initial_cost:
        return ArcSolution.from_vector(problem.t0, h.delta, res.x), res
    return initial, res
