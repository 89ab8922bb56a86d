"""End-to-end acceptance criteria.  Each test prints one PASS/FAIL line (also collected in the
terminal summary).  The closed-loop scenarios take several minutes in total."""

import time
from dataclasses import replace

import numpy as np
import pytest

from arcmpc.config import load_settings, parse_budget, trial_config
from arcmpc.control import Controller
from arcmpc.core import Pose
from arcmpc.mpc import MPCConfig, PlannerConfig, goal_convergence_monitor
from arcmpc.optimizer import OptBudget
from arcmpc.planner import OccupancyGrid
from arcmpc.plants import PUBLISHED_LINEARIZATION, PendulumParams, make_plant, numeric_linearization
from arcmpc.sim import Scenario, World, run_scenario
from arcmpc.verify import (ball_invariance, barrier_admissibility, closed_form_vs_rk4, scaling_theorem,
                           tracker_lyapunov)

pytestmark = pytest.mark.acceptance


@pytest.fixture(scope="module")
def corridor():
    """The first-order corridor scenario under each strategy (deterministic evaluation budget)."""
    settings = load_settings(robot="firstorder", env="corridor_a")
    base = settings.build()
    logs = {}
    for trial in ("tracking", "behaviors", "refine"):
        logs[trial] = run_scenario(replace(base, mpc=trial_config(settings.mpc, trial)))
    return settings, logs


def test_closed_form_matches_rk4(acceptance):
    res = closed_form_vs_rk4(1000, step=1e-3, pos_tol=1e-6, ang_tol=1e-8)
    ok = res.passed and res.elapsed < 5.0
    assert acceptance(1, "closed-form arcs vs RK4", ok, f"{res.detail} time={res.elapsed:.2f}s"), res.line()


def test_scaling_theorem(acceptance):
    res = scaling_theorem(500, tol=1e-9)
    ok = res.passed and res.elapsed < 10.0
    assert acceptance(2, "time scaling", ok, f"{res.detail} time={res.elapsed:.2f}s"), res.line()


def test_lyapunov_and_ball_invariance(acceptance):
    results = [tracker_lyapunov("unicycle", 10_000), tracker_lyapunov("pendulum", 10_000)]
    results += [ball_invariance(robot, 100, duration=10.0) for robot in ("unicycle", "firstorder", "pendulum")]
    ok = all(r.passed for r in results)
    detail = "; ".join(f"{r.name} n={r.samples} {r.detail}" for r in results)
    assert acceptance(3, "tracker Lyapunov and terminal-ball invariance", ok, detail), \
        "\n".join(r.line() for r in results)


def test_barrier_admissibility(acceptance, corridor):
    settings, logs = corridor
    history = logs["behaviors"].history + logs["refine"].history
    with_barrier = [h for h in history if h.barrier]
    bad = [h for h in with_barrier if not h.admissible]
    ok = min(len(logs["behaviors"].history), len(logs["refine"].history)) >= 500 and not bad
    detail = f"ticks={len(history)} barrier_ticks={len(with_barrier)} violations={len(bad)}"
    assert acceptance(4, "barrier admissibility", ok, detail)


def _goal_runs(robot, n=20, seed=0):
    grid = OccupancyGrid.empty(10, 10)
    goal = np.array([5.0, 5.0])
    ctrl = Controller(make_plant(robot), 0.2)
    cfg = MPCConfig(budget=OptBudget(None, max_evals=200), planner=PlannerConfig(reference="goal"))
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        r, a = rng.uniform(0, 1), rng.uniform(-np.pi, np.pi)
        start = Pose(5 + r * np.cos(a), 5 + r * np.sin(a), rng.uniform(-np.pi, np.pi))
        # stop two seconds after the epsilon point is within 1 cm of the goal
        sc = Scenario(World(grid, start, goal), ctrl, cfg, timeout=30.0, arrival_radius=0.01, arrival_dwell=2.0)
        out.append(run_scenario(sc))
    return out


def test_goal_convergence(acceptance):
    fails = []
    worst = -np.inf
    slowest = 0.0
    for robot in ("unicycle", "firstorder", "pendulum"):
        for i, log in enumerate(_goal_runs(robot)):
            rep = goal_convergence_monitor(log.history)
            if len(rep.increases):
                worst = max(worst, float(np.max(rep.increases - rep.tolerances)))
            d = log.column("goal_dist")
            t = log.column("t")
            reached = np.flatnonzero(d < 0.01)
            t_hit = t[reached[0]] if len(reached) else np.inf
            slowest = max(slowest, t_hit)
            if not rep.passed or t_hit > 30.0 or log.summary["collisions"]:
                fails.append(f"{robot}#{i}(viol={rep.violations}, t={t_hit:.1f})")
    detail = f"runs=60 slowest_to_1cm={slowest:.1f}s max_excess_increase={worst:.2e} failures={fails}"
    assert acceptance(5, "goal convergence", not fails, detail)


def test_corridor_behaviors_and_refine(acceptance, corridor):
    settings, logs = corridor
    s = {k: v.summary for k, v in logs.items()}
    base = s["tracking"]["run_cost"]
    norm = {k: s[k]["run_cost"] / base for k in s}
    ok = (all(x["goal_reached"] and x["collisions"] == 0 for x in s.values())
          and s["refine"]["avg_speed"] >= 0.7 * 0.9
          and norm["behaviors"] < 1.0 and norm["refine"] <= norm["behaviors"])
    detail = (f"avg_speed={s['refine']['avg_speed']:.3f} normalized behaviors={norm['behaviors']:.3f} "
              f"refine={norm['refine']:.3f} reasons={[x['reason'] for x in s.values()]}")
    assert acceptance(6, "first-order corridor", ok, detail)


def test_pendulum_waypoint_tour(acceptance):
    settings = load_settings(robot="pendulum", env="arena")
    mpc = settings.mpc
    mpc = replace(mpc, weights=replace(mpc.weights, v_desired=1.0), planner=replace(mpc.planner, v_cruise=1.0))
    log = run_scenario(replace(settings.build(), mpc=mpc))
    s = log.summary
    A, B = numeric_linearization(PendulumParams())
    lin = PendulumParams().linearization
    lin_err = max(abs(lin[k] - v) / abs(v) for k, v in PUBLISHED_LINEARIZATION.items())
    numeric = {"a13": A[0, 2], "a43": A[3, 2], "b11": B[0, 0], "b21": B[1, 1], "b41": B[3, 0]}
    jac_err = max(abs(numeric[k] - lin[k]) / abs(lin[k]) for k in numeric)
    ok = (s["goal_reached"] and s["collisions"] == 0 and s["max_tilt"] < 0.5 and s["max_phi_d"] <= 0.25 + 1e-12
          and lin_err < 1e-4 and jac_err < 1e-4)
    detail = (f"reason={s['reason']} max|phi|={s['max_tilt']:.3f} max|phi_d|={s['max_phi_d']:.3f} "
              f"closed_form_vs_numeric={jac_err:.1e} vs_published={lin_err:.1e}")
    assert acceptance(7, "pendulum waypoint tour", ok, detail)


def test_tick_time(acceptance):
    settings = load_settings(robot="firstorder", env="corridor_a", budget=parse_budget("0.05"), timeout=40.0)
    log = run_scenario(settings.build())
    loop = log.column("loop_ms") / 1e3
    ok = loop.mean() < 0.2
    detail = f"mean={loop.mean() * 1e3:.1f}ms std={loop.std() * 1e3:.1f}ms max={loop.max() * 1e3:.1f}ms ticks={len(loop)}"
    assert acceptance(8, "tick time", ok, detail)


def test_deterministic_logs(acceptance, tmp_path):
    settings = load_settings(robot="pendulum", env="arena", seed=11, timeout=10.0)
    sc = replace(settings.build(), start_jitter=0.05)
    paths = []
    for k in range(2):
        p = tmp_path / f"run{k}.csv"
        run_scenario(sc).to_csv(p, wall_clock=False)
        paths.append(p)
    a, b = (p.read_text() for p in paths)
    ok = a == b and len(a.splitlines()) > 10
    assert acceptance(9, "deterministic replay", ok, f"rows={len(a.splitlines()) - 1}")
