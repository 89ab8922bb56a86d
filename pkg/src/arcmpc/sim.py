"""Deterministic 2-D world: laser scanner, occupancy mapping and the scenario runner."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .arcs import RolloutBatch, pack, rollout_batch
from .control import Controller
from .core import Pose, VelocityPair
from .costs import cost_batch
from .mpc import LoopState, MPCConfig, Mode, initial_loop_state, tick
from .planner import FREE, OCCUPIED, UNKNOWN, OccupancyGrid
from .plants import PENDULUM, UNICYCLE


@dataclass(frozen=True)
class World:
    """Ground truth grid with start pose, goal and optional waypoints.

    ``paired`` is a second world swapped in (with the belief erased) whenever
    the goal is reached, so runs can lap between two environments.
    """

    truth: OccupancyGrid
    start: Pose
    goal: np.ndarray
    waypoints: tuple = ()
    paired: "World | None" = field(default=None, repr=False, compare=False)
    name: str = ""

    def targets(self) -> list[np.ndarray]:
        return [np.asarray(w, float) for w in self.waypoints] + [np.asarray(self.goal, float)]


def parse_world(text: str, heading: float | None = None, name: str = "") -> World:
    """Parse an ASCII environment.

    Header lines before the grid: ``resolution <meters>`` (required) and
    optionally ``heading <radians>`` (an explicit ``heading`` argument wins).  Grid characters: ``#`` occupied, ``.``
    free, ``S`` start, ``G`` goal, ``1``-``9`` waypoints visited in order
    before the goal.  The first grid line is the top row; cell (0, 0) is the
    bottom-left cell, centered at the world origin.
    """
    resolution = None
    file_heading = 0.0
    rows = []
    for raw in text.splitlines():
        line = raw.rstrip()
        if not line or line.startswith(";"):
            continue
        key = line.split()[0].lower()
        if key == "resolution" and not rows:
            resolution = float(line.split()[1])
        elif key == "heading" and not rows:
            file_heading = float(line.split()[1])
        else:
            rows.append(line)
    if resolution is None:
        raise ValueError("environment file lacks a 'resolution <meters>' header")
    if not rows:
        raise ValueError("environment file has no grid")
    width = max(len(r) for r in rows)
    cells = np.full((len(rows), width), OCCUPIED, np.int8)
    start = goal = None
    waypoints = {}
    for i, line in enumerate(rows):
        r = len(rows) - 1 - i
        for c, ch in enumerate(line):
            if ch == "#":
                continue
            if ch not in ".SG123456789":
                raise ValueError(f"unexpected character {ch!r} in environment grid")
            cells[r, c] = FREE
            pos = np.array([c * resolution, r * resolution])
            if ch == "S":
                start = pos
            elif ch == "G":
                goal = pos
            elif ch.isdigit():
                waypoints[int(ch)] = pos
    if start is None or goal is None:
        raise ValueError("environment needs exactly one 'S' and one 'G'")
    grid = OccupancyGrid(resolution, (0.0, 0.0), cells)
    heading = file_heading if heading is None else heading
    return World(grid, Pose(float(start[0]), float(start[1]), heading), goal,
                 tuple(waypoints[k] for k in sorted(waypoints)), None, name)


def load_world(path, heading: float | None = None, paired=None) -> World:
    """Load an environment file; with ``paired`` the two worlds alternate at each goal arrival."""
    path = Path(path)
    world = parse_world(path.read_text(), heading, path.stem)
    if paired is not None:
        other = load_world(paired)
        if other.truth.shape != world.truth.shape or other.truth.resolution != world.truth.resolution:
            raise ValueError("paired environments must share grid shape and resolution")
        object.__setattr__(world, "paired", other)
        object.__setattr__(other, "paired", world)
    return world


# ---------------------------------------------------------------------------
# sensing


@dataclass(frozen=True)
class LaserScan:
    ranges: np.ndarray
    bearings: np.ndarray
    max_range: float
    hits: np.ndarray        # whether each beam ended on an obstacle


def beam_bearings(psi: float, n_beams: int = 100) -> np.ndarray:
    return psi + np.linspace(-0.5 * math.pi, 0.5 * math.pi, n_beams)


def _march(truth: OccupancyGrid, pose: Pose, bearings: np.ndarray, max_range: float):
    step = truth.resolution / 4
    dist = np.arange(1, int(math.ceil(max_range / step)) + 1) * step
    dist[-1] = max_range
    pts = np.stack([pose.x1 + np.cos(bearings)[:, None] * dist, pose.x2 + np.sin(bearings)[:, None] * dist], -1)
    occ = truth.value_at(pts) == OCCUPIED
    hit = occ.any(axis=1)
    first = np.where(hit, np.argmax(occ, axis=1), len(dist) - 1)
    return dist, pts, hit, first


def scan(world: World | OccupancyGrid, pose: Pose, n_beams: int = 100, max_range: float = 5.0) -> LaserScan:
    """Noise-free ray-marched scan over +-90 degrees around the heading."""
    truth = world.truth if isinstance(world, World) else world
    bearings = beam_bearings(pose.psi, n_beams)
    dist, _, hit, first = _march(truth, pose, bearings, max_range)
    ranges = np.where(hit, dist[first], max_range)
    return LaserScan(ranges, bearings, max_range, hit)


def map_update(belief: OccupancyGrid, sc: LaserScan, pose: Pose, stamp: float | None = None) -> OccupancyGrid:
    """Mark cells along each beam free and the beam's end cell occupied.

    Only unknown cells change, so information only accumulates.
    """
    res = belief.resolution
    step = res / 4
    cells = belief.cells.copy()
    n = int(math.ceil(sc.max_range / step))
    dist = np.arange(1, n + 1) * step
    dist = np.minimum(dist, sc.max_range)
    c, s = np.cos(sc.bearings), np.sin(sc.bearings)
    pts = np.stack([pose.x1 + c[:, None] * dist, pose.x2 + s[:, None] * dist], -1)
    row, col = belief.world_to_cell(pts)
    inside = belief.in_bounds(row, col)
    end = sc.ranges[:, None]
    end_cell = belief.world_to_cell(np.stack([pose.x1 + c * sc.ranges, pose.x2 + s * sc.ranges], -1))
    # free: samples strictly before the end point, excluding the end cell of a hit
    before = dist[None, :] < end - 1e-12
    same_as_end = (row == end_cell[0][:, None]) & (col == end_cell[1][:, None]) & sc.hits[:, None]
    free = inside & before & ~same_as_end
    fr, fc = row[free], col[free]
    unknown = cells[fr, fc] == UNKNOWN
    cells[fr[unknown], fc[unknown]] = FREE
    er, ec = end_cell[0][sc.hits], end_cell[1][sc.hits]
    ok = belief.in_bounds(er, ec)
    er, ec = er[ok], ec[ok]
    unknown = cells[er, ec] == UNKNOWN
    cells[er[unknown], ec[unknown]] = OCCUPIED
    return belief.with_cells(cells, belief.stamp if stamp is None else stamp)


# ---------------------------------------------------------------------------
# scenario runner


@dataclass(frozen=True)
class Scenario:
    world: World
    ctrl: Controller
    mpc: MPCConfig = field(default_factory=MPCConfig)
    timeout: float = 120.0
    laps: int = 1
    seed: int = 0
    sim_step: float = 1e-3
    log_step: float = 0.01
    n_beams: int = 100
    max_range: float = 5.0
    arrival_dwell: float = 1.0
    arrival_radius: float | None = None
    start_jitter: float = 0.0
    stop_at_goal: bool = True


LOG_COLUMNS = ("tick", "t", "x1", "x2", "psi", "v", "omega", "phi", "phi_d", "J_total", "J_terminal",
               "J_running", "min_clearance", "loop_ms", "mode", "admissible", "barrier", "label",
               "replanned", "run_cost", "goal_dist", "lap", "n_evals")
WALL_CLOCK_COLUMNS = ("loop_ms",)


@dataclass
class RunLog:
    records: list[dict]
    summary: dict
    history: list = field(default_factory=list, repr=False)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records])

    def to_csv(self, path, wall_clock: bool = True) -> None:
        cols = [c for c in LOG_COLUMNS if wall_clock or c not in WALL_CLOCK_COLUMNS]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
            writer.writeheader()
            for rec in self.records:
                writer.writerow({k: _fmt(rec[k]) for k in cols})

    def summary_line(self) -> str:
        s = self.summary
        return (f"goal={'true' if s['goal_reached'] else 'false'} reason={s['reason']} laps={s['laps']} "
                f"collisions={s['collisions']} avg_speed={s['avg_speed']:.3f} run_cost={s['run_cost']:.4g} "
                f"max_tilt={s['max_tilt']:.3f} ticks={s['ticks']} mean_loop_ms={s['mean_loop_ms']:.1f}")


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    return x


def cruise_speed(v: np.ndarray, lap: np.ndarray, v_d: float, threshold: float = 0.9) -> float:
    """Mean speed with the acceleration and deceleration ramps of each lap removed.

    The window of a lap runs from the first to the last sample at or above
    ``threshold * v_d``.
    """
    picked = []
    for k in np.unique(lap):
        vk = v[lap == k]
        fast = np.flatnonzero(vk >= threshold * v_d)
        if len(fast):
            picked.append(vk[fast[0]:fast[-1] + 1])
    if not picked:
        return float(np.mean(v)) if len(v) else 0.0
    return float(np.mean(np.concatenate(picked)))


def _truth_clearance(points: np.ndarray, obstacles: np.ndarray) -> np.ndarray:
    if len(obstacles) == 0:
        return np.full(len(points), np.inf)
    d2 = ((points[:, None, :] - obstacles[None, :, :]) ** 2).sum(-1)
    return np.sqrt(d2.min(axis=1))


def run_scenario(sc: Scenario, on_tick=None) -> RunLog:
    """Lockstep simulation: scan, map update, MPC tick, then integrate for one execution period."""
    ctrl = sc.ctrl
    plant = ctrl.plant
    cfg = sc.mpc
    h = cfg.horizon
    world = sc.world
    rng = np.random.default_rng(sc.seed)
    start = world.start
    if sc.start_jitter > 0:
        dx, dy = rng.uniform(-sc.start_jitter, sc.start_jitter, 2)
        start = Pose(start.x1 + dx, start.x2 + dy, start.psi)
    state = plant.initial_state(start)
    belief = OccupancyGrid.unknown_like(world.truth)
    targets = world.targets()
    target_i = 0
    loop = initial_loop_state(0.0, targets[0])
    arrival_radius = h.delta_ball if sc.arrival_radius is None else sc.arrival_radius
    n_ticks = int(round(sc.timeout / h.delta_execute))
    n_exec = int(round(h.delta_execute / sc.sim_step))
    log_stride = int(round(sc.log_step / sc.sim_step))
    records, history = [], []
    collisions = 0
    laps = 0
    in_goal_time = 0.0
    reason = "timeout"
    run_cost = 0.0
    run_terms = np.zeros(3)
    t = 0.0
    for k in range(n_ticks):
        t = k * h.delta_execute
        pose = plant.pose(state)
        belief = map_update(belief, scan(world, pose, sc.n_beams, sc.max_range), pose, stamp=t)
        wall0 = time.perf_counter()
        cmd, loop = tick(loop, belief, state, ctrl, cfg)
        loop_ms = 1e3 * (time.perf_counter() - wall0)
        taus, thetas = pack([cmd.solution])
        ex: RolloutBatch = rollout_batch(ctrl, state, t, taus, thetas, cmd.reference, h.delta_execute,
                                         sc.sim_step, sc.sim_step * log_stride)
        info = loop.metrics
        history.append(info)
        # ground truth safety and realized running cost over the executed segment
        obstacles = world.truth.obstacles_near(state[:2], 3.0 + cfg.weights.d_max)
        clear = _truth_clearance(ex.states[0, :, :2], obstacles) - cfg.r_robot if ex.ok[0] else np.zeros(1)
        hit = bool(np.any(clear <= 0.0))
        # realized cost uses the mapped obstacles, i.e. the cost the planner itself sees
        known = belief.obstacles_near(state[:2], 3.0 + cfg.weights.d_max)
        costs = cost_batch(ex, known, targets[target_i], cmd.reference.position(t + h.delta_execute),
                           cfg.weights, h.delta_ball, barrier=False, r_robot=0.0)
        step_terms = costs.terms[0, :3]
        step_cost = float(step_terms.sum())
        run_cost += step_cost
        run_terms += step_terms
        fell = not ex.ok[0]
        state = ex.states[0, -1].copy()
        if plant.kind == UNICYCLE:
            loop = replace(loop, last_velocity=VelocityPair(float(ex.vel[0, -1, 0]), float(ex.vel[0, -1, 1])))
        v_end, w_end = ex.vel[0, -1]
        y = ex.eps[0, -1]
        goal_dist = float(np.linalg.norm(y - targets[target_i]))
        rec = {
            "tick": k, "t": t + h.delta_execute, "x1": state[0], "x2": state[1],
            "psi": float(plant.heading(state)), "v": float(v_end), "omega": float(w_end),
            "phi": float(state[5]) if plant.kind == PENDULUM else 0.0,
            "phi_d": float(np.max(np.abs(ex.phi_d[0]))) if plant.kind == PENDULUM else 0.0,
            "J_total": info.J_total, "J_terminal": info.J_terminal, "J_running": info.J_running,
            "min_clearance": float(np.min(clear)), "loop_ms": loop_ms, "mode": info.mode.value,
            "admissible": info.admissible, "barrier": info.barrier, "label": info.label,
            "replanned": info.replanned, "run_cost": step_cost, "goal_dist": goal_dist, "lap": laps,
            "n_evals": info.n_evals,
            "max_tilt": float(np.max(np.abs(ex.states[0, :, 5]))) if plant.kind == PENDULUM else 0.0,
        }
        records.append(rec)
        rec["cost_terms"] = step_terms.copy()
        if on_tick is not None:
            on_tick(rec, loop)
        if hit:
            collisions += 1
            reason = "collision"
            break
        if fell:
            reason = "fall"
            break
        in_goal_time = in_goal_time + h.delta_execute if goal_dist < arrival_radius else 0.0
        if in_goal_time >= sc.arrival_dwell - 1e-9:
            in_goal_time = 0.0
            if target_i + 1 < len(targets):
                target_i += 1
                loop = loop.with_goal(targets[target_i])
                continue
            laps += 1
            if laps >= sc.laps or (world.paired is None and sc.stop_at_goal):
                reason = "goal"
                break
            if world.paired is not None:
                world = world.paired
                belief = OccupancyGrid.unknown_like(world.truth)
                targets = world.targets()
                target_i = 0
                loop = loop.with_goal(targets[0])
    if reason == "timeout" and history and not history[-1].path_found:
        reason = "timeout/no-path"
    v = np.array([r["v"] for r in records])
    lap = np.array([r["lap"] for r in records])
    loop_ms = np.array([r["loop_ms"] for r in records])
    summary = {
        "goal_reached": reason == "goal", "reason": reason, "laps": laps, "collisions": collisions,
        "ticks": len(records), "sim_time": len(records) * h.delta_execute,
        "avg_speed": cruise_speed(np.abs(v), lap, cfg.weights.v_desired) if len(v) else 0.0,
        "run_cost": run_cost,
        "run_cost_velocity": float(run_terms[0]),
        "run_cost_obstacle": float(run_terms[1]),
        "run_cost_tilt": float(run_terms[2]),
        "planned_cost": float(sum(min(r["J_total"], 1e300) for r in records)),
        "max_tilt": max((r["max_tilt"] for r in records), default=0.0),
        "max_phi_d": max((r["phi_d"] for r in records), default=0.0),
        "mean_loop_ms": float(loop_ms.mean()) if len(loop_ms) else 0.0,
        "std_loop_ms": float(loop_ms.std()) if len(loop_ms) else 0.0,
    }
    return RunLog(records, summary, history)


def corridor_world(route, half_width: float = 0.45, resolution: float = 0.1, border: float = 1.0,
                   waypoints=(), heading: float | None = None, name: str = "corridor") -> World:
    """Rasterize a corridor of the given half width around a polyline route.

    Cells whose centers lie within ``half_width`` of the route are free.  The
    route's first and last vertices become the start and the goal.
    """
    route = np.asarray(route, float)
    lo = route.min(axis=0) - border
    hi = route.max(axis=0) + border
    nx = int(round((hi[0] - lo[0]) / resolution)) + 1
    ny = int(round((hi[1] - lo[1]) / resolution)) + 1
    # snap the origin to the resolution lattice so that vertices fall on cell centers
    origin = np.round(lo / resolution) * resolution
    xs = origin[0] + resolution * np.arange(nx)
    ys = origin[1] + resolution * np.arange(ny)
    pts = np.stack(np.meshgrid(xs, ys), -1)
    dist = np.full(pts.shape[:2], np.inf)
    for a, b in zip(route[:-1], route[1:]):
        d = b - a
        u = np.clip(((pts - a) @ d) / (d @ d), 0.0, 1.0)
        dist = np.minimum(dist, np.linalg.norm(pts - (a + u[..., None] * d), axis=-1))
    cells = np.where(dist <= half_width + 1e-9, FREE, OCCUPIED).astype(np.int8)
    grid = OccupancyGrid(resolution, (origin[0], origin[1]), cells)
    if heading is None:
        d = route[1] - route[0]
        heading = math.atan2(d[1], d[0])
    return World(grid, Pose(route[0, 0], route[0, 1], heading), route[-1].copy(),
                 tuple(np.asarray(w, float) for w in waypoints), None, name)


def format_world(world: World) -> str:
    """ASCII form accepted by :func:`parse_world` (origin shifted to the bottom-left cell)."""
    g = world.truth
    chars = np.where(g.cells == OCCUPIED, "#", ".").astype("<U1")

    def mark(pos, ch):
        r, c = g.world_to_cell(np.asarray(pos, float))
        chars[int(r), int(c)] = ch

    mark(world.start.position, "S")
    mark(world.goal, "G")
    for i, w in enumerate(world.waypoints, 1):
        mark(w, str(i))
    lines = [f"resolution {g.resolution:g}", f"heading {world.start.psi:.17g}"]
    lines += ["".join(row) for row in chars[::-1]]
    return "\n".join(lines) + "\n"
