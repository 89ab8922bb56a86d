"""Occupancy grids, A* path planning and time parameterization of reference trajectories."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numba as nb
import numpy as np
from scipy.ndimage import distance_transform_edt

FREE, OCCUPIED, UNKNOWN = 0, 1, -1


@dataclass(frozen=True)
class OccupancyGrid:
    """Ternary occupancy grid.

    ``cells[row, col]`` with rows along x2 and columns along x1; ``origin`` is
    the world position of the center of cell (0, 0).  Instances are treated as
    immutable snapshots: derived quantities are cached.
    """

    resolution: float
    origin: tuple[float, float]
    cells: np.ndarray
    stamp: float = 0.0

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        cells = np.asarray(self.cells, dtype=np.int8)
        if cells.ndim != 2:
            raise ValueError("cells must be a 2-D array")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def unknown_like(cls, other: "OccupancyGrid") -> "OccupancyGrid":
        return cls(other.resolution, other.origin, np.full(other.shape, UNKNOWN, np.int8), other.stamp)

    @classmethod
    def empty(cls, width: float, height: float, resolution: float = 0.1,
              origin: tuple[float, float] = (0.0, 0.0), fill: int = FREE) -> "OccupancyGrid":
        shape = (int(round(height / resolution)) + 1, int(round(width / resolution)) + 1)
        return cls(resolution, origin, np.full(shape, fill, np.int8))

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def with_cells(self, cells: np.ndarray, stamp: float | None = None) -> "OccupancyGrid":
        return OccupancyGrid(self.resolution, self.origin, cells, self.stamp if stamp is None else stamp)

    def world_to_cell(self, points) -> tuple[np.ndarray, np.ndarray]:
        pts = np.asarray(points, dtype=float)
        col = np.rint((pts[..., 0] - self.origin[0]) / self.resolution).astype(int)
        row = np.rint((pts[..., 1] - self.origin[1]) / self.resolution).astype(int)
        return row, col

    def cell_to_world(self, row, col) -> np.ndarray:
        row = np.asarray(row, dtype=float)
        col = np.asarray(col, dtype=float)
        return np.stack([self.origin[0] + col * self.resolution,
                         self.origin[1] + row * self.resolution], axis=-1)

    def in_bounds(self, row, col) -> np.ndarray:
        row, col = np.asarray(row), np.asarray(col)
        return (row >= 0) & (row < self.shape[0]) & (col >= 0) & (col < self.shape[1])

    def value_at(self, points) -> np.ndarray:
        """Cell values at world points; outside the grid counts as unknown."""
        row, col = self.world_to_cell(points)
        inside = self.in_bounds(row, col)
        out = np.full(row.shape, UNKNOWN, np.int8)
        out[inside] = self.cells[row[inside], col[inside]]
        return out

    @cached_property
    def occupied_points(self) -> np.ndarray:
        rows, cols = np.nonzero(self.cells == OCCUPIED)
        return self.cell_to_world(rows, cols).reshape(-1, 2)

    def obstacles_near(self, center, radius: float) -> np.ndarray:
        pts = self.occupied_points
        if len(pts) == 0:
            return pts
        keep = np.sum((pts - np.asarray(center, float)) ** 2, axis=1) <= radius**2
        return np.ascontiguousarray(pts[keep])

    @cached_property
    def clearance(self) -> np.ndarray:
        """Distance (m) from each cell center to the nearest occupied cell center."""
        occ = self.cells == OCCUPIED
        if not occ.any():
            return np.full(self.shape, np.inf)
        return distance_transform_edt(~occ) * self.resolution

    def clearance_at(self, points) -> np.ndarray:
        """Cell-lookup clearance at world points; out-of-grid points get +inf."""
        row, col = self.world_to_cell(points)
        inside = self.in_bounds(row, col)
        out = np.full(row.shape, np.inf)
        out[inside] = self.clearance[row[inside], col[inside]]
        return out

    def blocked(self, inflation: float) -> np.ndarray:
        """Cells unusable for planning: within ``inflation`` of an occupied cell."""
        return self.clearance <= inflation + 1e-9


# ---------------------------------------------------------------------------
# A*

_MOVES = np.array([[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [1, -1], [-1, 1], [-1, -1]])


@nb.njit(cache=True)
def _astar(blocked, sr, sc, gr, gc):
    H, W = blocked.shape
    g = np.full((H, W), np.inf)
    parent = np.full((H, W), -1, np.int64)
    closed = np.zeros((H, W), np.bool_)
    g[sr, sc] = 0.0
    heap = [(math.hypot(gr - sr, gc - sc), 0, sr * W + sc)]
    counter = 1
    SQ2 = math.sqrt(2.0)
    while heap:
        f, _, idx = heapq.heappop(heap)
        r = idx // W
        c = idx % W
        if closed[r, c]:
            continue
        closed[r, c] = True
        if r == gr and c == gc:
            break
        for m in range(8):
            dr = _MOVES[m, 0]
            dc = _MOVES[m, 1]
            nr = r + dr
            nc = c + dc
            if nr < 0 or nr >= H or nc < 0 or nc >= W or blocked[nr, nc] or closed[nr, nc]:
                continue
            if dr != 0 and dc != 0 and (blocked[r, nc] or blocked[nr, c]):
                continue
            step = SQ2 if (dr != 0 and dc != 0) else 1.0
            cand = g[r, c] + step
            if cand < g[nr, nc]:
                g[nr, nc] = cand
                parent[nr, nc] = idx
                heapq.heappush(heap, (cand + math.hypot(gr - nr, gc - nc), counter, nr * W + nc))
                counter += 1
    if not closed[gr, gc]:
        return np.empty((0, 2), np.int64)
    n = 1
    idx = gr * W + gc
    while idx != sr * W + sc:
        idx = parent[idx // W, idx % W]
        n += 1
    out = np.empty((n, 2), np.int64)
    idx = gr * W + gc
    for i in range(n - 1, -1, -1):
        out[i, 0] = idx // W
        out[i, 1] = idx % W
        if i > 0:
            idx = parent[idx // W, idx % W]
    return out


@nb.njit(cache=True)
def _line_clear(blocked, r0, c0, r1, c1):
    """Whether the straight segment between two cell centers crosses only unblocked cells."""
    H, W = blocked.shape
    n = int(max(abs(r1 - r0), abs(c1 - c0)) * 4) + 1
    for i in range(n + 1):
        t = i / n
        r = int(round(r0 + (r1 - r0) * t))
        c = int(round(c0 + (c1 - c0) * t))
        if r < 0 or r >= H or c < 0 or c >= W or blocked[r, c]:
            return False
    return True


@nb.njit(cache=True)
def _shortcut(blocked, cells, start_r, start_c, goal_r, goal_c):
    """Greedy line-of-sight shortcut over a cell path (fractional endpoints allowed)."""
    n = cells.shape[0]
    keep = [0]
    i = 0
    while i < n - 1:
        j = n - 1
        while j > i + 1:
            r0 = start_r if i == 0 else float(cells[i, 0])
            c0 = start_c if i == 0 else float(cells[i, 1])
            r1 = goal_r if j == n - 1 else float(cells[j, 0])
            c1 = goal_c if j == n - 1 else float(cells[j, 1])
            if _line_clear(blocked, r0, c0, r1, c1):
                break
            j -= 1
        keep.append(j)
        i = j
    return np.array(keep)


def cell_path(grid: OccupancyGrid, start, goal, inflation: float) -> np.ndarray:
    """Raw 8-connected A* cell path as ``(row, col)`` pairs; empty if unreachable."""
    blocked = grid.blocked(inflation)
    sr, sc = grid.world_to_cell(np.asarray(start, float))
    gr, gc = grid.world_to_cell(np.asarray(goal, float))
    if not (grid.in_bounds(sr, sc) and grid.in_bounds(gr, gc)) or blocked[gr, gc]:
        return np.empty((0, 2), np.int64)
    if blocked[sr, sc]:
        sr, sc = _nearest_open(blocked, int(sr), int(sc))
        if sr < 0:
            return np.empty((0, 2), np.int64)
    return _astar(blocked, int(sr), int(sc), int(gr), int(gc))


def _nearest_open(blocked: np.ndarray, r: int, c: int, radius: int = 6) -> tuple[int, int]:
    """Closest unblocked cell to (r, c) within ``radius`` cells; (-1, -1) if none."""
    H, W = blocked.shape
    r0, r1 = max(r - radius, 0), min(r + radius + 1, H)
    c0, c1 = max(c - radius, 0), min(c + radius + 1, W)
    rr, cc = np.mgrid[r0:r1, c0:c1]
    open_ = ~blocked[r0:r1, c0:c1]
    if not open_.any():
        return -1, -1
    d2 = np.where(open_, (rr - r) ** 2 + (cc - c) ** 2, np.iinfo(np.int64).max)
    k = np.unravel_index(np.argmin(d2), d2.shape)
    return int(rr[k]), int(cc[k])


def _fractional_cell(grid: OccupancyGrid, point) -> np.ndarray:
    """``(row, col)`` of a world point in fractional cell units."""
    return (np.asarray(point, float)[::-1] - np.array(grid.origin[::-1])) / grid.resolution


def plan_path(grid: OccupancyGrid, start, goal, inflation: float = 0.3) -> np.ndarray:
    """Shortest 8-connected path through free and unknown cells, shortcut by line of sight.

    Returns a polyline of world points starting exactly at ``start`` and ending
    exactly at ``goal``, or an empty ``(0, 2)`` array when the goal is unreachable.
    If the start cell lies inside the inflation band the search starts from the
    nearest open cell, and the polyline leaves the band toward the furthest path
    vertex reachable without coming closer to obstacles than the start.
    """
    start = np.asarray(start, float)
    goal = np.asarray(goal, float)
    cells = cell_path(grid, start, goal, inflation)
    if len(cells) == 0:
        return np.empty((0, 2))
    if len(cells) == 1:
        return np.array([start, goal]) if np.any(start != goal) else start[None].copy()
    blocked = grid.blocked(inflation)
    frac = frac_start = _fractional_cell(grid, start)
    gfrac = _fractional_cell(grid, goal)
    sr, sc = grid.world_to_cell(start)
    if blocked[sr, sc]:
        frac = cells[0].astype(float)
    keep = _shortcut(blocked, cells, frac[0], frac[1], gfrac[0], gfrac[1])
    pts = grid.cell_to_world(cells[keep, 0], cells[keep, 1])
    pts[-1] = goal
    if blocked[sr, sc]:
        # leave the inflation band toward the furthest vertex reachable without getting
        # closer to obstacles than the start, rather than doubling back to the open cell
        relaxed = grid.blocked(float(grid.clearance[sr, sc]) - 1e-6)
        r0, c0 = frac_start
        j = next((j for j in range(len(pts) - 1, 0, -1)
                  if _line_clear(relaxed, r0, c0, *_fractional_cell(grid, pts[j]))), 0)
        pts = np.vstack([start, pts[j:]])
    else:
        pts[0] = start
    return _dedupe(pts)


def _dedupe(pts: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    keep = [0]
    for i in range(1, len(pts)):
        if np.linalg.norm(pts[i] - pts[keep[-1]]) > tol:
            keep.append(i)
    return pts[keep]


# ---------------------------------------------------------------------------
# reference trajectories


def _arc_point(p0, h0, kappa, sigma):
    """Point and heading at arc length ``sigma`` along a constant-curvature piece."""
    h = h0 + kappa * sigma
    straight = np.abs(kappa) < 1e-9
    k = np.where(straight, 1.0, kappa)
    dx = np.where(straight, sigma * np.cos(h0), (np.sin(h) - np.sin(h0)) / k)
    dy = np.where(straight, sigma * np.sin(h0), (np.cos(h0) - np.cos(h)) / k)
    return np.stack([p0[..., 0] + dx, p0[..., 1] + dy], axis=-1), h


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Time-parameterized path of line and circular-arc pieces.

    The speed profile has piecewise-constant acceleration between ``knot_t``;
    after ``goal_time`` the reference rests at ``goal``.
    """

    t_start: float
    goal: np.ndarray
    seg_s0: np.ndarray
    seg_len: np.ndarray
    seg_p0: np.ndarray
    seg_h0: np.ndarray
    seg_kappa: np.ndarray
    knot_t: np.ndarray
    knot_s: np.ndarray
    knot_u: np.ndarray
    knot_a: np.ndarray

    @classmethod
    def constant(cls, goal, t_start: float = 0.0) -> "ReferenceTrajectory":
        goal = np.asarray(goal, float)
        e = np.zeros(0)
        return cls(t_start, goal, e, e, np.zeros((0, 2)), e, e,
                   np.array([t_start]), np.zeros(1), np.zeros(1), np.zeros(1))

    @property
    def goal_time(self) -> float:
        return float(self.knot_t[-1])

    @property
    def length(self) -> float:
        return float(self.seg_s0[-1] + self.seg_len[-1]) if len(self.seg_len) else 0.0

    @property
    def start(self) -> np.ndarray:
        return self.seg_p0[0].copy() if len(self.seg_p0) else self.goal.copy()

    @property
    def breakpoints(self):
        """Knot table ``(t, y, ydot, yddot)`` at the profile breakpoints."""
        y, yd, ydd = self.sample(self.knot_t)
        return self.knot_t.copy(), y, yd, ydd

    def geometry(self, s):
        """Position, heading and curvature at arc length ``s``."""
        s = np.clip(np.asarray(s, float), 0.0, self.length)
        i = np.clip(np.searchsorted(self.seg_s0, s, side="right") - 1, 0, len(self.seg_s0) - 1)
        pos, head = _arc_point(self.seg_p0[i], self.seg_h0[i], self.seg_kappa[i], s - self.seg_s0[i])
        return pos, head, self.seg_kappa[i]

    def sample(self, t):
        """``(y_d, ydot_d, yddot_d)`` at times ``t`` (arrays of shape ``t.shape + (2,)``)."""
        t = np.asarray(t, float)
        shape = t.shape
        t = t.ravel()
        y = np.broadcast_to(self.goal, (t.size, 2)).copy()
        yd = np.zeros((t.size, 2))
        ydd = np.zeros((t.size, 2))
        moving = t < self.goal_time
        if len(self.seg_len) and moving.any():
            tm = np.maximum(t[moving], self.t_start)
            k = np.clip(np.searchsorted(self.knot_t, tm, side="right") - 1, 0, len(self.knot_t) - 2)
            dt = tm - self.knot_t[k]
            a = self.knot_a[k]
            u = self.knot_u[k] + a * dt
            s = self.knot_s[k] + self.knot_u[k] * dt + 0.5 * a * dt**2
            pos, head, kappa = self.geometry(s)
            T = np.stack([np.cos(head), np.sin(head)], axis=-1)
            N = np.stack([-np.sin(head), np.cos(head)], axis=-1)
            y[moving] = pos
            yd[moving] = u[:, None] * T
            ydd[moving] = a[:, None] * T + (u**2 * kappa)[:, None] * N
        return y.reshape(shape + (2,)), yd.reshape(shape + (2,)), ydd.reshape(shape + (2,))

    def position(self, t) -> np.ndarray:
        return self.sample(t)[0]

    def stacked(self, t) -> np.ndarray:
        """Samples packed as rows ``[y, ydot, yddot]`` (shape ``t.shape + (6,)``)."""
        y, yd, ydd = self.sample(t)
        return np.concatenate([y, yd, ydd], axis=-1)


def fillet_path(path: np.ndarray, radius: float,
                clearance_fn: Callable | None = None, min_clearance: float = 0.0,
                min_radius: float = 0.02):
    """Replace polyline corners with tangent circular arcs.

    Returns piece arrays ``(p0, h0, kappa, length)``.  Radii shrink to fit the
    adjacent segments and, when ``clearance_fn`` is given, until the arc keeps
    ``min_clearance``.  Corners too tight for ``min_radius`` stay sharp (a
    zero-length piece with infinite curvature marks them).
    """
    path = np.asarray(path, float)
    n = len(path)
    seg = np.diff(path, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    heading = np.arctan2(seg[:, 1], seg[:, 0])
    turn = np.zeros(n)
    for i in range(1, n - 1):
        turn[i] = math.remainder(heading[i] - heading[i - 1], 2 * math.pi)
    tangent = np.zeros(n)
    radii = np.zeros(n)
    for i in range(1, n - 1):
        half = abs(turn[i]) / 2
        if half < 1e-9:
            continue
        avail_in = seg_len[i - 1] if i == 1 else seg_len[i - 1] / 2
        avail_out = seg_len[i] if i == n - 2 else seg_len[i] / 2
        r = min(radius, min(avail_in, avail_out) / math.tan(half)) if half < math.pi / 2 - 1e-9 else 0.0
        while r >= min_radius and clearance_fn is not None:
            T = r * math.tan(half)
            p0 = path[i] - T * np.array([math.cos(heading[i - 1]), math.sin(heading[i - 1])])
            kappa = math.copysign(1.0 / r, turn[i])
            sig = np.linspace(0.0, abs(turn[i]) * r, 16)
            pts, _ = _arc_point(p0[None], np.array([heading[i - 1]]), np.array([kappa]), sig)
            if np.all(clearance_fn(pts) > min_clearance):
                break
            r *= 0.7
        if r >= min_radius:
            radii[i] = r
            tangent[i] = r * math.tan(half)
    p0s, h0s, kappas, lens = [], [], [], []
    for i in range(n - 1):
        a = path[i] + tangent[i] * np.array([math.cos(heading[i]), math.sin(heading[i])])
        L = seg_len[i] - tangent[i] - tangent[i + 1]
        if L > 1e-12:
            p0s.append(a)
            h0s.append(heading[i])
            kappas.append(0.0)
            lens.append(L)
        if i + 1 < n - 1 and abs(turn[i + 1]) > 1e-9:
            b = path[i + 1] - tangent[i + 1] * np.array([math.cos(heading[i]), math.sin(heading[i])])
            if radii[i + 1] > 0:
                p0s.append(b)
                h0s.append(heading[i])
                kappas.append(math.copysign(1.0 / radii[i + 1], turn[i + 1]))
                lens.append(abs(turn[i + 1]) * radii[i + 1])
            else:
                p0s.append(path[i + 1].copy())
                h0s.append(heading[i + 1])
                kappas.append(math.inf)
                lens.append(0.0)
    return np.array(p0s).reshape(-1, 2), np.array(h0s), np.array(kappas), np.array(lens)


def _speed_envelope(lens, caps, a_cap, u0):
    """Squared-speed envelope ``q(s)`` (piecewise linear in s) for per-piece speed caps.

    Returns knots ``(s, q)``; between knots the envelope is linear, i.e. the
    acceleration is constant.
    """
    s0 = np.concatenate([[0.0], np.cumsum(lens)])
    total = s0[-1]
    # each line: q = c0 + c1 s on [lo, hi]
    lines = [(u0**2, 2 * a_cap, 0.0, total), (2 * a_cap * total, -2 * a_cap, 0.0, total)]
    for j, cap in enumerate(caps):
        lo, hi = s0[j], s0[j + 1]
        q = cap**2
        lines.append((q, 0.0, lo, hi))
        lines.append((q + 2 * a_cap * lo, -2 * a_cap, 0.0, lo))
        lines.append((q - 2 * a_cap * hi, 2 * a_cap, hi, total))
    cand = set(s0.tolist())
    for i in range(len(lines)):
        for j in range(i + 1, len(lines)):
            c0a, c1a, _, _ = lines[i]
            c0b, c1b, _, _ = lines[j]
            if abs(c1a - c1b) > 1e-15:
                s = (c0b - c0a) / (c1a - c1b)
                if 0.0 < s < total:
                    cand.add(s)
    grid = np.array(sorted(cand))

    def q_at(s, side):
        best = np.inf
        for c0, c1, lo, hi in lines:
            # a point on a piece boundary takes the tighter of both sides' limits
            if lo - 1e-12 <= s <= hi + 1e-12:
                best = min(best, c0 + c1 * s)
        return max(best, 0.0)

    q = np.array([q_at(s, 0) for s in grid])
    keep = np.concatenate([[True], np.diff(grid) > 1e-12])
    return grid[keep], q[keep]


def time_parameterize(path, v_cruise: float, a_cap: float, curvature_cap: float, *,
                      omega_cap: float | None = None, v_start: float = 0.0, t_start: float = 0.0,
                      clearance_fn: Callable | None = None,
                      min_clearance: float = 0.0) -> ReferenceTrajectory:
    """Turn a polyline into a reference trajectory with goal dwell.

    Corners are filleted with radius ``1/curvature_cap`` (smaller where space
    is short).  The speed profile accelerates and decelerates at ``a_cap``, caps
    speed at ``v_cruise`` and, on arcs, at ``omega_cap * radius`` so the heading
    rate demand stays bounded.  It starts at ``v_start`` and stops at the goal.
    """
    path = np.atleast_2d(np.asarray(path, float))
    if len(path) == 0:
        raise ValueError("path must be non-empty")
    if v_cruise <= 0 or a_cap <= 0 or curvature_cap <= 0:
        raise ValueError("v_cruise, a_cap and curvature_cap must be positive")
    path = _dedupe(path)
    goal = path[-1].copy()
    if len(path) == 1:
        return ReferenceTrajectory.constant(goal, t_start)
    p0, h0, kappa, lens = fillet_path(path, 1.0 / curvature_cap, clearance_fn, min_clearance)
    caps = np.full(len(lens), v_cruise)
    curved = np.abs(kappa) > 1e-9
    if omega_cap is not None:
        with np.errstate(divide="ignore"):
            caps[curved] = np.minimum(v_cruise, omega_cap / np.abs(kappa[curved]))
    caps[np.isinf(kappa)] = 0.0
    kappa = np.where(np.isinf(kappa), 0.0, kappa)
    u0 = min(max(v_start, 0.0), caps[0])
    s_knots, q = _speed_envelope(lens, caps, a_cap, u0)
    u = np.sqrt(q)
    ds = np.diff(s_knots)
    acc = np.zeros(len(ds))
    dur = np.zeros(len(ds))
    for i, d in enumerate(ds):
        du = u[i + 1] - u[i]
        if abs(du) < 1e-12:
            dur[i] = d / u[i] if u[i] > 0 else np.inf
        else:
            dur[i] = 2 * d / (u[i] + u[i + 1])
            acc[i] = du / dur[i]
    if not np.all(np.isfinite(dur)):
        raise RuntimeError("speed profile stalls before reaching the goal")
    # merge consecutive intervals with the same acceleration
    keep = [0] + [i for i in range(1, len(ds)) if abs(acc[i] - acc[i - 1]) > 1e-12] + [len(ds)]
    knot_t = t_start + np.concatenate([[0.0], np.cumsum(dur)])[keep]
    knot_a = np.concatenate([acc, [0.0]])[keep]
    s_knots, u = s_knots[keep], u[keep]
    seg_s0 = np.concatenate([[0.0], np.cumsum(lens)[:-1]])
    return ReferenceTrajectory(t_start, goal, seg_s0, lens, p0, h0, kappa,
                               knot_t, s_knots, u, knot_a)


def reference_collision_time(ref: ReferenceTrajectory, grid: OccupancyGrid, window,
                             d_min: float, step: float = 0.05) -> float | None:
    """Earliest sampled time in ``window`` where ``y_d`` comes within ``d_min`` of an obstacle."""
    t0, t1 = window
    t1 = min(t1, max(ref.goal_time, t0))
    n = max(int(math.ceil((t1 - t0) / step - 1e-9)), 0)
    times = t0 + step * np.arange(n + 1)
    times[-1] = min(times[-1], t1) if n else t0
    pts = ref.position(times)
    hit = grid.clearance_at(pts) <= d_min
    if hit.any():
        return float(times[np.argmax(hit)])
    return None
