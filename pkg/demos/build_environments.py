"""Regenerate the bundled ASCII environments.

The corridors are 0.9 m wide (cell centers within 0.45 m of the route are free)
with 45 degree bends, narrower than twice the 0.5 m robot diameter.  The two
corridor mazes form a pair: each one starts where the other ends.
"""

from pathlib import Path

import numpy as np

from arcmpc.planner import OCCUPIED, OccupancyGrid
from arcmpc.sim import World, corridor_world, format_world

OUT = Path(__file__).resolve().parents[1] / "src" / "arcmpc" / "data" / "envs"

SERPENTINE = [(1.5, 1.5), (29.5, 1.5), (31.5, 3.5), (31.5, 5.0), (29.5, 7.0), (4.0, 7.0),
              (2.0, 9.0), (2.0, 10.5), (4.0, 12.5), (30.5, 12.5)]
RETURN = [(30.5, 12.5), (20.5, 12.5), (15.0, 7.0), (8.0, 7.0), (2.5, 1.5), (1.5, 1.5)]


def embed(world: World, like: World) -> World:
    """Re-rasterize ``world`` on the grid frame of ``like`` so both share a frame."""
    src, dst = world.truth, like.truth
    cells = np.full(dst.shape, OCCUPIED, np.int8)
    rows, cols = np.indices(dst.shape)
    centers = dst.cell_to_world(rows, cols)
    cells[:] = src.value_at(centers)
    cells[cells < 0] = OCCUPIED
    return World(OccupancyGrid(dst.resolution, dst.origin, cells), world.start, world.goal,
                 world.waypoints, None, world.name)


def arena() -> World:
    res = 0.1
    n = 121
    cells = np.zeros((n, n), np.int8)
    cells[[0, -1], :] = OCCUPIED
    cells[:, [0, -1]] = OCCUPIED
    cells[50:71, 50:71] = OCCUPIED          # central pillar, 2 m square
    cells[15:30, 85:88] = OCCUPIED          # short wall segment
    grid = OccupancyGrid(res, (0.0, 0.0), cells)
    from arcmpc.core import Pose
    wps = (np.array([10.0, 1.5]), np.array([10.0, 10.0]), np.array([2.0, 10.0]))
    return World(grid, Pose(1.5, 1.5, 0.0), np.array([2.0, 3.0]), wps, None, "arena")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    a = corridor_world(SERPENTINE, name="corridor_a")
    b = embed(corridor_world(RETURN, name="corridor_b"), a)
    b = World(b.truth, b.start.__class__(*RETURN[0], np.pi), b.goal, (), None, b.name)
    for world in (a, b, arena()):
        text = format_world(world)
        (OUT / f"{world.name}.txt").write_text(text)
        print(f"{world.name}: {world.truth.shape[1]}x{world.truth.shape[0]} cells")


if __name__ == "__main__":
    main()
