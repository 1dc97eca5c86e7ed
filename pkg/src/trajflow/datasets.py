"""Synthetic fixtures: a square street grid and noisy copies of one route."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import LineString, Trajectory

# 10 grid edges with four turns
DEFAULT_MOVES = "EENNEEENNE"
_STEP = {"E": (1, 0), "W": (-1, 0), "N": (0, 1), "S": (0, -1)}


@dataclass
class GridFixture:
    cell: float
    size: int
    truth: LineString
    routes: list[LineString]
    grid: list[LineString]

    @property
    def truth_segments(self) -> int:
        return 1


def grid_lines(size: int = 8, cell: float = 100.0) -> list[LineString]:
    """Every unit edge of a ``size`` x ``size`` node grid."""
    out = []
    for i in range(size):
        for j in range(size):
            x, y = i * cell, j * cell
            if i + 1 < size:
                out.append(LineString([(x, y), (x + cell, y)]))
            if j + 1 < size:
                out.append(LineString([(x, y), (x, y + cell)]))
    return out


def grid_route(moves: str = DEFAULT_MOVES, cell: float = 100.0, origin=(0, 0)) -> LineString:
    x, y = origin
    pts = [(x * cell, y * cell)]
    for m in moves:
        dx, dy = _STEP[m]
        x, y = x + dx, y + dy
        pts.append((x * cell, y * cell))
    return LineString(pts)


def jitter(line: LineString, sigma: float, rng: np.random.Generator) -> LineString:
    arr = line.array
    return LineString(arr + rng.normal(0.0, sigma, size=arr.shape))


def make_grid_routes(
    n_copies: int = 200,
    sigma: float = 1.5,
    *,
    moves: str = DEFAULT_MOVES,
    cell: float = 100.0,
    seed: int = 0,
) -> GridFixture:
    """``n_copies`` copies of one grid route with every vertex jittered."""
    rng = np.random.default_rng(seed)
    truth = grid_route(moves, cell)
    size = max(max(int(round(v / cell)) for v in p) for p in truth.coords) + 2
    routes = [jitter(truth, sigma, rng) for _ in range(n_copies)]
    return GridFixture(cell, size, truth, routes, grid_lines(size, cell))


def densify_trajectory(line: LineString, spacing: float, tid: str, sigma: float = 0.0, seed: int = 0) -> Trajectory:
    """GPS-like points every ``spacing`` metres along ``line``, optionally noisy."""
    rng = np.random.default_rng(seed)
    n = max(2, int(np.ceil(line.length / spacing)) + 1)
    pts = np.array([line.interpolate(s) for s in np.linspace(0.0, line.length, n)])
    if sigma > 0:
        pts = pts + rng.normal(0.0, sigma, size=pts.shape)
    return Trajectory(tid, [tuple(p) for p in pts], [float(i) for i in range(n)])


def write_grid_fixture(out_dir, fx: GridFixture | None = None, origin=(9.7320, 52.3759), n_clean: int = 10) -> dict:
    """Write the fixture as WGS84 files: network, clean trajectories, routes.

    Clean trajectories visit the route's grid nodes only, so they match
    the network exactly.
    """
    from pathlib import Path

    from . import io

    fx = fx or make_grid_routes()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    proj = io.Projection(*origin)
    paths = {k: out / f"{k}.geojson" for k in ("network", "routes", "trajectories")}
    io.write_geojson(paths["network"], [io.line_feature(g, proj, {"id": str(i)}) for i, g in enumerate(fx.grid)])
    io.write_geojson(paths["routes"], [io.line_feature(r, proj, {"id": str(i)}) for i, r in enumerate(fx.routes)])
    io.write_geojson(
        paths["trajectories"], [io.line_feature(fx.truth, proj, {"id": f"clean{i}"}) for i in range(n_clean)]
    )
    return paths
