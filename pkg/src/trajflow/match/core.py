"""Route selection: waypoint resampling of a matched route and DTW choice."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from ..geom import LineString, Point, Trajectory, dtw_normalized, hausdorff
from .backends import MatchBackend

log = logging.getLogger(__name__)

DEFAULT_NW = (3, 13, 23, 33, 43, 63, 83)
H_MAX = 100.0
R_MAX = 1.1
MIN_LENGTH = 100.0


@dataclass
class RouteMatch:
    traj_id: str
    route: LineString | None
    n_w: int | None = None
    dtw: float = float("nan")
    hausdorff: float = float("nan")
    length_ratio: float = float("nan")
    accepted: bool = False
    reason: str = ""
    candidates: list[tuple[int, float]] = field(default_factory=list)

    def diagnostics(self) -> dict:
        return {
            "id": self.traj_id,
            "n_w": self.n_w,
            "dtw": self.dtw,
            "hausdorff": self.hausdorff,
            "length_ratio": self.length_ratio,
            "accepted": self.accepted,
        }


def sample_waypoints(route: LineString, n_w: int) -> list[Point]:
    """Start, end and ``n_w - 2`` evenly spaced edge start points of ``route``.

    Intermediate waypoint ``j`` sits at edge index ``round(j * n_M / (n_w - 1))``
    clamped to ``1 .. n_M - 1``; repeated indices are kept once.
    """
    if n_w < 2:
        raise ValueError("need at least two waypoints")
    c = route.coords
    n_m = len(c) - 1
    idx = [0]
    for j in range(1, n_w - 1):
        i = min(max(int(round(j * n_m / (n_w - 1))), 1), n_m - 1)
        if n_m >= 2 and i != idx[-1]:
            idx.append(i)
    idx.append(n_m)
    return [c[i] for i in idx]


def quality_filter(m: RouteMatch, h_max: float = H_MAX, r_max: float = R_MAX) -> bool:
    return m.route is not None and m.hausdorff < h_max and m.length_ratio < r_max


def st_route(
    g: Trajectory,
    backend: MatchBackend,
    n_w_list: Sequence[int] = DEFAULT_NW,
    *,
    h_max: float = H_MAX,
    r_max: float = R_MAX,
) -> RouteMatch:
    """Match ``g``, re-route through resampled waypoints, keep the best route.

    Every waypoint count in ``n_w_list`` yields one candidate; the one with
    the smallest normalised DTW to the GPS points wins (earliest on ties).
    """
    if not n_w_list or any(n < 2 for n in n_w_list):
        raise ValueError("waypoint counts must be at least 2")
    initial = backend.match(g)
    if initial is None:
        return RouteMatch(g.id, None, reason="unmatched")
    best: tuple[float, int, LineString] | None = None
    scores = []
    for n_w in n_w_list:
        cand = backend.route(sample_waypoints(initial, n_w))
        if cand is None:
            continue
        d = dtw_normalized(cand.coords, g.points)
        scores.append((n_w, d))
        if best is None or d < best[0]:
            best = (d, n_w, cand)
    if best is None:
        return RouteMatch(g.id, None, reason="no_route")
    d, n_w, route = best
    m = RouteMatch(
        g.id,
        route,
        n_w=n_w,
        dtw=d,
        hausdorff=hausdorff(route, g.array),
        length_ratio=route.length / g.length if g.length > 0 else float("inf"),
        candidates=scores,
    )
    m.accepted = quality_filter(m, h_max, r_max)
    if not m.accepted:
        m.reason = "quality"
    return m


def match_all(
    trajs: Sequence[Trajectory],
    backend: MatchBackend,
    n_w_list: Sequence[int] = DEFAULT_NW,
    *,
    h_max: float = H_MAX,
    r_max: float = R_MAX,
    min_length: float = MIN_LENGTH,
    n_jobs: int = 1,
) -> list[RouteMatch]:
    """Run :func:`st_route` over many trajectories, in input order.

    Trajectories not longer than ``min_length`` are rejected unmatched.
    """
    def one(g: Trajectory) -> RouteMatch:
        if not g.length > min_length:
            return RouteMatch(g.id, None, reason="too_short")
        return st_route(g, backend, n_w_list, h_max=h_max, r_max=r_max)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            return list(ex.map(one, trajs))
    return [one(g) for g in trajs]
