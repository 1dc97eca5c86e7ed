"""Transect validation of flow maps and origin/destination desire lines."""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import shapely

from .cluster import nested_two_pass
from .flow import FlowMap, round_half_up
from .geom import LineString, Point, Trajectory, qpoint, segment_intersections, transects

ERR_CUT = 4
RERR_CUT = 0.1
HEX_SX = 1.0
HEX_SY = 0.05


@dataclass(frozen=True)
class TransectError:
    parent: int
    index: int
    anchor: float
    flow: int
    crossings: int
    proxy_raw: float
    proxy: float
    err: float
    rerr: float

    def to_dict(self) -> dict:
        return asdict(self)


class _RouteIndex:
    """STR-tree over all route segments for transect crossing counts."""

    def __init__(self, routes: Sequence[LineString]):
        p1, p2, owner = [], [], []
        for i, r in enumerate(routes):
            a = r.array
            p1.append(a[:-1])
            p2.append(a[1:])
            owner.append(np.full(len(a) - 1, i))
        self.p1 = np.vstack(p1)
        self.p2 = np.vstack(p2)
        self.owner = np.concatenate(owner)
        lo, hi = np.minimum(self.p1, self.p2), np.maximum(self.p1, self.p2)
        self.tree = shapely.STRtree(shapely.box(lo[:, 0], lo[:, 1], hi[:, 0], hi[:, 1]))

    def hits(self, seg: LineString) -> set[tuple[int, Point]]:
        """Distinct ``(route, intersection point)`` pairs on a straight segment."""
        a, b = seg.array[0], seg.array[-1]
        x0, y0 = np.minimum(a, b)
        x1, y1 = np.maximum(a, b)
        idx = self.tree.query(shapely.box(x0, y0, x1, y1))
        if len(idx) == 0:
            return set()
        idx = np.sort(idx)
        n = len(idx)
        q1, q2 = self.p1[idx], self.p2[idx]
        hit, t, _ = segment_intersections(np.repeat(a[None], n, 0), np.repeat(b[None], n, 0), q1, q2)
        pts = a + t[:, None] * (b - a)
        # a collinear overlap counts once, at the overlap point nearest the
        # transect centre, so a route turning on the transect is not doubled
        d = b - a
        s = q2 - q1
        flat = np.abs(d[0] * s[:, 1] - d[1] * s[:, 0]) <= 1e-12 * max(1.0, float(d @ d)) * np.maximum(1.0, np.hypot(s[:, 0], s[:, 1]))
        if np.any(hit & flat):
            mid = (a + b) / 2
            ss = np.einsum("ij,ij->i", s, s)
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.clip(np.einsum("ij,ij->i", mid - q1, s) / ss, 0.0, 1.0)
            near = q1 + np.nan_to_num(w)[:, None] * s
            # clamp back onto the transect itself
            tt = np.clip((near - a) @ d / float(d @ d), 0.0, 1.0)
            pts = np.where((hit & flat)[:, None], a + tt[:, None] * d, pts)
        return {(int(self.owner[i]), qpoint(*p)) for i, p in zip(idx[hit], pts[hit])}

    def crossings(self, seg: LineString) -> int:
        return len(self.hits(seg))


def proxy_flows(
    routes: Sequence[LineString],
    fmap: FlowMap | Sequence,
    eps_t: float = 5.0,
    delta_t: float = 50.0,
    *,
    round_mean: bool = True,
) -> list[TransectError]:
    """Compare each flow line's flow with route crossings of its transects.

    The proxy flow of a line is the mean crossing count over its transects,
    rounded half up to an integer when ``round_mean`` is set. One record is
    returned per transect.
    """
    lines = list(fmap)
    if not lines:
        raise ValueError("flow map is empty")
    if not routes:
        raise ValueError("no routes to count")
    index = _RouteIndex(list(routes))
    out: list[TransectError] = []
    for i, f in enumerate(lines):
        ts = transects(f.line, eps_t, delta_t, parent=i)
        counts = [index.crossings(t.segment) for t in ts]
        raw = float(np.mean(counts))
        proxy = float(round_half_up(raw)) if round_mean else raw
        err = abs(f.flow - proxy)
        for j, (t, c) in enumerate(zip(ts, counts)):
            out.append(TransectError(i, j, t.anchor, f.flow, c, raw, proxy, err, err / f.flow))
    return out


def transect_features(fmap: FlowMap | Sequence, eps_t: float = 5.0, delta_t: float = 50.0):
    """Transect geometries in the same order as :func:`proxy_flows` records."""
    return [t for i, f in enumerate(fmap) for t in transects(f.line, eps_t, delta_t, parent=i)]


# ---------------------------------------------------------------------------
# summaries


@dataclass(frozen=True)
class ErrorSummary:
    n: int
    n_zero: int
    n_err: int
    n_rerr: int
    n_both: int
    err_cut: float
    rerr_cut: float
    mean_err: float
    max_err: float

    @property
    def zero_share(self) -> float:
        return self.n_zero / self.n

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(
            zero_share=self.zero_share,
            err_share=self.n_err / self.n,
            rerr_share=self.n_rerr / self.n,
            both_share=self.n_both / self.n,
        )
        return d


def error_summary(errors: Sequence[TransectError], err_cut: float = ERR_CUT, rerr_cut: float = RERR_CUT) -> ErrorSummary:
    if not errors:
        raise ValueError("no transect errors to summarise")
    err = np.array([e.err for e in errors])
    rerr = np.array([e.rerr for e in errors])
    big, rbig = err > err_cut, rerr > rerr_cut
    return ErrorSummary(
        n=len(errors),
        n_zero=int((err == 0).sum()),
        n_err=int(big.sum()),
        n_rerr=int(rbig.sum()),
        n_both=int((big & rbig).sum()),
        err_cut=err_cut,
        rerr_cut=rerr_cut,
        mean_err=float(err.mean()),
        max_err=float(err.max()),
    )


def hexbin(x: Sequence[float], y: Sequence[float], sx: float = HEX_SX, sy: float = HEX_SY) -> list[tuple[float, float, int]]:
    """Counts on a hexagonal lattice; returns ``(cx, cy, count)`` for non-empty bins.

    Two offset rectangular lattices are laid over the scaled plane and each
    point goes to the nearer centre, the same construction matplotlib's
    ``hexbin`` uses.
    """
    u = np.asarray(x, dtype=float) / sx
    v = np.asarray(y, dtype=float) / sy
    i1, j1 = np.round(u), np.round(v)
    i2, j2 = np.floor(u) + 0.5, np.floor(v) + 0.5
    d1 = (u - i1) ** 2 + 3.0 * (v - j1) ** 2
    d2 = (u - i2) ** 2 + 3.0 * (v - j2) ** 2
    first = d1 < d2
    cu = np.where(first, i1, i2)
    cv = np.where(first, j1, j2)
    cnt = Counter(zip(cu.tolist(), cv.tolist()))
    return sorted((a * sx, b * sy, n) for (a, b), n in cnt.items())


def error_hexbin(errors: Sequence[TransectError], sx: float = HEX_SX, sy: float = HEX_SY):
    return hexbin([e.err for e in errors], [e.rerr for e in errors], sx, sy)


# ---------------------------------------------------------------------------
# desire lines


@dataclass(frozen=True)
class DesireLine:
    hubs: tuple[int, int]
    flow: int
    geometry: LineString | Point

    @property
    def same_hub(self) -> bool:
        return self.hubs[0] == self.hubs[1]


@dataclass
class DesireResult:
    hubs: list[Point]
    lines: list[DesireLine]
    assignment: list[tuple[int, int]]


def desire_lines(trajs: Sequence[Trajectory], cutoff: float = 5000.0) -> DesireResult:
    """Hub-to-hub desire lines from clustered trajectory end points.

    Start and end points are clustered together; hubs are unweighted
    cluster centroids. Trajectories whose origin and destination fall in
    the same hub become point markers at that hub.
    """
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    trajs = list(trajs)
    if not trajs:
        return DesireResult([], [], [])
    pts = np.array([p for t in trajs for p in (t.points[0], t.points[-1])], dtype=float)
    labels = nested_two_pass(pts, cutoff)
    hubs = [qpoint(*pts[m].mean(axis=0)) for m in labels.groups()]
    lab = labels.labels
    assignment = [(int(lab[2 * i]), int(lab[2 * i + 1])) for i in range(len(trajs))]
    flows: dict[tuple[int, int], int] = defaultdict(int)
    for a, b in assignment:
        flows[(min(a, b), max(a, b))] += 1
    lines = []
    for (a, b), n in flows.items():
        geom = hubs[a] if a == b else LineString([hubs[a], hubs[b]])
        lines.append(DesireLine((a, b), n, geom))
    lines.sort(key=lambda d: (-d.flow, d.hubs))
    return DesireResult(hubs, lines, assignment)


def routes_covered(routes: Sequence[LineString], fmap: FlowMap, eps_t: float = 5.0, delta_t: float = 50.0) -> list[bool]:
    """Whether each route crosses at least one transect of the map."""
    index = _RouteIndex(list(routes))
    seen: set[int] = set()
    for t in transect_features(fmap, eps_t, delta_t):
        seen.update(r for r, _ in index.hits(t.segment))
    return [i in seen for i in range(len(routes))]
