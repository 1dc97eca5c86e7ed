"""Local alignment of flow lines: node snapping, line blending and the
iterated aggregation pipeline."""
from __future__ import annotations

import logging
from collections import defaultdict
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .cluster import nested_two_pass
from .flow import FlowLine, FlowMap, overline, prune, weighted_mean_flow
from .geom import TOL, LineString, Point, buffer_flat, contains, dist, point_segment_distances, qpoint, simplify
from .netgraph import SPLIT_MODES, KEdgePath, NetworkGraph, greedy_disjoint, k_edge_paths, sort_paths, split_nodes

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class Stage:
    split: str = "unary"
    k_list: tuple[int, ...] = (1, 2)
    eps: float = 4.0
    eps_snap: float = 4.0

    def __post_init__(self):
        if self.split not in SPLIT_MODES:
            raise ValueError(f"unknown split mode {self.split!r}")
        if self.eps <= 0 or self.eps_snap <= 0:
            raise ValueError("stage tolerances must be positive")
        if not self.k_list or any(k not in (1, 2, 3, 4) for k in self.k_list):
            raise ValueError(f"k values must lie in 1..4, got {self.k_list!r}")
        object.__setattr__(self, "k_list", tuple(int(k) for k in self.k_list))


DEFAULT_STAGES = (
    Stage("subdivision", (1, 2), 4.0, 4.0),
    Stage("unary", (1, 2), 4.0, 4.0),
    Stage("unary", (1, 2, 3, 4), 5.0, 5.0),
    Stage("unary", (1, 2, 3, 4), 5.0, 5.0),
)


@dataclass(frozen=True)
class PipelineConfig:
    stages: tuple[Stage, ...] = DEFAULT_STAGES
    eps_simplify: float = 1.0
    max_iter: int = 20
    min_flow: int = 1

    def __post_init__(self):
        if not self.stages:
            raise ValueError("at least one stage is required")
        if self.eps_simplify <= 0:
            raise ValueError("simplify tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.min_flow < 0:
            raise ValueError("min_flow must be non-negative")
        object.__setattr__(self, "stages", tuple(s if isinstance(s, Stage) else Stage(**s) for s in self.stages))

    def to_dict(self) -> dict:
        return {
            "stages": [
                {"split": s.split, "k_list": list(s.k_list), "eps": s.eps, "eps_snap": s.eps_snap} for s in self.stages
            ],
            "eps_simplify": self.eps_simplify,
            "max_iter": self.max_iter,
            "min_flow": self.min_flow,
        }


# ---------------------------------------------------------------------------
# node snapping


def _centroid(pts: np.ndarray, w: np.ndarray, m: np.ndarray) -> np.ndarray:
    return (pts[m] * w[m, None]).sum(0) / w[m].sum()


def _radius_ok(pts: np.ndarray, w: np.ndarray, m: np.ndarray, eps: float) -> bool:
    return bool(np.linalg.norm(pts[m] - _centroid(pts, w, m), axis=1).max() <= eps)


def _stable_groups(pts: np.ndarray, w: np.ndarray, eps: float) -> list[np.ndarray]:
    """Refine the nested clustering until no two centroids lie within ``eps``.

    A single clustering pass can leave neighbouring centroids closer than
    ``eps``, so snapping again would move them. Close pairs are merged,
    nearest first, when every member stays within ``eps`` of the merged
    centroid. If no pair can merge, the nearest pair is merged without the
    members that would end up too far away; those stay where they are as
    singletons.
    Every group keeps all members within ``eps`` of its centroid.
    """
    groups = [np.asarray(g) for g in nested_two_pass(pts, eps).groups()]
    for _ in range(4 * len(pts) + 10):
        if len(groups) < 2:
            return groups
        cents = np.array([qpoint(*_centroid(pts, w, m)) for m in groups])
        pairs = cKDTree(cents).query_pairs(eps, output_type="ndarray")
        if len(pairs) == 0:
            return groups
        pairs = np.sort(pairs, axis=1)
        d = np.linalg.norm(cents[pairs[:, 0]] - cents[pairs[:, 1]], axis=1)
        order = pairs[np.lexsort((pairs[:, 1], pairs[:, 0], d))]
        used: set[int] = set()
        new: list[np.ndarray] = []
        for i, j in order.tolist():
            if i in used or j in used:
                continue
            m = np.sort(np.concatenate([groups[i], groups[j]]))
            if _radius_ok(pts, w, m, eps):
                used.update((i, j))
                new.append(m)
        if not new:
            for i, j in order.tolist():
                both = np.sort(np.concatenate([groups[i], groups[j]]))
                keep = both
                while not _radius_ok(pts, w, keep, eps):
                    d = np.linalg.norm(pts[keep] - _centroid(pts, w, keep), axis=1)
                    far = d > eps
                    keep = np.delete(keep, np.flatnonzero(far) if not far.all() else [int(d.argmax())])
                if len(keep) in (len(groups[i]), len(groups[j])) and (
                    np.array_equal(keep, groups[i]) or np.array_equal(keep, groups[j])
                ):
                    continue
                used.update((i, j))
                new.append(keep)
                new.extend(np.array([b]) for b in np.setdiff1d(both, keep))
                break
        if not new:
            break
        groups = sorted([g for k, g in enumerate(groups) if k not in used] + new, key=lambda g: int(g[0]))
    log.debug("snap clustering stopped with centroids closer than %g m", eps)
    return groups


def snap_nodes(fmap: FlowMap | Sequence[FlowLine], eps_s: float) -> FlowMap:
    """Cluster line end points and pull them to flow-weighted centroids.

    End points are grouped by a nested single/complete-linkage cut at
    ``eps_s``, refined so that no two centroids end up within ``eps_s`` of
    each other. Every end point moves to its own cluster's centroid, and any
    other vertex of a member line lying within ``eps_s`` of one of its
    clusters' centroids moves to the nearest such centroid.
    """
    return FlowMap([f for f in snap_lines(fmap, eps_s) if f is not None])


def snap_lines(fmap: FlowMap | Sequence[FlowLine], eps_s: float) -> list[FlowLine | None]:
    """:func:`snap_nodes` per input line, in input order; ``None`` where a line collapsed."""
    if eps_s <= 0:
        raise ValueError("snap tolerance must be positive")
    lines = list(fmap)
    if not lines:
        return []
    pts = np.array([p for f in lines for p in (f.line.start, f.line.end)], dtype=float)
    w = np.repeat([float(f.flow) for f in lines], 2)
    members = _stable_groups(pts, w, eps_s)
    cents = [qpoint(*((pts[m] * w[m, None]).sum(0) / w[m].sum())) for m in members]
    target: dict[int, int] = {}
    for c, m in enumerate(members):
        for b in m:
            target[int(b)] = c
    out = []
    for i, f in enumerate(lines):
        cs, ce = target[2 * i], target[2 * i + 1]
        own = sorted({cs, ce})
        coords = list(f.line.coords)
        arr = f.line.array
        if len(coords) > 2:
            cen = np.array([cents[c] for c in own])
            d = np.linalg.norm(arr[1:-1, None, :] - cen[None], axis=-1)
            near = d.argmin(axis=1)
            for v in np.flatnonzero(d.min(axis=1) <= eps_s):
                coords[v + 1] = cents[own[near[v]]]
        coords[0] = cents[cs]
        coords[-1] = cents[ce]
        ls = LineString.try_make(coords)
        out.append(None if ls is None else FlowLine(f.flow, ls))
    return out


# ---------------------------------------------------------------------------
# line blending


def is_blend_candidate(ref: FlowLine, cand: FlowLine, eps: float) -> bool:
    """``cand`` lies inside the flat-capped ``eps`` buffer of ``ref`` and
    carries no more flow."""
    return cand.flow <= ref.flow and contains(buffer_flat(ref.line, eps), cand.line)


def project_points(ref: np.ndarray, pts: np.ndarray):
    """Segment index, parameter and foot of each point's projection on a
    polyline; ties go to the smallest arc length."""
    d, t = point_segment_distances(pts[:, None, :], ref[None, :-1], ref[None, 1:])
    best = d.min(axis=1, keepdims=True)
    seg = (d <= best + 1e-9).argmax(axis=1)
    tt = t[np.arange(len(pts)), seg]
    foot = ref[seg] + tt[:, None] * (ref[seg + 1] - ref[seg])
    return seg, tt, foot, best[:, 0]


@dataclass
class BlendResult:
    ref_parts: list[tuple[int, tuple[Point, ...]]]
    cands: list[FlowLine]
    dropped: list[FlowLine] = field(default_factory=list)

    @property
    def ref_line(self) -> LineString:
        coords: list[Point] = []
        for _, c in self.ref_parts:
            coords.extend(c if not coords else c[1:])
        return LineString(coords)


def _concat(parts: Sequence[Sequence[Point]]) -> tuple[list[Point], list[int]]:
    coords: list[Point] = []
    bounds = [0]
    for c in parts:
        coords.extend(c if not coords else c[1:])
        bounds.append(len(coords) - 1)
    return coords, bounds


def _insert(coords: list[Point], bounds: list[int], ins: dict[int, list[tuple[float, Point]]]):
    """Insert points into segments; returns new coords and part boundaries."""
    new: list[Point] = [coords[0]]
    remap = {0: 0}
    for s in range(len(coords) - 1):
        for _, p in sorted(ins.get(s, ())):
            if p != new[-1] and p != coords[s + 1]:
                new.append(p)
        new.append(coords[s + 1])
        remap[s + 1] = len(new) - 1
    return new, [remap[b] for b in bounds]


def _path_between(coords: list[Point], simple: bool, graph: Callable[[], NetworkGraph], a: Point, b: Point) -> LineString:
    if simple:
        i, j = coords.index(a), coords.index(b)
        return LineString(coords[i : j + 1] if i <= j else coords[j : i + 1][::-1])
    return graph().shortest_path(a, b)


def line_blend(
    ref: FlowLine | Sequence[tuple[int, Sequence[Point]]], cands: Sequence[FlowLine], eps: float
) -> BlendResult:
    """Blend candidate lines onto a reference.

    ``ref`` is a flow line or a path of ``(flow, coords)`` parts. Every
    candidate vertex is projected onto the reference and the foot inserted
    as a reference vertex; each candidate becomes the path along the refined
    reference between its projected end points. Candidates whose ends
    project onto the same point are returned in ``dropped``, unchanged.
    """
    if isinstance(ref, FlowLine):
        parts = [(ref.flow, tuple(ref.line.coords))]
    else:
        parts = [(int(f), tuple(c)) for f, c in ref]
    coords, bounds = _concat([c for _, c in parts])
    arr = np.asarray(coords, dtype=float)
    ins: dict[int, list[tuple[float, Point]]] = defaultdict(list)
    ends: list[tuple[Point, Point]] = []
    for cand in cands:
        pts = cand.line.array
        seg, t, foot, _ = project_points(arr, pts)
        feet = [qpoint(x, y) for x, y in foot]
        for s, tt, p in zip(seg.tolist(), t.tolist(), feet):
            ins[s].append((tt, p))
        ends.append((feet[0], feet[-1]))
    refined, new_bounds = _insert(coords, bounds, ins)
    ref_parts = [(parts[i][0], tuple(refined[new_bounds[i] : new_bounds[i + 1] + 1])) for i in range(len(parts))]
    simple = len(set(refined)) == len(refined)
    cache: list[NetworkGraph] = []

    def graph() -> NetworkGraph:
        if not cache:
            cache.append(NetworkGraph.from_linestrings([LineString(refined)], vertex_level=True))
        return cache[0]

    out, dropped = [], []
    for cand, (a, b) in zip(cands, ends):
        if a == b:
            dropped.append(cand)
            continue
        out.append(FlowLine(cand.flow, _path_between(refined, simple, graph, a, b)))
    return BlendResult(ref_parts, out, dropped)


def _contact_target(g: Point, ref_line: LineString, eps_s: float) -> Point:
    start, end = ref_line.start, ref_line.end
    ds, de = dist(g, start), dist(g, end)
    if ds <= eps_s and ds <= de:
        return start
    if de <= eps_s and de <= ds:
        return end
    arr = ref_line.array
    seg, t, foot, _ = project_points(arr, np.asarray([g], dtype=float))
    s = int(seg[0])
    for v in (ref_line.coords[s], ref_line.coords[s + 1]):
        if dist(v, foot[0]) <= TOL:
            return v
    return qpoint(*foot[0])


def _snap_touching(ref_line: LineString, cand_ends: set[Point], line: FlowLine, eps_s: float):
    coords = list(line.line.coords)
    moved: list[Point] = []
    for g in dict.fromkeys(p for p in coords if p in cand_ends):
        tgt = _contact_target(g, ref_line, eps_s)
        if tgt != g:
            coords = [tgt if p == g else p for p in coords]
            moved.append(tgt)
    if not moved:
        return line, []
    ls = LineString.try_make(coords)
    return (FlowLine(line.flow, ls) if ls is not None else None), moved


def snap_cand_touch(
    ref: FlowLine | LineString, cands: Sequence[FlowLine], touching: Sequence[FlowLine], eps_s: float
) -> list[FlowLine]:
    """Re-attach lines that touched a candidate's end points to the reference.

    A contact point goes to the nearer reference end point if that is
    within ``eps_s``, otherwise to its nearest point on the reference.
    Lines that collapse to a point are dropped.
    """
    ref_line = ref.line if isinstance(ref, FlowLine) else ref
    ends = {p for c in cands for p in (c.line.start, c.line.end)}
    out = []
    for f in touching:
        new, _ = _snap_touching(ref_line, ends, f, eps_s)
        if new is not None:
            out.append(new)
    return out


# ---------------------------------------------------------------------------
# blending priority


@dataclass
class BlendGroup:
    reference: KEdgePath
    ref_parts: list[tuple[int, tuple[Point, ...]]]
    candidates: list[int]
    touching: list[int]

    @property
    def ref_line(self) -> LineString:
        coords, _ = _concat([c for _, c in self.ref_parts])
        return LineString(coords)


def _touch_moves(g: Point, ref_line: LineString, eps_s: float) -> bool:
    return _contact_target(g, ref_line, eps_s) != g


def blend_priority(fmap: FlowMap, k: int, eps: float, eps_s: float | None = None) -> list[BlendGroup]:
    """Choose references, their candidates and candidate-touching lines.

    References are disjoint ``k``-edge paths taken in descending (flow,
    length) order. Each line takes at most one role in a pass. Lines that
    touch a candidate only at points that would not move when snapped are
    left free for later groups.
    """
    eps_s = eps if eps_s is None else eps_s
    lines = list(fmap)
    if not lines:
        return []
    g = NetworkGraph(lines)
    paths = sort_paths(k_edge_paths(g, k))
    if k > 1:
        paths = greedy_disjoint(paths)
    boxes = np.array([f.line.bounds() for f in lines])
    flows = np.array([f.flow for f in lines])
    ends_of = [{f.line.start, f.line.end} for f in lines]
    by_point: dict[Point, list[int]] = defaultdict(list)
    for i, f in enumerate(lines):
        for p in set(f.line.coords):
            by_point[p].append(i)
    role: dict[int, str] = {}
    groups: list[BlendGroup] = []
    for p in paths:
        if any(e in role for e in p.edges):
            continue
        ref_line = p.line(g)
        x0, y0, x1, y1 = ref_line.bounds()
        inside = (
            (boxes[:, 0] >= x0 - eps - TOL)
            & (boxes[:, 1] >= y0 - eps - TOL)
            & (boxes[:, 2] <= x1 + eps + TOL)
            & (boxes[:, 3] <= y1 + eps + TOL)
            & (flows <= p.flow)
        )
        pool = [int(i) for i in np.flatnonzero(inside) if int(i) not in role and int(i) not in p.edges]
        if not pool:
            continue
        buf = buffer_flat(ref_line, eps)
        cands = [i for i in pool if contains(buf, lines[i].line)]
        if not cands:
            continue
        for e in p.edges:
            role[e] = "ref"
        for c in cands:
            role[c] = "cand"
        cand_ends = set().union(*(ends_of[c] for c in cands))
        touch = set()
        for q in cand_ends:
            if not _touch_moves(q, ref_line, eps_s):
                continue
            for i in by_point.get(q, ()):
                if role.get(i) in (None, "touch"):
                    touch.add(i)
        for t in touch:
            role[t] = "touch"
        groups.append(BlendGroup(p, [(f.flow, tuple(c)) for f, c in zip((g.edges[e] for e in p.edges), p.parts(g))], cands, sorted(touch)))
    return groups


# ---------------------------------------------------------------------------
# one blending pass


def _blend_group(ref_parts, cands: list[FlowLine], eps: float):
    res = line_blend(ref_parts, cands, eps)
    extra: dict[tuple[Point, Point], int] = defaultdict(int)
    for c in res.cands:
        co = c.line.coords
        for a, b in zip(co, co[1:]):
            extra[(a, b) if a <= b else (b, a)] += c.flow
    out_parts = []
    for flow, co in res.ref_parts:
        segs = []
        for a, b in zip(co, co[1:]):
            segs.append((flow + extra.get((a, b) if a <= b else (b, a), 0), dist(a, b)))
        out_parts.append((weighted_mean_flow(segs), co))
    return BlendResult(out_parts, res.cands, res.dropped)


def _insert_on_line(coords: tuple[Point, ...], pts: Iterable[Point]) -> tuple[Point, ...]:
    arr = np.asarray(coords, dtype=float)
    ins: dict[int, list[tuple[float, Point]]] = defaultdict(list)
    for p in pts:
        if p in coords:
            continue
        d, t = point_segment_distances(np.asarray(p, dtype=float)[None, None], arr[None, :-1], arr[None, 1:])
        s = int(d[0].argmin())
        if d[0, s] <= TOL:
            ins[s].append((float(t[0, s]), p))
    if not ins:
        return coords
    new, _ = _insert(list(coords), [0], ins)
    return tuple(new)


def blend_pass(
    fmap: FlowMap, k: int, eps: float, eps_s: float, *, executor: Executor | None = None, stats: dict | None = None
) -> FlowMap:
    """Blend every priority group and re-attach touching lines.

    Groups are blended independently (optionally on ``executor``); touching
    lines are then snapped one group at a time in priority order.
    """
    lines = list(fmap)
    groups = blend_priority(fmap, k, eps, eps_s)
    busy = set()
    for grp in groups:
        busy.update(grp.reference.edges)
        busy.update(grp.candidates)
        busy.update(grp.touching)
    carry = [f for i, f in enumerate(lines) if i not in busy]
    jobs = [(grp.ref_parts, [lines[c] for c in grp.candidates], eps) for grp in groups]
    if executor is not None and len(jobs) > 1:
        results = list(executor.map(_blend_group, *zip(*jobs)))
    else:
        results = [_blend_group(*j) for j in jobs]
    current: dict[int, FlowLine | None] = {t: lines[t] for grp in groups for t in grp.touching}
    out: list[FlowLine] = []
    n_dropped = 0
    for grp, res in zip(groups, results):
        ref_line = res.ref_line
        cand_ends = {p for c in grp.candidates for p in (lines[c].line.start, lines[c].line.end)}
        attach: list[Point] = []
        for t in grp.touching:
            if current[t] is None:
                continue
            current[t], moved = _snap_touching(ref_line, cand_ends, current[t], eps_s)
            attach.extend(moved)
        for flow, co in res.ref_parts:
            out.append(FlowLine(flow, LineString(_insert_on_line(co, attach))))
        out.extend(res.dropped)
        n_dropped += len(res.dropped)
    out.extend(f for t, f in sorted(current.items()) if f is not None)
    out.extend(carry)
    if stats is not None:
        stats.update(groups=len(groups), dropped=n_dropped)
    if n_dropped:
        log.debug("%d candidates dropped from blending (ends project to one point)", n_dropped)
    return FlowMap(out)


def overline_lineblend(
    fmap: FlowMap,
    split: str,
    k: int,
    eps: float,
    eps_s: float,
    *,
    executor: Executor | None = None,
    stats: dict | None = None,
) -> FlowMap:
    """Split nodes, snap nodes, then run one blending pass."""
    lines = split_nodes(list(fmap), split)
    snapped = snap_nodes(lines, eps_s)
    return blend_pass(snapped, k, eps, eps_s, executor=executor, stats=stats)


# ---------------------------------------------------------------------------
# full pipeline


@dataclass
class IterationRecord:
    stage: int
    k: int | None
    iteration: int
    n_lines: int
    groups: int = 0

    def to_dict(self) -> dict:
        return {"stage": self.stage, "k": self.k, "iteration": self.iteration, "n_lines": self.n_lines, "groups": self.groups}


@dataclass
class PipelineResult:
    maps: list[FlowMap]
    history: list[IterationRecord] = field(default_factory=list)
    exits: list[dict] = field(default_factory=list)

    @property
    def final(self) -> FlowMap:
        return self.maps[-1]


def initial_flow_map(routes: Sequence[LineString], split: str, eps_d: float) -> FlowMap:
    fm = overline(FlowLine(1, r) for r in routes)
    parts = split_nodes(fm.lines, split)
    simplified = [FlowLine(f.flow, simplify(f.line, eps_d)) for f in parts]
    return overline(simplified)


def run_pipeline(routes: Sequence[LineString], cfg: PipelineConfig | None = None, *, n_jobs: int = 1) -> PipelineResult:
    cfg = cfg or PipelineConfig()
    routes = list(routes)
    if not routes:
        raise ValueError("no routes to aggregate")
    executor = ThreadPoolExecutor(n_jobs) if n_jobs > 1 else None
    try:
        fm = initial_flow_map(routes, cfg.stages[0].split, cfg.eps_simplify)
        res = PipelineResult([fm], [IterationRecord(0, None, 0, len(fm))])
        for si, st in enumerate(cfg.stages, start=1):
            for k in st.k_list:
                prev, j = None, 0
                while j < cfg.max_iter and prev != fm:
                    prev, j = fm, j + 1
                    stats: dict = {}
                    fm = overline_lineblend(fm, st.split, k, st.eps, st.eps_snap, executor=executor, stats=stats)
                    fm = overline(fm.lines)
                    res.history.append(IterationRecord(si, k, j, len(fm), stats.get("groups", 0)))
                reason = "fixed_point" if prev == fm else "max_iter"
                if reason == "max_iter":
                    log.warning("stage %d k=%d hit max_iter=%d without a fixed point", si, k, cfg.max_iter)
                res.exits.append({"stage": si, "k": k, "iterations": j, "exit": reason})
            prev, j = None, 0
            while j < cfg.max_iter and prev != fm:
                prev, j = fm, j + 1
                fm = prune(fm, cfg.min_flow, max_iter=1)
                res.history.append(IterationRecord(si, None, j, len(fm)))
            res.exits.append({"stage": si, "k": None, "iterations": j, "exit": "fixed_point" if prev == fm else "max_iter"})
            res.maps.append(fm)
        return res
    finally:
        if executor is not None:
            executor.shutdown()


def overline_pipeline(routes: Sequence[LineString], cfg: PipelineConfig | None = None, *, n_jobs: int = 1) -> list[FlowMap]:
    """Flow maps after the initial aggregation and after every stage."""
    return run_pipeline(routes, cfg, n_jobs=n_jobs).maps
