"""Graphs over flow lines: noding, k-edge paths and shortest paths."""
from __future__ import annotations

import heapq
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import shapely

from .flow import FlowLine, weighted_mean_flow
from .geom import TOL, LineString, Point, point_segment_distances, qpoint, segment_intersections

MAX_PATHS = 2_000_000
SPLIT_MODES = ("subdivision", "unary")


class NoPathError(ValueError):
    pass


class NetworkGraph:
    """Nodes are line end points; every flow line is one edge."""

    def __init__(self, lines: Iterable[FlowLine]):
        self.edges: list[FlowLine] = list(lines)
        ends = sorted({p for f in self.edges for p in (f.line.start, f.line.end)})
        self.node_index: dict[Point, int] = {p: i for i, p in enumerate(ends)}
        self.nodes: list[Point] = ends
        self.ends: list[tuple[int, int]] = []
        self.adj: list[list[int]] = [[] for _ in ends]
        for e, f in enumerate(self.edges):
            u, v = self.node_index[f.line.start], self.node_index[f.line.end]
            self.ends.append((u, v))
            self.adj[u].append(e)
            if v != u:
                self.adj[v].append(e)
            else:
                self.adj[u].append(e)

    @classmethod
    def from_linestrings(cls, lines: Iterable[LineString], *, vertex_level: bool = False) -> NetworkGraph:
        """Graph with unit flows; ``vertex_level`` makes every segment an edge."""
        out = []
        for ls in lines:
            if vertex_level:
                c = ls.coords
                out.extend(FlowLine(1, LineString([a, b])) for a, b in zip(c, c[1:]))
            else:
                out.append(FlowLine(1, ls))
        return cls(out)

    def degree(self, p: Point) -> int:
        i = self.node_index.get(p)
        return 0 if i is None else len(self.adj[i])

    def other(self, e: int, n: int) -> int:
        u, v = self.ends[e]
        return v if u == n else u

    def oriented(self, e: int, frm: int) -> tuple[Point, ...]:
        c = self.edges[e].line.coords
        return c if self.node_index[c[0]] == frm else c[::-1]

    def shortest_path(self, a: Point, b: Point) -> LineString:
        """Minimum-length path from node ``a`` to node ``b`` as one linestring.

        Equal-length alternatives resolve to the lexicographically smallest
        node sequence.
        """
        if a not in self.node_index or b not in self.node_index:
            raise NoPathError("end points are not graph nodes")
        if a == b:
            raise NoPathError("degenerate path: start equals end")
        src, dst = self.node_index[a], self.node_index[b]
        dist = {src: 0.0}
        pred: dict[int, tuple[int, int]] = {}
        done: set[int] = set()
        heap = [(0.0, src)]

        def node_seq(n: int) -> list[int]:
            seq = [n]
            while n in pred:
                n = pred[n][0]
                seq.append(n)
            return seq[::-1]

        while heap:
            d, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            if u == dst:
                break
            for e in self.adj[u]:
                v = self.other(e, u)
                if v in done:
                    continue
                nd = d + self.edges[e].length
                old = dist.get(v)
                if old is None or nd < old - 1e-9:
                    dist[v], pred[v] = nd, (u, e)
                    heapq.heappush(heap, (nd, v))
                elif abs(nd - old) <= 1e-9:
                    cur_u, cur_e = pred[v]
                    mine = [self.nodes[n] for n in node_seq(u)]
                    theirs = [self.nodes[n] for n in node_seq(cur_u)]
                    if (mine, e) < (theirs, cur_e):
                        pred[v] = (u, e)
        if dst not in done:
            raise NoPathError("end points are disconnected")
        coords: list[Point] = []
        for n in node_seq(dst)[1:]:
            u, e = pred[n]
            c = self.oriented(e, u)
            coords.extend(c if not coords else c[1:])
        return LineString(coords)


def shortest_path(g: NetworkGraph, a: Point, b: Point) -> LineString:
    return g.shortest_path(a, b)


# ---------------------------------------------------------------------------
# k-edge paths


@dataclass(frozen=True)
class KEdgePath:
    edges: tuple[int, ...]
    nodes: tuple[int, ...]
    flow: int
    length: float

    def line(self, g: NetworkGraph) -> LineString:
        coords: list[Point] = []
        for e, frm in zip(self.edges, self.nodes):
            c = g.oriented(e, frm)
            coords.extend(c if not coords else c[1:])
        return LineString(coords)

    def parts(self, g: NetworkGraph) -> list[tuple[Point, ...]]:
        return [g.oriented(e, frm) for e, frm in zip(self.edges, self.nodes)]


def _make_path(g: NetworkGraph, edges: tuple[int, ...], nodes: tuple[int, ...]) -> KEdgePath:
    parts = [g.edges[e] for e in edges]
    return KEdgePath(edges, nodes, weighted_mean_flow(parts), sum(p.length for p in parts))


def k_edge_paths(g: NetworkGraph, k: int) -> list[KEdgePath]:
    """All edge-simple paths of exactly ``k`` edges, one per reversal pair."""
    if not 1 <= k <= 4:
        raise ValueError(f"k must be in 1..4, got {k}")
    if k == 1:
        return [_make_path(g, (e,), (g.ends[e][0],)) for e in range(len(g.edges))]
    seen: set[tuple] = set()
    out: list[KEdgePath] = []
    for start in range(len(g.nodes)):
        stack = [(start, (), (start,))]
        while stack:
            node, edges, nodes = stack.pop()
            if len(edges) == k:
                key = (edges, nodes)
                rkey = (edges[::-1], nodes[::-1])
                canon = min(key, rkey)
                if canon not in seen:
                    seen.add(canon)
                    out.append(_make_path(g, edges, nodes[:-1]))
                    if len(out) > MAX_PATHS:
                        raise RuntimeError(f"more than {MAX_PATHS} {k}-edge paths")
                continue
            for e in reversed(sorted(set(g.adj[node]))):
                if e in edges:
                    continue
                nxt = g.other(e, node)
                stack.append((nxt, edges + (e,), nodes + (nxt,)))
    return out


def sort_paths(paths: Sequence[KEdgePath]) -> list[KEdgePath]:
    return sorted(paths, key=lambda p: (-p.flow, -round(p.length, 6), p.edges, p.nodes))


def greedy_disjoint(paths: Sequence[KEdgePath]) -> list[KEdgePath]:
    """Scan in the given priority order, keeping edge-disjoint paths."""
    taken: set[int] = set()
    kept = []
    for p in paths:
        if taken.isdisjoint(p.edges):
            kept.append(p)
            taken.update(p.edges)
    return kept


# ---------------------------------------------------------------------------
# node splitting


def _split_at(coords: tuple[Point, ...], cut: set[Point]) -> list[tuple[Point, ...]]:
    parts, cur = [], [coords[0]]
    for p in coords[1:-1]:
        cur.append(p)
        if p in cut:
            parts.append(tuple(cur))
            cur = [p]
    cur.append(coords[-1])
    parts.append(tuple(cur))
    return parts


def _shared_vertices(lines: Sequence[FlowLine], *, include_self: bool) -> set[Point]:
    owners: dict[Point, set[int]] = defaultdict(set)
    repeat: set[Point] = set()
    for i, f in enumerate(lines):
        c = f.line.coords
        body = c[:-1] if f.line.is_closed else c
        if include_self:
            cnt = Counter(body)
            repeat.update(p for p, n in cnt.items() if n > 1)
        for p in c:
            owners[p].add(i)
    return {p for p, o in owners.items() if len(o) > 1} | repeat


def _segment_table(lines: Sequence[FlowLine]):
    p1, p2, owner = [], [], []
    for i, f in enumerate(lines):
        a = f.line.array
        p1.append(a[:-1])
        p2.append(a[1:])
        owner.append(np.full(len(a) - 1, i))
    return np.vstack(p1), np.vstack(p2), np.concatenate(owner)


def candidate_pairs(p1: np.ndarray, p2: np.ndarray, pad: float = TOL) -> np.ndarray:
    """Index pairs ``i < j`` of segments whose padded bounding boxes overlap."""
    lo = np.minimum(p1, p2)
    hi = np.maximum(p1, p2)
    boxes = shapely.box(lo[:, 0] - pad, lo[:, 1] - pad, hi[:, 0] + pad, hi[:, 1] + pad)
    tree = shapely.STRtree(boxes)
    pairs = tree.query(boxes).T
    return pairs[pairs[:, 0] < pairs[:, 1]]


def node_insertions(p1: np.ndarray, p2: np.ndarray) -> dict[int, list[tuple[float, Point]]]:
    """Points to insert into each segment so that all meetings become vertices."""
    ins: dict[int, list[tuple[float, Point]]] = defaultdict(list)
    pairs = candidate_pairs(p1, p2)
    if len(pairs) == 0:
        return ins
    i, j = pairs[:, 0], pairs[:, 1]
    a1, a2, b1, b2 = p1[i], p2[i], p1[j], p2[j]
    near_end = np.zeros(len(i), dtype=bool)
    for pt, s1, s2, tgt in ((a1, b1, b2, j), (a2, b1, b2, j), (b1, a1, a2, i), (b2, a1, a2, i)):
        d, t = point_segment_distances(pt, s1, s2)
        at_end = (np.linalg.norm(pt - s1, axis=1) <= TOL) | (np.linalg.norm(pt - s2, axis=1) <= TOL)
        near_end |= d <= TOL
        for k in np.flatnonzero((d <= TOL) & ~at_end):
            ins[int(tgt[k])].append((float(t[k]), (float(pt[k, 0]), float(pt[k, 1]))))
    rest = np.flatnonzero(~near_end)
    if len(rest):
        hit, t, u = segment_intersections(a1[rest], a2[rest], b1[rest], b2[rest])
        for k in np.flatnonzero(hit):
            r = rest[k]
            x = a1[r] + t[k] * (a2[r] - a1[r])
            P = qpoint(x[0], x[1])
            ins[int(i[r])].append((float(t[k]), P))
            ins[int(j[r])].append((float(u[k]), P))
    return ins


def split_nodes(lines: Sequence[FlowLine], mode: str = "subdivision") -> list[FlowLine]:
    """Split lines at interior nodes.

    ``subdivision`` splits only where an interior vertex coincides with a
    vertex of another line. ``unary`` fully nodes the arrangement: crossings,
    touches and collinear overlaps become vertices on every line involved.
    Split parts inherit their parent's flow.
    """
    if mode not in SPLIT_MODES:
        raise ValueError(f"unknown split mode {mode!r}")
    lines = list(lines)
    if not lines:
        return []
    if mode == "unary":
        p1, p2, owner = _segment_table(lines)
        ins = node_insertions(p1, p2)
        added: set[Point] = set()
        new_lines = []
        base = 0
        for f in lines:
            c = f.line.coords
            nseg = len(c) - 1
            coords = [c[0]]
            for s in range(nseg):
                extra = ins.get(base + s)
                if extra:
                    for _, P in sorted(extra):
                        coords.append(P)
                        added.add(qpoint(*P))
                coords.append(c[s + 1])
            base += nseg
            new_lines.append(FlowLine(f.flow, LineString(coords)))
        lines = new_lines
        cut = _shared_vertices(lines, include_self=True) | added
    else:
        cut = _shared_vertices(lines, include_self=False)
    out = []
    for f in lines:
        for part in _split_at(f.line.coords, cut):
            ls = LineString.try_make(part)
            if ls is not None:
                out.append(FlowLine(f.flow, ls))
    return out
