"""Flow lines, flow maps and exact-overlap aggregation."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

from .geom import LineString, Point


@dataclass(frozen=True)
class FlowLine:
    flow: int
    line: LineString

    def __post_init__(self):
        if int(self.flow) != self.flow or self.flow < 1:
            raise ValueError(f"flow must be a positive integer, got {self.flow!r}")
        object.__setattr__(self, "flow", int(self.flow))

    @property
    def length(self) -> float:
        return self.line.length

    def key(self) -> tuple:
        return (self.flow, self.line.canonical())


def sort_key(f: FlowLine):
    return (-f.flow, -round(f.length, 6), f.line.canonical())


class FlowMap:
    """Flow lines sorted by descending flow, then length."""

    def __init__(self, lines: Iterable[FlowLine] = ()):
        self.lines: list[FlowLine] = sorted(lines, key=sort_key)

    def __len__(self) -> int:
        return len(self.lines)

    def __iter__(self):
        return iter(self.lines)

    def __getitem__(self, i):
        return self.lines[i]

    def signature(self) -> tuple:
        return tuple(sorted(f.key() for f in self.lines))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FlowMap) and self.signature() == other.signature()

    def __repr__(self) -> str:
        return f"FlowMap(n={len(self.lines)}, total_flow_length={self.flow_length():.1f})"

    def flow_length(self) -> float:
        return sum(f.flow * f.length for f in self.lines)


def round_half_up(x: float) -> int:
    # tolerate float noise just below the .5 boundary
    return int(math.floor(x + 0.5 + 1e-9))


def weighted_mean_flow(parts: Sequence[tuple[int, float]] | Sequence[FlowLine]) -> int:
    """Length-weighted mean flow, rounded half up and clamped to at least 1."""
    if not parts:
        raise ValueError("no parts to average")
    pairs = [(p.flow, p.length) if isinstance(p, FlowLine) else (p[0], p[1]) for p in parts]
    total = sum(length for _, length in pairs)
    if total <= 0:
        raise ValueError("parts have zero total length")
    return max(1, round_half_up(sum(f * length for f, length in pairs) / total))


# ---------------------------------------------------------------------------
# overline


Seg = tuple[Point, Point]


def atomic_segments(lines: Iterable[FlowLine]) -> dict[Seg, int]:
    """Sum flows over orientation-normalised vertex-to-vertex segments."""
    acc: dict[Seg, int] = defaultdict(int)
    for f in lines:
        c = f.line.coords
        for a, b in zip(c, c[1:]):
            acc[(a, b) if a <= b else (b, a)] += f.flow
    return dict(acc)


def _orient(coords: list[Point]) -> list[Point]:
    if coords[0] == coords[-1]:
        # ring: start at the smallest vertex, go towards the smaller neighbour
        body = coords[:-1]
        k = body.index(min(body))
        body = body[k:] + body[:k]
        if len(body) > 2 and body[-1] < body[1]:
            body = [body[0]] + body[:0:-1]
        return body + [body[0]]
    return coords if coords[0] <= coords[-1] else coords[::-1]


def chains_from_segments(segs: dict[Seg, int], *, join_on_equal_flow: bool = True) -> list[FlowLine]:
    """Join atomic segments into maximal runs through pass-through nodes.

    A node is pass-through when exactly two segments meet there and (if
    ``join_on_equal_flow``) they carry the same flow.
    """
    inc: dict[Point, list[Seg]] = defaultdict(list)
    for s in sorted(segs):
        inc[s[0]].append(s)
        inc[s[1]].append(s)

    def passes(node: Point) -> bool:
        e = inc[node]
        return len(e) == 2 and e[0] != e[1] and (not join_on_equal_flow or segs[e[0]] == segs[e[1]])

    used: set[Seg] = set()
    out: list[FlowLine] = []

    def walk(start: Point, first: Seg) -> list[Point]:
        coords = [start]
        node, seg = start, first
        while True:
            used.add(seg)
            nxt = seg[1] if seg[0] == node else seg[0]
            coords.append(nxt)
            if nxt == start or not passes(nxt):
                return coords
            a, b = inc[nxt]
            seg = b if a == seg else a
            if seg in used:
                return coords
            node = nxt

    for node in sorted(inc):
        if passes(node):
            continue
        for s in inc[node]:
            if s not in used:
                coords = walk(node, s)
                out.append(FlowLine(segs[s], LineString(_orient(coords))))
    # isolated rings made only of pass-through nodes
    for s in sorted(segs):
        if s not in used:
            coords = walk(s[0], s)
            out.append(FlowLine(segs[s], LineString(_orient(coords))))
    return out


def overline(lines: Iterable[FlowLine]) -> FlowMap:
    """Aggregate flows over exactly coincident segments.

    Every line is cut into vertex-to-vertex segments; flows on identical
    (quantized, orientation-free) segments are summed, and runs of equal
    flow are re-joined between branching nodes.
    """
    return FlowMap(chains_from_segments(atomic_segments(lines)))


# ---------------------------------------------------------------------------
# pruning


def _endpoint_degrees(lines: Sequence[FlowLine]) -> dict[Point, int]:
    deg: dict[Point, int] = defaultdict(int)
    for f in lines:
        deg[f.line.start] += 1
        deg[f.line.end] += 1
    return deg


def merge_pseudo_nodes(lines: Sequence[FlowLine]) -> list[FlowLine]:
    """Concatenate runs of edges through degree-2 nodes, weighted-mean flow."""
    deg = _endpoint_degrees(lines)
    inc: dict[Point, list[int]] = defaultdict(list)
    for i, f in enumerate(lines):
        inc[f.line.start].append(i)
        inc[f.line.end].append(i)

    def pseudo(node: Point) -> bool:
        e = inc[node]
        return deg[node] == 2 and len(e) == 2 and e[0] != e[1]

    used: set[int] = set()
    out: list[FlowLine] = []

    def walk(node: Point, i: int) -> FlowLine:
        coords: list[Point] = []
        parts: list[tuple[int, float]] = []
        start = node
        while True:
            used.add(i)
            f = lines[i]
            c = list(f.line.coords)
            if c[0] != node:
                c.reverse()
            coords.extend(c if not coords else c[1:])
            parts.append((f.flow, f.length))
            node = c[-1]
            if node == start or not pseudo(node):
                break
            a, b = inc[node]
            i = b if a == i else a
            if i in used:
                break
        flow = parts[0][0] if len(parts) == 1 else weighted_mean_flow(parts)
        return FlowLine(flow, LineString(_orient(coords)))

    for node in sorted(inc):
        if pseudo(node):
            continue
        for i in inc[node]:
            if i not in used:
                out.append(walk(node, i))
    for i in range(len(lines)):
        if i not in used:
            out.append(walk(lines[i].line.start, i))
    return out


def prune_once(lines: Sequence[FlowLine], f_min: int) -> list[FlowLine]:
    merged = merge_pseudo_nodes(lines)
    kept = [f for f in merged if not (f.line.is_closed and f.flow <= f_min)]
    deg = _endpoint_degrees(kept)
    out = []
    for f in kept:
        ds, de = deg[f.line.start], deg[f.line.end]
        leaf = (ds == 1) != (de == 1)
        if leaf and f.flow <= f_min:
            continue
        out.append(f)
    return out


def prune(fmap: FlowMap | Sequence[FlowLine], f_min: int = 1, max_iter: int = 20) -> FlowMap:
    """Remove pseudo nodes, then low-flow self loops and dangling leaf edges.

    Repeats until nothing changes or ``max_iter`` rounds have run. Edges
    that are isolated components (both ends of degree one) are not leaves.
    """
    cur = FlowMap(fmap)
    for _ in range(max_iter):
        nxt = FlowMap(prune_once(cur.lines, f_min))
        if nxt == cur:
            return nxt
        cur = nxt
    return cur
