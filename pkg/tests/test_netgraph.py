import itertools

import numpy as np
import pytest

from trajflow.flow import FlowLine
from trajflow.geom import LineString
from trajflow.netgraph import (
    KEdgePath,
    NetworkGraph,
    NoPathError,
    greedy_disjoint,
    k_edge_paths,
    shortest_path,
    sort_paths,
    split_nodes,
)


def fl(flow, *pts):
    return FlowLine(flow, LineString(pts))


def geoms(lines):
    return sorted(f.line.coords for f in lines)


# --- split_nodes ---------------------------------------------------------------


@pytest.mark.parametrize("mode", ["subdivision", "unary"])
def test_split_disjoint_unchanged(mode):
    lines = [fl(1, (0, 0), (10, 0)), fl(2, (0, 5), (10, 5))]
    assert geoms(split_nodes(lines, mode)) == geoms(lines)


def test_split_x_crossing():
    lines = [fl(1, (0, 0), (10, 10)), fl(2, (0, 10), (10, 0))]
    assert geoms(split_nodes(lines, "subdivision")) == geoms(lines)
    out = split_nodes(lines, "unary")
    assert len(out) == 4
    assert all((5.0, 5.0) in (f.line.start, f.line.end) for f in out)
    assert sorted(f.flow for f in out) == [1, 1, 2, 2]


@pytest.mark.parametrize("mode", ["subdivision", "unary"])
def test_split_shared_vertex(mode):
    lines = [fl(1, (0, 0), (5, 5), (10, 10)), fl(2, (0, 10), (5, 5), (10, 0))]
    out = split_nodes(lines, mode)
    assert len(out) == 4 and all((5.0, 5.0) in (f.line.start, f.line.end) for f in out)


def test_split_rejects_unknown_mode():
    with pytest.raises(ValueError):
        split_nodes([fl(1, (0, 0), (1, 0))], "bogus")


def test_unary_result_has_no_interior_crossings(rng):
    import shapely

    for _ in range(10):
        lines = [
            FlowLine(1, LineString(np.cumsum(rng.uniform(-20, 20, size=(4, 2)), axis=0))) for _ in range(5)
        ]
        out = split_nodes(lines, "unary")
        total = sum(f.line.length for f in lines)
        assert sum(f.line.length for f in out) == pytest.approx(total, rel=1e-9)
        for a, b in itertools.combinations(out, 2):
            inter = shapely.intersection(shapely.LineString(a.line.array), shapely.LineString(b.line.array))
            if inter.is_empty or inter.geom_type not in ("Point", "MultiPoint"):
                continue
            ends = {a.line.start, a.line.end, b.line.start, b.line.end}
            for p in getattr(inter, "geoms", [inter]):
                assert min(np.hypot(p.x - e[0], p.y - e[1]) for e in ends) < 1e-4


# --- k-edge paths ------------------------------------------------------------


def path_graph():
    return NetworkGraph([fl(1, (0, 0), (1, 0)), fl(1, (1, 0), (2, 0))])


def triangle():
    return NetworkGraph([fl(1, (0, 0), (1, 0)), fl(2, (1, 0), (0, 1)), fl(3, (0, 1), (0, 0))])


def test_k_edge_paths_examples():
    ps = k_edge_paths(path_graph(), 2)
    assert len(ps) == 1 and sorted(ps[0].edges) == [0, 1]
    assert len(k_edge_paths(triangle(), 2)) == 3
    g = triangle()
    assert [p.edges for p in k_edge_paths(g, 1)] == [(0,), (1,), (2,)]
    with pytest.raises(ValueError):
        k_edge_paths(g, 5)


def brute_paths(g, k):
    """Every edge-simple path of k edges, up to reversal, by permutation."""
    found = set()
    for combo in itertools.permutations(range(len(g.edges)), k):
        for start in set(g.ends[combo[0]]):
            node, ok, nodes = start, True, [start]
            for e in combo:
                if node not in g.ends[e]:
                    ok = False
                    break
                node = g.other(e, node)
                nodes.append(node)
            if ok:
                key = (combo, tuple(nodes))
                found.add(min(key, (combo[::-1], tuple(nodes[::-1]))))
    return found


@pytest.mark.parametrize("k", [2, 3, 4])
def test_k_edge_paths_match_enumeration(k):
    # 2x3 grid with a diagonal: cycles, branching nodes
    pts = {(i, j): (10.0 * i, 10.0 * j) for i in range(3) for j in range(2)}
    es = [((0, 0), (1, 0)), ((1, 0), (2, 0)), ((0, 1), (1, 1)), ((1, 1), (2, 1)), ((0, 0), (0, 1)),
          ((1, 0), (1, 1)), ((2, 0), (2, 1)), ((0, 0), (1, 1))]
    g = NetworkGraph([fl(1 + n, pts[a], pts[b]) for n, (a, b) in enumerate(es)])
    mine = set()
    for p in k_edge_paths(g, k):
        nodes = list(p.nodes) + [g.other(p.edges[-1], p.nodes[-1])]
        key = (p.edges, tuple(nodes))
        mine.add(min(key, (p.edges[::-1], tuple(nodes[::-1]))))
    assert mine == brute_paths(g, k)
    for p in k_edge_paths(g, k):
        assert p.line(g).length == pytest.approx(p.length)


# --- shortest path -------------------------------------------------------------


def grid_graph(n=3, cell=10.0):
    lines = []
    for i in range(n):
        for j in range(n):
            if i + 1 < n:
                lines.append(fl(1, (i * cell, j * cell), ((i + 1) * cell, j * cell)))
            if j + 1 < n:
                lines.append(fl(1, (i * cell, j * cell), (i * cell, (j + 1) * cell)))
    return NetworkGraph(lines)


def brute_shortest(g, a, b):
    src, dst = g.node_index[a], g.node_index[b]
    best = np.inf

    def dfs(n, seen, length):
        nonlocal best
        if n == dst:
            best = min(best, length)
            return
        for e in g.adj[n]:
            m = g.other(e, n)
            if m not in seen:
                dfs(m, seen | {m}, length + g.edges[e].length)

    dfs(src, {src}, 0.0)
    return best


def test_shortest_path_grid():
    g = grid_graph()
    path = shortest_path(g, (0.0, 0.0), (20.0, 20.0))
    assert path.length == pytest.approx(40) == brute_shortest(g, (0.0, 0.0), (20.0, 20.0))
    # ties resolve to the lexicographically smallest node sequence
    assert path.coords == ((0, 0), (0, 10), (0, 20), (10, 20), (20, 20))
    assert shortest_path(g, (0.0, 0.0), (20.0, 20.0)) == path


def test_shortest_path_random_pairs(rng):
    g = NetworkGraph([fl(1, tuple(a), tuple(b)) for a, b in rng.integers(0, 4, size=(14, 2, 2)) * 10.0 if tuple(a) != tuple(b)])
    for a, b in itertools.combinations(g.nodes, 2):
        ref = brute_shortest(g, a, b)
        if np.isinf(ref):
            with pytest.raises(NoPathError):
                shortest_path(g, a, b)
        else:
            assert shortest_path(g, a, b).length == pytest.approx(ref)


def test_shortest_path_errors():
    g = NetworkGraph([fl(1, (0, 0), (1, 0)), fl(1, (5, 5), (6, 5))])
    assert shortest_path(g, (0.0, 0.0), (1.0, 0.0)).coords == ((0, 0), (1, 0))
    with pytest.raises(NoPathError):
        shortest_path(g, (0.0, 0.0), (6.0, 5.0))
    with pytest.raises(NoPathError):
        shortest_path(g, (0.0, 0.0), (0.0, 0.0))


# --- greedy disjoint -------------------------------------------------------------


def kp(*edges):
    return KEdgePath(tuple(edges), tuple(range(len(edges))), 1, float(len(edges)))


def test_greedy_examples():
    ps = [kp(0, 1), kp(2, 3), kp(4)]
    assert greedy_disjoint(ps) == ps
    assert greedy_disjoint([kp(0, 1), kp(1, 2)]) == [kp(0, 1)]


def test_greedy_maximal_and_disjoint(rng):
    for _ in range(50):
        ps = [kp(*rng.choice(12, size=int(rng.integers(1, 4)), replace=False)) for _ in range(15)]
        kept = greedy_disjoint(ps)
        used = [e for p in kept for e in p.edges]
        assert len(used) == len(set(used))
        for p in ps:
            if p not in kept:
                assert not set(p.edges).isdisjoint(used)


def test_sort_paths_by_flow_then_length():
    g = NetworkGraph([fl(2, (0, 0), (5, 0)), fl(2, (0, 1), (9, 1)), fl(7, (0, 2), (1, 2))])
    order = [p.edges for p in sort_paths(k_edge_paths(g, 1))]
    assert order == [(2,), (1,), (0,)]
