import numpy as np
import pytest

from strategies import random_flow_map_lines, random_node_cluster_map
from trajflow.align import (
    PipelineConfig,
    Stage,
    blend_pass,
    blend_priority,
    is_blend_candidate,
    line_blend,
    overline_lineblend,
    overline_pipeline,
    run_pipeline,
    snap_cand_touch,
    snap_nodes,
)
from trajflow.flow import FlowLine, FlowMap, overline
from trajflow.geom import LineString, distance_to_line
from trajflow.netgraph import split_nodes

A, B, C = (0.0, 3.0), (50.0, 0.0), (100.0, 0.0)
D, D_ = (80.0, 2.0), (80.0, 0.0)


def fl(flow, *pts):
    return FlowLine(flow, LineString(pts))


def sig(lines):
    return sorted((f.flow, f.line.coords) for f in lines)


# --- snap_nodes ------------------------------------------------------------------


def test_snap_equal_weights():
    out = snap_nodes([fl(1, (0, 0), (-20, 0)), fl(1, (0, 3), (20, 3))], 4)
    assert all((0.0, 1.5) in f.line.coords for f in out)


def test_snap_flow_weighted():
    out = snap_nodes([fl(3, (0, 0), (-20, 0)), fl(1, (0, 3), (20, 3))], 4)
    assert all((0.0, 0.75) in f.line.coords for f in out)


def test_snap_gap_exceeds_tolerance():
    lines = [fl(1, (0, 0), (-20, 0)), fl(1, (0, 3), (20, 3))]
    assert sig(snap_nodes(lines, 2)) == sig(lines)


def test_snap_drops_collapsed_lines():
    out = snap_nodes([fl(1, (0, 0), (1, 0)), fl(1, (30, 0), (0, 0))], 4)
    assert len(out) == 1


def displacement_ok(before, after, eps):
    pts_before = np.array([p for f in before for p in f.line.coords])
    for f in after:
        for p in f.line.coords:
            assert np.min(np.hypot(*(pts_before - p).T)) <= eps + 1e-6


@pytest.mark.parametrize("gen", [random_flow_map_lines, random_node_cluster_map])
def test_snap_bound_and_idempotent(rng, gen):
    for _ in range(30):
        lines = gen(rng, int(rng.integers(2, 30)))
        once = snap_nodes(lines, 4)
        displacement_ok(lines, once, 4)
        assert snap_nodes(once, 4) == once


def test_snap_refines_single_pass_clusters():
    # the nested cut gives {p, q} and {r}; their centroids are 3.8 m apart,
    # so a plain second pass would move them again
    p, q, r = (1.8, 2.5), (0.2, 0.7), (4.0, 3.9)
    lines = [fl(1, p, (1.8, 60)), fl(1, q, (-60, 0.7)), fl(1, r, (60, 3.9))]
    once = snap_nodes(lines, 4)
    assert {f.line.start for f in once} == {(2.0, 2.366667)}
    assert snap_nodes(once, 4) == once


# --- candidates and blending ---------------------------------------------------------


def test_candidate_examples():
    ref, cand = fl(7, A, B, C), fl(2, A, D)
    assert is_blend_candidate(ref, cand, 4)
    assert not is_blend_candidate(cand, ref, 4)
    assert not is_blend_candidate(ref, fl(5, (97, 2), (97, 40)), 4)
    assert not is_blend_candidate(fl(3, (0, 0), (50, 0)), fl(1, (0, 5), (50, 5)), 4)


def test_line_blend_golden():
    res = line_blend(fl(7, A, B, C), [fl(2, A, D)], 4)
    assert res.ref_line.coords == (A, B, D_, C)
    assert sig(res.cands) == [(2, (A, B, D_))]
    assert res.dropped == []


def test_line_blend_identity():
    ref = fl(7, A, B, C)
    res = line_blend(ref, [fl(3, A, B, C)], 4)
    assert res.ref_line == ref.line
    assert res.cands[0].line == ref.line


def test_line_blend_jittered_vertices_on_reference(rng):
    for _ in range(20):
        ref_arr = np.cumsum(rng.uniform(10, 40, size=(5, 2)), axis=0)
        ref = FlowLine(9, LineString(ref_arr))
        t = np.sort(rng.uniform(0, 1, 6))
        cum = ref.line.cumulative_lengths()
        pts = [np.array(ref.line.interpolate(x * cum[-1])) + rng.normal(0, 0.5, 2) for x in t]
        cand = FlowLine(2, LineString(pts))
        if not is_blend_candidate(ref, cand, 4):
            continue
        res = line_blend(ref, [cand], 4)
        verts = set(res.ref_line.coords)
        for c in res.cands:
            assert set(c.line.coords) <= verts
            assert distance_to_line(c.line.array, res.ref_line).max() == 0


def test_line_blend_drops_degenerate_candidate():
    res = line_blend(fl(7, (0, 0), (100, 0)), [fl(1, (50, 1), (50, -1))], 4)
    assert res.cands == [] and len(res.dropped) == 1


def test_snap_cand_touch_examples():
    ref = fl(9, A, B, D_, C)
    cand = fl(2, A, (97, 2))
    out = snap_cand_touch(ref, [cand], [fl(5, (97, 2), (97, 40))], 4)
    assert sig(out) == [(5, (C, (97, 40)))]
    # contact already on the reference
    on = fl(4, (50.0, 0.0), (50, 30))
    assert sig(snap_cand_touch(ref, [fl(2, (60, 30), (50, 0))], [on], 4)) == sig([on])
    # far from both ends: perpendicular foot
    out = snap_cand_touch(fl(9, (0, 0), (100, 0)), [fl(2, (0, 0), (40, 2))], [fl(3, (40, 2), (40, 30))], 4)
    assert sig(out) == [(3, ((40.0, 0.0), (40, 30)))]


# --- priority -------------------------------------------------------------------------


def test_priority_examples():
    fm = FlowMap([fl(5, (0, 0), (100, 0)), fl(2, (10, 1), (90, 1))])
    gs = blend_priority(fm, 1, 4)
    assert len(gs) == 1
    assert fm[gs[0].reference.edges[0]].flow == 5
    assert [fm[c].flow for c in gs[0].candidates] == [2]

    fm = FlowMap([fl(3, (0, 0), (50, 0)), fl(3, (0, 1), (60, 1))])
    (g,) = blend_priority(fm, 1, 4)
    assert fm[g.reference.edges[0]].line.length == 60

    assert blend_priority(FlowMap([fl(5, (0, 0), (10, 0)), fl(2, (0, 50), (10, 50))]), 1, 4) == []


def test_priority_roles_exclusive(rng):
    for _ in range(20):
        fm = FlowMap(snap_nodes(split_nodes(random_flow_map_lines(rng, 12, extent=30), "unary"), 4))
        for k in (1, 2, 3):
            groups = blend_priority(fm, k, 4, 4)
            owned, touching = set(), set()
            for g in groups:
                mine = list(g.reference.edges) + g.candidates
                assert len(mine) == len(set(mine))
                assert owned.isdisjoint(mine) and set(g.touching).isdisjoint(mine)
                owned.update(mine)
                touching.update(g.touching)
                ref = FlowLine(g.reference.flow, g.ref_line)
                assert all(is_blend_candidate(ref, fm[c], 4) for c in g.candidates)
            # touching lines may be shared between groups, never owned
            assert owned.isdisjoint(touching)


def test_blend_pass_touching_golden():
    fm = FlowMap([fl(7, A, B, C), fl(2, A, (97, 2)), fl(5, (97, 2), (97, 40))])
    assert sig(blend_pass(fm, 1, 4, 4)) == [(5, (C, (97, 40))), (9, (A, B, (97, 0), C))]


def test_overline_lineblend_golden():
    out = overline_lineblend(FlowMap([fl(7, A, B, C), fl(2, A, D)]), "subdivision", 1, 4, 4)
    assert sig(out) == [(9, (A, B, D_, C))]


def test_overline_lineblend_without_groups():
    fm = FlowMap([fl(5, (0, 0), (10, 0)), fl(2, (0, 50), (10, 50))])
    assert overline_lineblend(fm, "unary", 1, 4, 4) == FlowMap(snap_nodes(split_nodes(fm.lines, "unary"), 4))


def test_blend_pass_parallel_identical(rng):
    from concurrent.futures import ThreadPoolExecutor

    for _ in range(5):
        fm = FlowMap(snap_nodes(random_flow_map_lines(rng, 20, extent=60), 4))
        with ThreadPoolExecutor(4) as ex:
            assert blend_pass(fm, 2, 4, 4, executor=ex) == blend_pass(fm, 2, 4, 4)


# --- pipeline ------------------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        Stage("bogus")
    with pytest.raises(ValueError):
        Stage(k_list=(5,))
    with pytest.raises(ValueError):
        PipelineConfig(max_iter=0)
    cfg = PipelineConfig(stages=[{"split": "unary", "k_list": [1], "eps": 3, "eps_snap": 3}])
    assert cfg.stages[0] == Stage("unary", (1,), 3, 3)


def test_pipeline_single_route():
    route = LineString([(0, 0), (50, 0.2), (100, 0), (100, 100), (200, 100)])
    maps = overline_pipeline([route])
    assert len(maps) == 5
    for m in maps:
        assert len(m) == 1 and m[0].flow == 1
    assert maps[-1][0].line.length == pytest.approx(route.length, rel=1e-3)


def test_pipeline_terminates_and_records_exits():
    routes = [LineString([(0, 0), (100, 0)]), LineString([(0, 2), (100, 2)]), LineString([(0, 0), (0, 100)])]
    res = run_pipeline(routes, PipelineConfig(max_iter=3))
    for e in res.exits:
        assert e["exit"] in ("fixed_point", "max_iter") and 1 <= e["iterations"] <= 3
    # the flow-1 spur is a dangling leaf and is pruned
    assert sorted(f.flow for f in res.final) == [2]


def test_pipeline_rejects_empty():
    with pytest.raises(ValueError):
        run_pipeline([])
