"""Agglomerative clustering with a dendrogram cut.

Single linkage at cut ``h`` is the connected-component partition of the
``d <= h`` neighbour graph, so it is computed that way. Complete linkage
is agglomerated explicitly so that ties are broken deterministically.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

MAX_COMPLETE = 50_000


@dataclass(frozen=True)
class ClusterLabels:
    labels: np.ndarray
    count: int

    def groups(self) -> list[np.ndarray]:
        order = np.argsort(self.labels, kind="stable")
        splits = np.flatnonzero(np.diff(self.labels[order])) + 1
        return np.split(order, splits)


def _renumber(raw: np.ndarray) -> ClusterLabels:
    """Relabel so clusters are numbered by first appearance."""
    _, first, inv = np.unique(raw, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=int)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    labels = rank[inv.ravel()]
    return ClusterLabels(labels, len(first))


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if len(pts) == 0:
        raise ValueError("cannot cluster an empty point set")
    return pts


def single_linkage_cut(pts: np.ndarray, height: float) -> ClusterLabels:
    n = len(pts)
    pairs = cKDTree(pts).query_pairs(height, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, raw = connected_components(graph, directed=False)
    return _renumber(raw)


def complete_linkage_cut(pts: np.ndarray, height: float) -> ClusterLabels:
    n = len(pts)
    if n > MAX_COMPLETE:
        raise ValueError(f"complete linkage limited to {MAX_COMPLETE} points, got {n}")
    if n == 1:
        return ClusterLabels(np.zeros(1, dtype=int), 1)
    D = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    # only the strict upper triangle is searched; a cluster is represented
    # by its smallest member index, so argmin order gives the tie-break
    D[np.tril_indices(n)] = np.inf
    owner = np.arange(n)
    row_min = D.min(axis=1)
    row_arg = D.argmin(axis=1)
    active = np.ones(n, dtype=bool)
    while True:
        i = int(np.argmin(row_min))
        d = row_min[i]
        if not np.isfinite(d) or d > height:
            break
        j = int(row_arg[i])
        owner[owner == j] = i
        active[j] = False
        # complete linkage: new distance is the max of the two
        col = np.maximum(D[:i, i], D[:i, j])
        D[:i, i] = col
        mid = np.maximum(D[i, i + 1 : j], D[i + 1 : j, j])
        D[i, i + 1 : j] = mid
        D[i, j + 1 :] = np.maximum(D[i, j + 1 :], D[j, j + 1 :])
        D[:, j] = np.inf
        D[j, :] = np.inf
        row_min[j] = np.inf
        D[i, ~active] = np.inf
        row_min[i] = D[i].min()
        row_arg[i] = D[i].argmin()
        # rows above i whose minimum pointed at i or j must be refreshed;
        # also rows where the raised distance to i now ties an earlier column
        stale = np.flatnonzero((row_arg[:i] == i) | (row_arg[:i] == j) | ((D[:i, i] == row_min[:i]) & (i < row_arg[:i])))
        for r in stale:
            row_min[r] = D[r].min()
            row_arg[r] = D[r].argmin()
        rows_mid = np.arange(i + 1, j)
        if len(rows_mid):
            st = rows_mid[row_arg[rows_mid] == j]
            for r in st:
                row_min[r] = D[r].min()
                row_arg[r] = D[r].argmin()
    return _renumber(owner)


def hclust_cut(points: Sequence, linkage: str, height: float) -> ClusterLabels:
    """Agglomerative clustering cut at ``height``.

    Merges at exactly ``height`` are kept. With complete linkage every
    resulting cluster has diameter at most ``height``.
    """
    if height < 0:
        raise ValueError("cut height must be non-negative")
    pts = _as_points(points)
    if linkage == "single":
        return single_linkage_cut(pts, height)
    if linkage == "complete":
        return complete_linkage_cut(pts, height)
    raise ValueError(f"unknown linkage {linkage!r}")


def nested_two_pass(points: Sequence, height: float) -> ClusterLabels:
    """Single-linkage cut, then a complete-linkage cut inside each cluster.

    The complete-linkage distance matrices stay local to a single-linkage
    cluster, which keeps memory bounded by the largest such cluster.
    """
    if height < 0:
        raise ValueError("cut height must be non-negative")
    pts = _as_points(points)
    outer = single_linkage_cut(pts, height)
    raw = np.empty(len(pts), dtype=int)
    next_label = 0
    for members in outer.groups():
        inner = complete_linkage_cut(pts[members], height)
        raw[members] = inner.labels + next_label
        next_label += inner.count
    return _renumber(raw)
