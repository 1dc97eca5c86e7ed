"""Independent reference implementations used only by the tests."""
from __future__ import annotations

import itertools
import math

import numpy as np


def dtw_bruteforce(a, b) -> float:
    """Enumerate every monotone warping path explicitly (no DP)."""
    A = np.asarray(a, float).reshape(-1, 2)
    B = np.asarray(b, float).reshape(-1, 2)
    n, m = len(A), len(B)
    best = math.inf

    def walk(i, j, acc):
        nonlocal best
        if i == n - 1 and j == m - 1:
            best = min(best, acc)
            return
        for di, dj, w in ((1, 0, 1), (0, 1, 1), (1, 1, 2)):
            ii, jj = i + di, j + dj
            if ii < n and jj < m:
                walk(ii, jj, acc + w * float(np.hypot(*(A[ii] - B[jj]))))

    walk(0, 0, float(np.hypot(*(A[0] - B[0]))))
    return best / (n + m)


def partition(labels) -> frozenset:
    groups = {}
    for i, l in enumerate(labels):
        groups.setdefault(int(l), []).append(i)
    return frozenset(frozenset(g) for g in groups.values())


def complete_linkage_bruteforce(pts, h) -> frozenset:
    """Textbook agglomeration: recompute every cluster distance each step."""
    pts = np.asarray(pts, float)
    if pts.ndim == 1:
        pts = pts[:, None]
    clusters = [[i] for i in range(len(pts))]

    def d(c1, c2):
        return max(float(np.linalg.norm(pts[i] - pts[j])) for i in c1 for j in c2)

    while len(clusters) > 1:
        best = None
        for x, y in itertools.combinations(range(len(clusters)), 2):
            dd = d(clusters[x], clusters[y])
            key = (dd, min(clusters[x]), min(clusters[y]))
            if best is None or key < best[0]:
                best = (key, x, y)
        (dd, _, _), x, y = best
        if dd > h:
            break
        clusters[x] = clusters[x] + clusters[y]
        del clusters[y]
    return frozenset(frozenset(c) for c in clusters)


def diameter(pts) -> float:
    pts = np.asarray(pts, float)
    if len(pts) < 2:
        return 0.0
    return float(np.max(np.linalg.norm(pts[:, None] - pts[None], axis=-1)))
