"""Planar geometry primitives.

All coordinates are projected planar meters. Points are stored as plain
``(x, y)`` float tuples snapped to a 1e-6 m grid, so exact tuple equality
is the notion of point identity used everywhere downstream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

GRID = 1e-6
# distance below which two geometric events are treated as coincident
TOL = 1e-5

Point = tuple[float, float]


class GeometryError(ValueError):
    """Raised for degenerate or otherwise invalid geometry."""


def quantize(x: float) -> float:
    return round(x / GRID) * GRID + 0.0


def qpoint(x: float, y: float) -> Point:
    return (round(x / GRID) * GRID + 0.0, round(y / GRID) * GRID + 0.0)


def quantize_array(arr: np.ndarray) -> np.ndarray:
    return np.rint(np.asarray(arr, dtype=float) / GRID) * GRID + 0.0


def dist(a: Sequence[float], b: Sequence[float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


@dataclass(frozen=True, eq=False)
class LineString:
    """An ordered polyline of at least two distinct quantized points."""

    coords: tuple[Point, ...]
    _array: np.ndarray = field(init=False, repr=False, compare=False)

    def __init__(self, coords: Iterable[Sequence[float]], *, check: bool = True):
        pts: list[Point] = []
        for c in coords:
            p = qpoint(float(c[0]), float(c[1]))
            if not (math.isfinite(p[0]) and math.isfinite(p[1])):
                raise GeometryError(f"non-finite coordinate {c!r}")
            if not pts or pts[-1] != p:
                pts.append(p)
        if check and len(pts) < 2:
            raise GeometryError("linestring needs at least two distinct points")
        object.__setattr__(self, "coords", tuple(pts))
        object.__setattr__(self, "_array", np.array(pts, dtype=float).reshape(-1, 2))

    @classmethod
    def try_make(cls, coords: Iterable[Sequence[float]]) -> LineString | None:
        ls = cls(coords, check=False)
        return ls if len(ls.coords) >= 2 else None

    def __eq__(self, other: object) -> bool:
        return isinstance(other, LineString) and self.coords == other.coords

    def __hash__(self) -> int:
        return hash(self.coords)

    def __len__(self) -> int:
        return len(self.coords)

    def __iter__(self):
        return iter(self.coords)

    def __repr__(self) -> str:
        if len(self.coords) > 6:
            inner = ", ".join(map(str, self.coords[:3])) + ", ..., " + str(self.coords[-1])
        else:
            inner = ", ".join(map(str, self.coords))
        return f"LineString([{inner}])"

    @property
    def array(self) -> np.ndarray:
        return self._array

    @property
    def start(self) -> Point:
        return self.coords[0]

    @property
    def end(self) -> Point:
        return self.coords[-1]

    @property
    def is_closed(self) -> bool:
        return self.coords[0] == self.coords[-1]

    def segment_lengths(self) -> np.ndarray:
        return np.hypot(*np.diff(self._array, axis=0).T)

    def cumulative_lengths(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.segment_lengths())])

    @property
    def length(self) -> float:
        return float(self.segment_lengths().sum())

    def reversed(self) -> LineString:
        return LineString(self.coords[::-1])

    def canonical(self) -> tuple[Point, ...]:
        """Orientation-free key: the lexicographically smaller of both directions."""
        fwd, bwd = self.coords, self.coords[::-1]
        return min(fwd, bwd)

    def bounds(self) -> tuple[float, float, float, float]:
        a = self._array
        return (a[:, 0].min(), a[:, 1].min(), a[:, 0].max(), a[:, 1].max())

    def interpolate(self, s: float) -> Point:
        """Point at arc length ``s`` (clamped to the line)."""
        cum = self.cumulative_lengths()
        s = min(max(s, 0.0), cum[-1])
        i = int(np.searchsorted(cum, s, side="right") - 1)
        i = min(i, len(self.coords) - 2)
        seg = cum[i + 1] - cum[i]
        t = 0.0 if seg == 0 else (s - cum[i]) / seg
        a, b = self._array[i], self._array[i + 1]
        return (float(a[0] + t * (b[0] - a[0])), float(a[1] + t * (b[1] - a[1])))


@dataclass
class Trajectory:
    id: str
    points: list[Point]
    timestamps: list[float] | None = None

    def __post_init__(self):
        self.points = [(float(x), float(y)) for x, y in self.points]
        if len(self.points) < 2:
            raise GeometryError(f"trajectory {self.id!r} needs at least two points")
        if self.timestamps is not None:
            if len(self.timestamps) != len(self.points):
                raise GeometryError(f"trajectory {self.id!r}: timestamp count mismatch")
            if any(b < a for a, b in zip(self.timestamps, self.timestamps[1:])):
                raise GeometryError(f"trajectory {self.id!r}: timestamps decrease")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)

    @property
    def length(self) -> float:
        a = self.array
        return float(np.hypot(*np.diff(a, axis=0).T).sum())

    def as_line(self) -> LineString:
        return LineString(self.points)


# ---------------------------------------------------------------------------
# point / segment distances


def point_segment_distances(p: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Distance from point(s) ``p`` to segments ``a -> b``.

    Returns ``(distance, t)`` where ``t`` is the clamped foot parameter.
    Shapes broadcast; ``p`` is (..., 2), ``a`` and ``b`` are (..., 2).
    """
    d = b - a
    dd = (d * d).sum(-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = ((p - a) * d).sum(-1) / dd
    t = np.where(dd > 0, np.clip(t, 0.0, 1.0), 0.0)
    foot = a + t[..., None] * d
    return np.linalg.norm(p - foot, axis=-1), t


def distance_to_line(points: np.ndarray, line: LineString) -> np.ndarray:
    """Minimum distance of each point to the polyline."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    arr = line.array
    # chunked to bound the points x segments work array
    step = max(1, 4_000_000 // max(1, len(arr) - 1))
    out = np.empty(len(pts))
    for i in range(0, len(pts), step):
        d, _ = point_segment_distances(pts[i : i + step, None, :], arr[None, :-1], arr[None, 1:])
        out[i : i + step] = d.min(axis=1)
    return out


def project_onto(line: LineString, p: Sequence[float]) -> tuple[Point, float]:
    """Nearest point on ``line`` to ``p`` and its arc-length position.

    Ties between equally near segments go to the smallest arc length.
    """
    arr = line.array
    pt = np.asarray(p, dtype=float)
    d, t = point_segment_distances(pt[None, :], arr[:-1], arr[1:])
    i = int(np.flatnonzero(d <= d.min() + 1e-9)[0])
    a, b = arr[i], arr[i + 1]
    foot = a + t[i] * (b - a)
    cum = line.cumulative_lengths()
    s = cum[i] + t[i] * (cum[i + 1] - cum[i])
    return qpoint(foot[0], foot[1]), float(s)


# ---------------------------------------------------------------------------
# flat-capped buffers


@dataclass(frozen=True)
class FlatBuffer:
    """The ``eps`` neighbourhood of a polyline, cut flat at both ends.

    Represented as the union of one rectangle per segment plus a disc at
    every interior vertex (round joins). No pieces extend past the two
    end points.
    """

    line: LineString
    eps: float

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        x0, y0, x1, y1 = self.line.bounds()
        e = self.eps
        return (x0 - e, y0 - e, x1 + e, y1 + e)

    def _joints(self) -> np.ndarray:
        arr = self.line.array
        joints = arr[1:-1]
        if self.line.is_closed and len(arr) > 2:
            joints = np.vstack([joints, arr[:1]])
        return joints

    def contains_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        arr = self.line.array
        a, b = arr[:-1], arr[1:]
        d = b - a
        L = np.hypot(d[:, 0], d[:, 1])
        u = d / L[:, None]
        rel = pts[:, None, :] - a[None, :, :]
        along = (rel * u[None]).sum(-1)
        across = rel[..., 0] * u[None, :, 1] - rel[..., 1] * u[None, :, 0]
        inside = (along >= -TOL) & (along <= L[None] + TOL) & (np.abs(across) <= self.eps + TOL)
        hit = inside.any(axis=1)
        joints = self._joints()
        if len(joints):
            dj = np.linalg.norm(pts[:, None, :] - joints[None], axis=-1)
            hit |= (dj <= self.eps + TOL).any(axis=1)
        return hit

    def covered_intervals(self, p: np.ndarray, q: np.ndarray) -> list[tuple[float, float]]:
        """Parameter intervals of segment ``p -> q`` lying inside the buffer."""
        out: list[tuple[float, float]] = []
        seg = q - p
        seg_len = float(np.hypot(*seg))
        if seg_len == 0:
            return [(0.0, 1.0)] if self.contains_points(p[None])[0] else []
        tol_t = TOL / seg_len
        arr = self.line.array
        a, b = arr[:-1], arr[1:]
        d = b - a
        L = np.hypot(d[:, 0], d[:, 1])
        u = d / L[:, None]
        n = np.stack([-u[:, 1], u[:, 0]], axis=1)
        # along(t) = along0 + t*dalong ; across(t) = across0 + t*dacross
        rel = p[None] - a
        along0 = (rel * u).sum(-1)
        dalong = seg @ u.T
        across0 = (rel * n).sum(-1)
        dacross = seg @ n.T
        lo = np.zeros(len(a))
        hi = np.ones(len(a))
        for c0, dc, cmin, cmax in (
            (along0, dalong, -TOL, L + TOL),
            (across0, dacross, -self.eps - TOL, self.eps + TOL),
        ):
            cmin = np.broadcast_to(cmin, c0.shape)
            cmax = np.broadcast_to(cmax, c0.shape)
            flat = np.abs(dc) < 1e-15
            bad = flat & ((c0 < cmin) | (c0 > cmax))
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (cmin - c0) / dc
                t2 = (cmax - c0) / dc
            tlo = np.where(flat, -np.inf, np.minimum(t1, t2))
            thi = np.where(flat, np.inf, np.maximum(t1, t2))
            lo = np.maximum(lo, tlo)
            hi = np.minimum(hi, thi)
            hi = np.where(bad, -np.inf, hi)
        ok = hi >= lo - tol_t
        out.extend(zip(lo[ok].tolist(), hi[ok].tolist()))
        joints = self._joints()
        if len(joints):
            # |p + t*seg - c|^2 <= r^2
            r = self.eps + TOL
            w = p[None] - joints
            A = float(seg @ seg)
            B = 2 * (w @ seg)
            C = (w * w).sum(-1) - r * r
            disc = B * B - 4 * A * C
            ok = disc >= 0
            sq = np.sqrt(np.where(ok, disc, 0))
            t1 = (-B - sq) / (2 * A)
            t2 = (-B + sq) / (2 * A)
            t1, t2 = np.maximum(t1, 0.0), np.minimum(t2, 1.0)
            ok &= t2 >= t1 - tol_t
            out.extend(zip(t1[ok].tolist(), t2[ok].tolist()))
        return out

    def contains_line(self, other: LineString) -> bool:
        pts = other.array
        if not self.contains_points(pts).all():
            return False
        for i in range(len(pts) - 1):
            p, q = pts[i], pts[i + 1]
            seg_len = float(np.hypot(*(q - p)))
            tol_t = TOL / seg_len if seg_len else 1.0
            reach = 0.0
            for lo, hi in sorted(self.covered_intervals(p, q)):
                if lo > reach + tol_t:
                    return False
                reach = max(reach, hi)
                if reach >= 1.0 - tol_t:
                    break
            if reach < 1.0 - tol_t:
                return False
        return True


def buffer_flat(line: LineString, eps: float) -> FlatBuffer:
    if eps <= 0:
        raise GeometryError("buffer tolerance must be positive")
    if line.length <= 0:
        raise GeometryError("cannot buffer a zero-length line")
    return FlatBuffer(line, float(eps))


def contains(buffer: FlatBuffer, line: LineString) -> bool:
    """Closed containment: boundary points count as inside."""
    x0, y0, x1, y1 = buffer.bounds
    bx0, by0, bx1, by1 = line.bounds()
    if bx0 < x0 - TOL or by0 < y0 - TOL or bx1 > x1 + TOL or by1 > y1 + TOL:
        return False
    return buffer.contains_line(line)


# ---------------------------------------------------------------------------
# distances between sequences


def dtw_normalized(a: Sequence[Sequence[float]], b: Sequence[Sequence[float]]) -> float:
    """Symmetric DTW (diagonal step weighted 2), normalised by ``len(a) + len(b)``."""
    A = np.asarray(a, dtype=float).reshape(-1, 2)
    B = np.asarray(b, dtype=float).reshape(-1, 2)
    n, m = len(A), len(B)
    if n == 0 or m == 0:
        raise ValueError("dtw needs two non-empty sequences")
    cost = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=-1).tolist()
    inf = math.inf
    prev = [inf] * m
    for i in range(n):
        row = cost[i]
        cur = [inf] * m
        for j in range(m):
            c = row[j]
            if i == 0 and j == 0:
                cur[0] = c
                continue
            best = inf
            if i > 0:
                v = prev[j] + c
                if v < best:
                    best = v
                if j > 0:
                    v = prev[j - 1] + 2 * c
                    if v < best:
                        best = v
            if j > 0:
                v = cur[j - 1] + c
                if v < best:
                    best = v
            cur[j] = best
        prev = cur
    return prev[m - 1] / (n + m)


def densify(coords: np.ndarray, spacing: float = 1.0) -> np.ndarray:
    """Resample a polyline so consecutive points are at most ``spacing`` apart."""
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    if len(coords) < 2:
        return coords
    out = [coords[:1]]
    for a, b in zip(coords[:-1], coords[1:]):
        n = max(1, int(math.ceil(float(np.hypot(*(b - a))) / spacing)))
        t = np.arange(1, n + 1)[:, None] / n
        out.append(a + t * (b - a))
    return np.vstack(out)


def hausdorff(a: LineString | np.ndarray, b: LineString | np.ndarray, spacing: float = 1.0) -> float:
    """Hausdorff distance between two polylines.

    Each side is sampled every ``spacing`` metres and measured exactly
    against the other polyline, so the result is exact up to the sampling
    of the outer supremum.
    """
    la = a if isinstance(a, LineString) else LineString(a)
    lb = b if isinstance(b, LineString) else LineString(b)
    dab = distance_to_line(densify(la.array, spacing), lb)
    dba = distance_to_line(densify(lb.array, spacing), la)
    return float(max(dab.max(), dba.max()))


# ---------------------------------------------------------------------------
# simplification


def _dp_keep(pts: np.ndarray, eps: float) -> np.ndarray:
    keep = np.zeros(len(pts), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(pts) - 1)]
    while stack:
        i, j = stack.pop()
        if j <= i + 1:
            continue
        inner = pts[i + 1 : j]
        d, _ = point_segment_distances(inner, pts[i][None], pts[j][None])
        k = int(np.argmax(d))
        if d[k] > eps:
            m = i + 1 + k
            keep[m] = True
            stack.append((i, m))
            stack.append((m, j))
    return keep


def simplify(line: LineString, eps_d: float) -> LineString:
    """Douglas-Peucker; end points are always kept."""
    if eps_d < 0:
        raise ValueError("simplify tolerance must be non-negative")
    pts = line.array
    if len(pts) <= 2:
        return line
    if line.is_closed:
        # split the ring at its farthest vertex so each half has a proper chord
        far = int(np.argmax(np.linalg.norm(pts - pts[0], axis=1)))
        k1 = _dp_keep(pts[: far + 1], eps_d)
        k2 = _dp_keep(pts[far:], eps_d)
        keep = np.concatenate([k1, k2[1:]])
    else:
        keep = _dp_keep(pts, eps_d)
    return LineString(pts[keep])


# ---------------------------------------------------------------------------
# transects


@dataclass(frozen=True)
class Transect:
    parent: int
    anchor: float
    segment: LineString


def transect_anchors(length: float, delta_t: float) -> list[float]:
    if length > delta_t:
        out, k = [], 1
        while k * delta_t < length - 1e-9:
            out.append(k * delta_t)
            k += 1
        return out
    return [length / 2.0]


def transects(line: LineString, eps_t: float, delta_t: float, parent: int = 0) -> list[Transect]:
    """Perpendicular segments of length ``2*eps_t`` every ``delta_t`` along ``line``.

    Lines no longer than ``delta_t`` get one transect at their arc-length midpoint.
    """
    if eps_t <= 0 or delta_t <= 0:
        raise ValueError("transect tolerances must be positive")
    arr = line.array
    cum = line.cumulative_lengths()
    out = []
    for s in transect_anchors(float(cum[-1]), delta_t):
        i = int(np.searchsorted(cum, s, side="right") - 1)
        i = min(max(i, 0), len(arr) - 2)
        a, b = arr[i], arr[i + 1]
        seg = cum[i + 1] - cum[i]
        t = (s - cum[i]) / seg
        mid = a + t * (b - a)
        u = (b - a) / seg
        nrm = np.array([-u[1], u[0]])
        out.append(Transect(parent, float(s), LineString([mid - eps_t * nrm, mid + eps_t * nrm])))
    return out


# ---------------------------------------------------------------------------
# segment intersection


def segment_intersections(p1: np.ndarray, p2: np.ndarray, q1: np.ndarray, q2: np.ndarray):
    """Vectorised proper/improper intersection of segment pairs.

    Returns ``(hit, t, u)``: whether each pair meets, and the parameters
    along the first and second segment of one meeting point. Collinear
    overlaps report the first overlap point.
    """
    r = p2 - p1
    s = q2 - q1
    denom = r[:, 0] * s[:, 1] - r[:, 1] * s[:, 0]
    qp = q1 - p1
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]) / denom
        u = (qp[:, 0] * r[:, 1] - qp[:, 1] * r[:, 0]) / denom
    eps = 1e-12
    hit = (np.abs(denom) > eps) & (t >= -eps) & (t <= 1 + eps) & (u >= -eps) & (u <= 1 + eps)
    t = np.where(hit, np.clip(t, 0, 1), np.nan)
    u = np.where(hit, np.clip(u, 0, 1), np.nan)
    par = ~(np.abs(denom) > eps)
    if par.any():
        for k in np.flatnonzero(par):
            for cand_t, pt in ((0.0, p1[k]), (1.0, p2[k])):
                d, uu = point_segment_distances(pt[None], q1[k][None], q2[k][None])
                if d[0] <= TOL:
                    hit[k], t[k], u[k] = True, cand_t, uu[0]
                    break
            else:
                for cand_u, pt in ((0.0, q1[k]), (1.0, q2[k])):
                    d, tt = point_segment_distances(pt[None], p1[k][None], p2[k][None])
                    if d[0] <= TOL:
                        hit[k], t[k], u[k] = True, tt[0], cand_u
                        break
    return hit, t, u


def count_crossings(segment: LineString, lines: Sequence[LineString]) -> int:
    """Number of distinct points where ``lines`` meet a single straight segment."""
    total = 0
    a, b = segment.array[0], segment.array[-1]
    for line in lines:
        arr = line.array
        n = len(arr) - 1
        hit, t, _ = segment_intersections(np.repeat(a[None], n, 0), np.repeat(b[None], n, 0), arr[:-1], arr[1:])
        pts = {qpoint(*(a + tt * (b - a))) for tt in t[hit]}
        total += len(pts)
    return total
