"""Map-matching and routing backends.

A backend answers two questions in planar coordinates: the map-matched
route of a trajectory, and the route through an ordered list of
waypoints. ``None`` means the backend found no route.
"""
from __future__ import annotations

import logging
import os
import time
from typing import Protocol, Sequence

import numpy as np
import requests
from scipy.spatial import cKDTree

from ..geom import LineString, Point, Trajectory
from ..io import Projection
from ..netgraph import NetworkGraph, NoPathError
from . import polyline

log = logging.getLogger(__name__)

ENV_URL = "TRAJFLOW_BACKEND_URL"
SNAP_RADIUS = 500.0


class BackendError(RuntimeError):
    """The backend could not be reached or answered with a server error."""


class MatchBackend(Protocol):
    kind: str

    def match(self, traj: Trajectory) -> LineString | None: ...

    def route(self, waypoints: Sequence[Point]) -> LineString | None: ...


def drop_backtracks(nodes: Sequence[Point]) -> list[Point]:
    """Remove immediate reversals ``a, b, a`` until none remain."""
    out: list[Point] = []
    for p in nodes:
        if out and out[-1] == p:
            continue
        if len(out) >= 2 and out[-2] == p:
            out.pop()
            continue
        out.append(p)
    return out


class SyntheticBackend:
    """Offline backend over a planar road network.

    Matching snaps each GPS point to its nearest network vertex and joins
    consecutive vertices by shortest paths; routing does the same for the
    waypoints.
    """

    kind = "synthetic"

    def __init__(self, network: Sequence[LineString], snap_radius: float = SNAP_RADIUS):
        self.graph = NetworkGraph.from_linestrings(network, vertex_level=True)
        if not self.graph.nodes:
            raise ValueError("network has no edges")
        self.tree = cKDTree(np.asarray(self.graph.nodes))
        self.snap_radius = snap_radius

    def _snap(self, pts: np.ndarray) -> list[Point] | None:
        d, idx = self.tree.query(pts)
        if (d > self.snap_radius).any():
            return None
        return [self.graph.nodes[i] for i in idx]

    def _join(self, nodes: Sequence[Point]) -> LineString | None:
        coords: list[Point] = []
        for a, b in zip(nodes, nodes[1:]):
            if a == b:
                continue
            try:
                c = self.graph.shortest_path(a, b).coords
            except NoPathError:
                return None
            coords.extend(c if not coords else c[1:])
        return LineString.try_make(coords) if len(coords) >= 2 else None

    def match(self, traj: Trajectory) -> LineString | None:
        snapped = self._snap(traj.array)
        if snapped is None:
            return None
        nodes = drop_backtracks(snapped)
        if len(nodes) < 2:
            return None
        path = self._join(nodes)
        if path is None:
            return None
        return LineString.try_make(drop_backtracks(path.coords))

    def route(self, waypoints: Sequence[Point]) -> LineString | None:
        snapped = self._snap(np.asarray(waypoints, dtype=float))
        if snapped is None:
            return None
        return self._join(snapped)


class ValhallaBackend:
    """Client for a Valhalla-compatible HTTP routing service.

    Geometry comes back as 6-digit encoded polylines. The base address
    may be overridden with the ``TRAJFLOW_BACKEND_URL`` environment
    variable.
    """

    kind = "http"

    def __init__(
        self,
        base_url: str | None,
        projection: Projection,
        *,
        costing: str = "auto",
        timeout: float = 30.0,
        retries: int = 3,
        backoff: float = 0.5,
        session: requests.Session | None = None,
    ):
        url = os.environ.get(ENV_URL) or base_url
        if not url:
            raise ValueError("no backend address configured")
        self.base_url = url.rstrip("/")
        self.projection = projection
        self.costing = costing
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.session = session or requests.Session()

    def _post(self, endpoint: str, payload: dict) -> dict | None:
        url = f"{self.base_url}/{endpoint}"
        delay = self.backoff
        for attempt in range(self.retries + 1):
            log.debug("POST %s %s", url, payload)
            try:
                r = self.session.post(url, json=payload, timeout=self.timeout)
            except (requests.ConnectionError, requests.Timeout) as exc:
                err: Exception = exc
            else:
                log.debug("%s -> %d %s", url, r.status_code, r.text[:2000])
                if r.status_code < 400:
                    return r.json()
                if r.status_code < 500:
                    return None
                err = BackendError(f"{url} answered {r.status_code}")
            if attempt < self.retries:
                time.sleep(delay)
                delay *= 2
        raise BackendError(f"backend unreachable at {url}: {err}")

    def _locations(self, pts: Sequence[Point]) -> list[dict]:
        lon, lat = self.projection.inverse(np.asarray(pts, dtype=float))
        return [{"lat": float(a), "lon": float(o)} for a, o in zip(lat, lon)]

    def _geometry(self, resp: dict | None) -> LineString | None:
        if not resp:
            return None
        legs = resp.get("trip", {}).get("legs", [])
        latlon: list[tuple[float, float]] = []
        for leg in legs:
            pts = polyline.decode(leg.get("shape", ""), 6)
            latlon.extend(pts if not latlon else pts[1:])
        if len(latlon) < 2:
            return None
        arr = np.asarray(latlon)
        xy = self.projection.forward(arr[:, 1], arr[:, 0])
        return LineString.try_make(xy)

    def match(self, traj: Trajectory) -> LineString | None:
        payload = {"shape": self._locations(traj.points), "costing": self.costing, "shape_match": "map_snap"}
        return self._geometry(self._post("trace_route", payload))

    def route(self, waypoints: Sequence[Point]) -> LineString | None:
        payload = {"locations": self._locations(waypoints), "costing": self.costing}
        return self._geometry(self._post("route", payload))
