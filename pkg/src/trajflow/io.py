"""File formats and the planar projection.

Files hold WGS84 longitude/latitude; all processing happens in a local
azimuthal equidistant plane (spherical earth) centred on a chosen origin.
"""
from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .geom import LineString, Trajectory

EARTH_RADIUS = 6_371_008.8


class InputError(ValueError):
    """Unreadable or malformed input file."""


@dataclass(frozen=True)
class Projection:
    lon0: float
    lat0: float

    @classmethod
    def auto(cls, lonlat: np.ndarray) -> Projection:
        """Origin at the mean of the given ``(lon, lat)`` rows."""
        arr = np.asarray(lonlat, dtype=float).reshape(-1, 2)
        if len(arr) == 0:
            raise InputError("no coordinates to derive a projection origin from")
        lon, lat = arr.mean(axis=0)
        return cls(round(float(lon), 7), round(float(lat), 7))

    def forward(self, lon, lat) -> np.ndarray:
        lam = np.radians(np.asarray(lon, dtype=float)) - math.radians(self.lon0)
        phi = np.radians(np.asarray(lat, dtype=float))
        p0 = math.radians(self.lat0)
        cos_c = np.clip(math.sin(p0) * np.sin(phi) + math.cos(p0) * np.cos(phi) * np.cos(lam), -1.0, 1.0)
        c = np.arccos(cos_c)
        with np.errstate(invalid="ignore", divide="ignore"):
            k = np.where(c < 1e-12, 1.0, c / np.sin(c))
        x = EARTH_RADIUS * k * np.cos(phi) * np.sin(lam)
        y = EARTH_RADIUS * k * (math.cos(p0) * np.sin(phi) - math.sin(p0) * np.cos(phi) * np.cos(lam))
        return np.column_stack([x, y])

    def inverse(self, xy) -> tuple[np.ndarray, np.ndarray]:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        x, y = xy[:, 0], xy[:, 1]
        p0 = math.radians(self.lat0)
        rho = np.hypot(x, y)
        c = rho / EARTH_RADIUS
        safe = np.where(rho == 0, 1.0, rho)
        phi = np.where(
            rho == 0, p0, np.arcsin(np.clip(np.cos(c) * math.sin(p0) + y * np.sin(c) * math.cos(p0) / safe, -1, 1))
        )
        lam = np.arctan2(x * np.sin(c), rho * math.cos(p0) * np.cos(c) - y * math.sin(p0) * np.sin(c))
        return np.degrees(lam) + self.lon0, np.degrees(phi)

    def to_dict(self) -> dict:
        return {"lon0": self.lon0, "lat0": self.lat0}


# ---------------------------------------------------------------------------
# raw readers (WGS84)


@dataclass
class RawTrack:
    id: str
    lonlat: np.ndarray
    times: list[float] | None = None
    props: dict | None = None


def _load_json(path: Path) -> Any:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _features(doc: Any, path: Path) -> list[dict]:
    if isinstance(doc, dict) and doc.get("type") == "FeatureCollection":
        return list(doc.get("features") or [])
    if isinstance(doc, dict) and doc.get("type") == "Feature":
        return [doc]
    raise InputError(f"{path}: expected a GeoJSON FeatureCollection")


def read_geojson_tracks(path: str | Path, types=("LineString", "MultiPoint")) -> list[RawTrack]:
    path = Path(path)
    out = []
    for i, f in enumerate(_features(_load_json(path), path)):
        geom = f.get("geometry") or {}
        if geom.get("type") not in types:
            raise InputError(f"{path}: feature {i} has unsupported geometry {geom.get('type')!r}")
        props = dict(f.get("properties") or {})
        coords = np.asarray(geom.get("coordinates"), dtype=float)
        if coords.ndim != 2 or coords.shape[1] < 2:
            raise InputError(f"{path}: feature {i} has malformed coordinates")
        tid = str(props.get("id", f.get("id", i)))
        times = props.get("times")
        out.append(RawTrack(tid, coords[:, :2], [float(t) for t in times] if times else None, props))
    return out


def read_csv_tracks(path: str | Path) -> list[RawTrack]:
    path = Path(path)
    rows: dict[str, list[tuple]] = defaultdict(list)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            need = {"traj_id", "seq", "lon", "lat"}
            if reader.fieldnames is None or not need <= set(reader.fieldnames):
                raise InputError(f"{path}: CSV needs columns traj_id, seq, lon, lat")
            has_t = "t" in reader.fieldnames
            for r in reader:
                t = float(r["t"]) if has_t and r["t"] not in ("", None) else None
                rows[r["traj_id"]].append((int(r["seq"]), float(r["lon"]), float(r["lat"]), t))
    except (OSError, UnicodeDecodeError, ValueError, KeyError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"cannot read {path}: {exc}") from exc
    out = []
    for tid, rs in rows.items():
        rs.sort()
        times = [r[3] for r in rs]
        out.append(RawTrack(tid, np.array([[r[1], r[2]] for r in rs]), None if None in times else times))
    return out


def read_tracks(path: str | Path) -> list[RawTrack]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    if path.suffix.lower() == ".csv":
        return read_csv_tracks(path)
    return read_geojson_tracks(path)


def project_tracks(tracks: Sequence[RawTrack], proj: Projection) -> list[Trajectory]:
    return [Trajectory(t.id, [tuple(p) for p in proj.forward(t.lonlat[:, 0], t.lonlat[:, 1])], t.times) for t in tracks]


def project_lines(tracks: Sequence[RawTrack], proj: Projection) -> list[LineString]:
    return [LineString(proj.forward(t.lonlat[:, 0], t.lonlat[:, 1])) for t in tracks]


def origin_for(tracks: Sequence[RawTrack], origin: str | Sequence[float] = "auto") -> Projection:
    if isinstance(origin, str):
        if origin != "auto":
            lon, lat = (float(v) for v in origin.split(","))
            return Projection(lon, lat)
        if not tracks:
            raise InputError("no coordinates to derive a projection origin from")
        return Projection.auto(np.vstack([t.lonlat for t in tracks]))
    lon, lat = origin
    return Projection(float(lon), float(lat))


# ---------------------------------------------------------------------------
# writers


def line_feature(line: LineString, proj: Projection, props: dict) -> dict:
    lon, lat = proj.inverse(line.array)
    return {
        "type": "Feature",
        "properties": props,
        "geometry": {"type": "LineString", "coordinates": [[float(a), float(b)] for a, b in zip(lon, lat)]},
    }


def point_feature(p: Sequence[float], proj: Projection, props: dict) -> dict:
    lon, lat = proj.inverse(np.asarray(p, dtype=float))
    return {"type": "Feature", "properties": props, "geometry": {"type": "Point", "coordinates": [float(lon[0]), float(lat[0])]}}


def write_json(path: str | Path, obj: Any) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def write_geojson(path: str | Path, features: Iterable[dict]) -> None:
    doc = {"type": "FeatureCollection", "features": list(features)}
    Path(path).write_text(json.dumps(doc, ensure_ascii=False) + "\n", encoding="utf-8")


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def flowmap_features(fmap, proj: Projection) -> list[dict]:
    return [line_feature(f.line, proj, {"id": str(i), "flow": f.flow}) for i, f in enumerate(fmap)]


def read_flowmap(path: str | Path, proj: Projection):
    from .flow import FlowLine, FlowMap

    tracks = read_geojson_tracks(path, types=("LineString",))
    out = []
    for t in tracks:
        flow = (t.props or {}).get("flow")
        if not isinstance(flow, int) or flow < 1:
            raise InputError(f"{path}: feature {t.id} lacks a positive integer flow")
        out.append(FlowLine(flow, LineString(proj.forward(t.lonlat[:, 0], t.lonlat[:, 1]))))
    return FlowMap(out)
