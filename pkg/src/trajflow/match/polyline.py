"""Encoded polyline format (signed varint, base-64-ish ASCII)."""
from __future__ import annotations

from typing import Iterable, Sequence


def _encode_value(v: int) -> str:
    v = ~(v << 1) if v < 0 else v << 1
    out = []
    while v >= 0x20:
        out.append(chr((0x20 | (v & 0x1F)) + 63))
        v >>= 5
    out.append(chr(v + 63))
    return "".join(out)


def encode(points: Iterable[Sequence[float]], precision: int = 6) -> str:
    """Encode ``(lat, lon)`` pairs."""
    f = 10**precision
    prev = (0, 0)
    out = []
    for lat, lon in points:
        cur = (int(round(lat * f)), int(round(lon * f)))
        out.append(_encode_value(cur[0] - prev[0]))
        out.append(_encode_value(cur[1] - prev[1]))
        prev = cur
    return "".join(out)


def decode(s: str, precision: int = 6) -> list[tuple[float, float]]:
    """Decode to ``(lat, lon)`` pairs."""
    f = 10**precision
    coords, idx, lat, lon = [], 0, 0, 0
    n = len(s)
    while idx < n:
        vals = []
        for _ in range(2):
            shift = result = 0
            while True:
                if idx >= n:
                    raise ValueError("truncated polyline")
                b = ord(s[idx]) - 63
                idx += 1
                if b < 0 or b > 63:
                    raise ValueError(f"invalid polyline character {s[idx - 1]!r}")
                result |= (b & 0x1F) << shift
                shift += 5
                if b < 0x20:
                    break
            vals.append(~(result >> 1) if result & 1 else result >> 1)
        lat += vals[0]
        lon += vals[1]
        coords.append((lat / f, lon / f))
    return coords
