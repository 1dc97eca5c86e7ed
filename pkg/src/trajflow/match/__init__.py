from .backends import BackendError, MatchBackend, SyntheticBackend, ValhallaBackend, drop_backtracks
from .core import DEFAULT_NW, RouteMatch, match_all, quality_filter, sample_waypoints, st_route

__all__ = [
    "DEFAULT_NW",
    "BackendError",
    "MatchBackend",
    "RouteMatch",
    "SyntheticBackend",
    "ValhallaBackend",
    "drop_backtracks",
    "match_all",
    "quality_filter",
    "sample_waypoints",
    "st_route",
]
