"""Traffic flow maps from GPS trajectories by local alignment of road segments."""
from .align import PipelineConfig, Stage, overline_lineblend, overline_pipeline, run_pipeline, snap_nodes
from .flow import FlowLine, FlowMap, overline, prune
from .geom import LineString, Trajectory

__version__ = "0.1.0"

__all__ = [
    "FlowLine",
    "FlowMap",
    "LineString",
    "PipelineConfig",
    "Stage",
    "Trajectory",
    "overline",
    "overline_lineblend",
    "overline_pipeline",
    "prune",
    "run_pipeline",
    "snap_nodes",
]
