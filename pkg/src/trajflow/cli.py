"""Command line interface: ``trajflow match | aggregate | validate | desire``.

Exit codes: 0 success, 1 nothing accepted, 2 input error, 3 backend
error, 4 internal error.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from . import io
from .geom import GeometryError
from .align import PipelineConfig, Stage, run_pipeline
from .match import DEFAULT_NW, BackendError, SyntheticBackend, ValhallaBackend, match_all
from .validate import desire_lines, error_hexbin, error_summary, proxy_flows, transect_features

log = logging.getLogger("trajflow")

EXIT_OK, EXIT_EMPTY, EXIT_INPUT, EXIT_BACKEND, EXIT_INTERNAL = 0, 1, 2, 3, 4

DEFAULTS: dict[str, Any] = {
    "origin": "auto",
    "jobs": 1,
    "seed": 0,
    "match": {"backend": None, "n_w": list(DEFAULT_NW), "h_max": 100.0, "r_max": 1.1, "min_length": 100.0},
    "pipeline": PipelineConfig().to_dict(),
    "validate": {"eps_t": 5.0, "delta_t": 50.0, "err_cut": 4.0, "rerr_cut": 0.1, "round_mean": True},
    "desire": {"cutoff": 5000.0},
}

# flag dest -> (section, key)
FLAG_MAP = {
    "origin": (None, "origin"),
    "jobs": (None, "jobs"),
    "backend": ("match", "backend"),
    "n_w": ("match", "n_w"),
    "h_max": ("match", "h_max"),
    "r_max": ("match", "r_max"),
    "min_length": ("match", "min_length"),
    "eps_simplify": ("pipeline", "eps_simplify"),
    "max_iter": ("pipeline", "max_iter"),
    "min_flow": ("pipeline", "min_flow"),
    "eps_t": ("validate", "eps_t"),
    "delta_t": ("validate", "delta_t"),
    "err_cut": ("validate", "err_cut"),
    "rerr_cut": ("validate", "rerr_cut"),
    "cutoff": ("desire", "cutoff"),
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        try:
            user = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise io.InputError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(user, dict):
            raise io.InputError("config must be a JSON object")
        cfg = _merge(cfg, user)
    for dest, (section, key) in FLAG_MAP.items():
        v = getattr(args, dest, None)
        if v is None:
            continue
        if section is None:
            cfg[key] = v
        else:
            cfg[section][key] = v
    if int(cfg["jobs"]) < 1:
        raise io.InputError("jobs must be at least 1")
    return cfg


def pipeline_config(cfg: dict) -> PipelineConfig:
    p = cfg["pipeline"]
    try:
        stages = tuple(
            Stage(s["split"], tuple(s["k_list"]), float(s["eps"]), float(s.get("eps_snap", s["eps"]))) for s in p["stages"]
        )
        return PipelineConfig(stages, float(p["eps_simplify"]), int(p["max_iter"]), int(p["min_flow"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise io.InputError(f"invalid pipeline config: {exc}") from exc


def _echo(cfg: dict) -> dict:
    # parallelism does not change results, so it stays out of the outputs
    return {k: v for k, v in cfg.items() if k != "jobs"}


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands


def make_backend(spec: str | None, proj: io.Projection):
    if not spec:
        import os

        if os.environ.get("TRAJFLOW_BACKEND_URL"):
            return ValhallaBackend(None, proj)
        raise io.InputError("no backend given (use --backend URL or synthetic:PATH)")
    if spec.startswith("synthetic:"):
        net = io.read_geojson_tracks(spec[len("synthetic:") :], types=("LineString",))
        return SyntheticBackend(io.project_lines(net, proj))
    return ValhallaBackend(spec, proj)


def cmd_match(args, cfg: dict) -> int:
    tracks = io.read_tracks(args.trajectories)
    if not tracks:
        raise io.InputError(f"{args.trajectories}: no trajectories")
    proj = io.origin_for(tracks, cfg["origin"])
    trajs = io.project_tracks(tracks, proj)
    m = cfg["match"]
    backend = make_backend(m["backend"], proj)
    results = match_all(
        trajs,
        backend,
        [int(n) for n in m["n_w"]],
        h_max=float(m["h_max"]),
        r_max=float(m["r_max"]),
        min_length=float(m["min_length"]),
        n_jobs=int(cfg["jobs"]),
    )
    out = _out_dir(args)
    acc = [r for r in results if r.accepted]
    io.write_geojson(out / "route.geojson", [io.line_feature(r.route, proj, r.diagnostics()) for r in acc])
    io.write_csv(
        out / "rejects.csv",
        ["id", "reason", "hausdorff", "length_ratio"],
        [[r.traj_id, r.reason, r.hausdorff, r.length_ratio] for r in results if not r.accepted],
    )
    io.write_json(
        out / "match_report.json",
        {"config": _echo(cfg), "projection": proj.to_dict(), "n_input": len(results), "n_accepted": len(acc)},
    )
    log.info("%d of %d trajectories accepted", len(acc), len(results))
    return EXIT_OK if acc else EXIT_EMPTY


def cmd_aggregate(args, cfg: dict) -> int:
    tracks = io.read_geojson_tracks(args.routes, types=("LineString",))
    if not tracks:
        raise io.InputError(f"{args.routes}: no routes")
    proj = io.origin_for(tracks, cfg["origin"])
    routes = io.project_lines(tracks, proj)
    pcfg = pipeline_config(cfg)
    res = run_pipeline(routes, pcfg, n_jobs=int(cfg["jobs"]))
    out = _out_dir(args)
    names = []
    for i, fm in enumerate(res.maps):
        name = f"flowmap{i}.geojson"
        io.write_geojson(out / name, io.flowmap_features(fm, proj))
        names.append({"file": name, "stage": i, "n_lines": len(fm)})
    io.write_json(
        out / "manifest.json",
        {
            "config": _echo(cfg),
            "projection": proj.to_dict(),
            "n_routes": len(routes),
            "stages": names,
            "iterations": [h.to_dict() for h in res.history],
            "exits": res.exits,
        },
    )
    return EXIT_OK


def cmd_validate(args, cfg: dict) -> int:
    tracks = io.read_geojson_tracks(args.routes, types=("LineString",))
    if not tracks:
        raise io.InputError(f"{args.routes}: no routes")
    proj = io.origin_for(tracks, cfg["origin"])
    routes = io.project_lines(tracks, proj)
    fmap = io.read_flowmap(args.flowmap, proj)
    if not len(fmap):
        raise io.InputError(f"{args.flowmap}: empty flow map")
    v = cfg["validate"]
    eps_t, delta_t = float(v["eps_t"]), float(v["delta_t"])
    errs = proxy_flows(routes, fmap, eps_t, delta_t, round_mean=bool(v["round_mean"]))
    summ = error_summary(errs, float(v["err_cut"]), float(v["rerr_cut"]))
    out = _out_dir(args)
    feats = []
    for t, e in zip(transect_features(fmap, eps_t, delta_t), errs):
        feats.append(io.line_feature(t.segment, proj, {"parent": e.parent, "index": e.index, "err": e.err, "rerr": e.rerr}))
    io.write_geojson(out / "transects.geojson", feats)
    io.write_csv(
        out / "transect_errors.csv",
        ["parent", "index", "anchor", "flow", "crossings", "proxy_raw", "proxy", "err", "rerr"],
        [[e.parent, e.index, e.anchor, e.flow, e.crossings, e.proxy_raw, e.proxy, e.err, e.rerr] for e in errs],
    )
    io.write_csv(out / "hexbin.csv", ["err", "rerr", "count"], error_hexbin(errs))
    io.write_json(out / "summary.json", {"config": _echo(cfg), "summary": summ.to_dict()})
    return EXIT_OK


def cmd_desire(args, cfg: dict) -> int:
    tracks = io.read_tracks(args.trajectories)
    if not tracks:
        raise io.InputError(f"{args.trajectories}: no trajectories")
    proj = io.origin_for(tracks, cfg["origin"])
    res = desire_lines(io.project_tracks(tracks, proj), float(cfg["desire"]["cutoff"]))
    feats = []
    for d in res.lines:
        props = {"id": f"{d.hubs[0]}-{d.hubs[1]}", "flow": d.flow, "kind": "marker" if d.same_hub else "line"}
        if d.same_hub:
            feats.append(io.point_feature(d.geometry, proj, props))
        else:
            feats.append(io.line_feature(d.geometry, proj, props))
    for i, h in enumerate(res.hubs):
        feats.append(io.point_feature(h, proj, {"id": f"hub{i}", "kind": "hub"}))
    io.write_geojson(_out_dir(args) / "flowmap_desire.geojson", feats)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trajflow", description="Traffic flow maps from GPS trajectories.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override it")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--origin", help="projection origin 'auto' or 'lon,lat'")
    common.add_argument("--jobs", type=int, help="worker threads")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("match", parents=[common], help="map-match trajectories")
    m.add_argument("trajectories")
    m.add_argument("--backend", help="service URL or synthetic:NETWORK.geojson")
    m.add_argument("--n-w", dest="n_w", type=int, nargs="+")
    m.add_argument("--h-max", dest="h_max", type=float)
    m.add_argument("--r-max", dest="r_max", type=float)
    m.add_argument("--min-length", dest="min_length", type=float)
    m.set_defaults(func=cmd_match)

    a = sub.add_parser("aggregate", parents=[common], help="build flow maps from routes")
    a.add_argument("routes")
    a.add_argument("--eps-simplify", dest="eps_simplify", type=float)
    a.add_argument("--max-iter", dest="max_iter", type=int)
    a.add_argument("--min-flow", dest="min_flow", type=int)
    a.set_defaults(func=cmd_aggregate)

    v = sub.add_parser("validate", parents=[common], help="transect validation of a flow map")
    v.add_argument("routes")
    v.add_argument("flowmap")
    v.add_argument("--eps-t", dest="eps_t", type=float)
    v.add_argument("--delta-t", dest="delta_t", type=float)
    v.add_argument("--err-cut", dest="err_cut", type=float)
    v.add_argument("--rerr-cut", dest="rerr_cut", type=float)
    v.set_defaults(func=cmd_validate)

    d = sub.add_parser("desire", parents=[common], help="origin/destination desire lines")
    d.add_argument("trajectories")
    d.add_argument("--cutoff", type=float)
    d.set_defaults(func=cmd_desire)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)], format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        return args.func(args, cfg)
    except (io.InputError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
