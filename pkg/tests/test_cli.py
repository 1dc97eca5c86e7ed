import csv
import json

import pytest

from trajflow import io
from trajflow.cli import main
from trajflow.datasets import make_grid_routes, write_grid_fixture
from trajflow.geom import hausdorff


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("grid")
    paths = write_grid_fixture(d, make_grid_routes(n_copies=20, seed=3))
    return d, paths


@pytest.fixture(scope="module")
def clean_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("clean")
    paths = write_grid_fixture(d, make_grid_routes(n_copies=6, sigma=0.0))
    return d, paths


def _features(path):
    return json.loads(path.read_text())["features"]


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_match_clean_trajectories(fixture_dir, tmp_path):
    _, paths = fixture_dir
    rc = main(["match", str(paths["trajectories"]), "--backend", f"synthetic:{paths['network']}", "--out", str(tmp_path)])
    assert rc == 0
    feats = _features(tmp_path / "route.geojson")
    assert len(feats) == 10
    assert all(f["properties"]["dtw"] == pytest.approx(0.0, abs=1e-6) for f in feats)
    report = json.loads((tmp_path / "match_report.json").read_text())
    assert report["n_accepted"] == 10 and "jobs" not in report["config"]
    assert _rows(tmp_path / "rejects.csv") == []


def test_match_empty_input_exit_2(tmp_path, fixture_dir):
    _, paths = fixture_dir
    empty = tmp_path / "empty.geojson"
    empty.write_text('{"type": "FeatureCollection", "features": []}')
    assert main(["match", str(empty), "--backend", f"synthetic:{paths['network']}", "--out", str(tmp_path)]) == 2


def test_match_missing_file_exit_2(tmp_path):
    assert main(["match", str(tmp_path / "nope.csv"), "--backend", "synthetic:x", "--out", str(tmp_path)]) == 2


def test_match_unreachable_backend_exit_3(fixture_dir, tmp_path, monkeypatch):
    monkeypatch.setattr("time.sleep", lambda s: None)
    _, paths = fixture_dir
    rc = main(["match", str(paths["trajectories"]), "--backend", "http://127.0.0.1:9", "--out", str(tmp_path)])
    assert rc == 3


def test_match_nothing_accepted_exit_1(tmp_path, fixture_dir):
    _, paths = fixture_dir
    rc = main(
        ["match", str(paths["trajectories"]), "--backend", f"synthetic:{paths['network']}",
         "--min-length", "1e7", "--out", str(tmp_path)]
    )
    assert rc == 1
    assert {r["reason"] for r in _rows(tmp_path / "rejects.csv")} == {"too_short"}


def test_bad_config_exit_2(tmp_path, fixture_dir):
    _, paths = fixture_dir
    cfg = tmp_path / "cfg.json"
    cfg.write_text("[1, 2]")
    assert main(["aggregate", str(paths["routes"]), "--config", str(cfg), "--out", str(tmp_path)]) == 2
    cfg.write_text('{"pipeline": {"stages": [{"split": "unary"}]}}')
    assert main(["aggregate", str(paths["routes"]), "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert main(["aggregate", str(paths["routes"]), "--jobs", "0", "--out", str(tmp_path)]) == 2


def test_config_file_and_flag_precedence(tmp_path, clean_dir):
    _, paths = clean_dir
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"validate": {"eps_t": 3.0, "delta_t": 40.0}}')
    out = tmp_path / "agg"
    assert main(["aggregate", str(paths["routes"]), "--out", str(out)]) == 0
    rc = main(["validate", str(paths["routes"]), str(out / "flowmap4.geojson"), "--config", str(cfg),
               "--delta-t", "25", "--out", str(tmp_path)])
    assert rc == 0
    conf = json.loads((tmp_path / "summary.json").read_text())["config"]["validate"]
    assert conf["eps_t"] == 3.0 and conf["delta_t"] == 25.0


def test_aggregate_single_route(tmp_path):
    proj = io.Projection(9.73, 52.37)
    route = make_grid_routes(n_copies=1, sigma=0.0).truth
    src = tmp_path / "one.geojson"
    io.write_geojson(src, [io.line_feature(route, proj, {"id": "r"})])
    out = tmp_path / "out"
    assert main(["aggregate", str(src), "--origin", "9.73,52.37", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert [s["file"] for s in manifest["stages"]] == [f"flowmap{i}.geojson" for i in range(5)]
    for s in manifest["stages"]:
        feats = _features(out / s["file"])
        assert len(feats) == 1 and feats[0]["properties"]["flow"] == 1
        back = io.project_lines(io.read_geojson_tracks(out / s["file"]), proj)[0]
        assert hausdorff(back, route) < 1e-3
    assert all(e["exit"] == "fixed_point" for e in manifest["exits"])


def test_validate_zero_noise_and_doubled(tmp_path, clean_dir):
    _, paths = clean_dir
    agg = tmp_path / "agg"
    assert main(["aggregate", str(paths["routes"]), "--out", str(agg)]) == 0
    final = agg / "flowmap4.geojson"
    feats = _features(final)
    assert [f["properties"]["flow"] for f in feats] == [6]

    v1 = tmp_path / "v1"
    assert main(["validate", str(paths["routes"]), str(final), "--out", str(v1)]) == 0
    summ = json.loads((v1 / "summary.json").read_text())["summary"]
    assert summ["zero_share"] == 1.0
    assert (v1 / "hexbin.csv").read_text().splitlines()[0] == "err,rerr,count"
    assert len(_features(v1 / "transects.geojson")) == summ["n"]

    doubled = tmp_path / "doubled.geojson"
    for f in feats:
        f["properties"]["flow"] *= 2
    doubled.write_text(json.dumps({"type": "FeatureCollection", "features": feats}))
    v2 = tmp_path / "v2"
    assert main(["validate", str(paths["routes"]), str(doubled), "--out", str(v2)]) == 0
    rows = _rows(v2 / "transect_errors.csv")
    assert rows and all(float(r["err"]) == int(r["flow"]) // 2 for r in rows)


def test_validate_rejects_flowless_map(tmp_path, clean_dir):
    _, paths = clean_dir
    bad = tmp_path / "bad.geojson"
    bad.write_text(json.dumps({"type": "FeatureCollection", "features": [
        {"type": "Feature", "properties": {}, "geometry": {"type": "LineString", "coordinates": [[9.73, 52.37], [9.74, 52.37]]}}
    ]}))
    assert main(["validate", str(paths["routes"]), str(bad), "--out", str(tmp_path)]) == 2


def test_desire(tmp_path, fixture_dir):
    _, paths = fixture_dir
    out = tmp_path / "d1"
    assert main(["desire", str(paths["trajectories"]), "--cutoff", "100", "--out", str(out)]) == 0
    feats = _features(out / "flowmap_desire.geojson")
    lines = [f for f in feats if f["properties"]["kind"] == "line"]
    assert len(lines) == 1 and lines[0]["properties"]["flow"] == 10
    assert sum(f["properties"]["kind"] == "hub" for f in feats) == 2

    out = tmp_path / "d2"
    assert main(["desire", str(paths["trajectories"]), "--cutoff", "5000", "--out", str(out)]) == 0
    feats = _features(out / "flowmap_desire.geojson")
    kinds = [f["properties"]["kind"] for f in feats]
    assert "line" not in kinds and kinds.count("marker") == 1


def test_aggregate_jobs_identical(tmp_path, fixture_dir):
    _, paths = fixture_dir
    outs = []
    for jobs in (1, 3):
        out = tmp_path / f"j{jobs}"
        assert main(["aggregate", str(paths["routes"]), "--jobs", str(jobs), "--out", str(out)]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outs[0] == outs[1]


def test_csv_trajectories(tmp_path, fixture_dir):
    _, paths = fixture_dir
    tracks = io.read_tracks(paths["trajectories"])
    src = tmp_path / "t.csv"
    io.write_csv(src, ["traj_id", "seq", "lon", "lat"],
                 [[t.id, i, lon, lat] for t in tracks for i, (lon, lat) in enumerate(t.lonlat)])
    rc = main(["match", str(src), "--backend", f"synthetic:{paths['network']}", "--out", str(tmp_path)])
    assert rc == 0
    assert json.loads((tmp_path / "match_report.json").read_text())["n_accepted"] == 10
