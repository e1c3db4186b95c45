import csv
import json
from pathlib import Path

import pytest

from wallradar.cli import main
from wallradar.dataset import read_dataset
from tests.test_dataset import dir_digest


@pytest.fixture()
def scene_json(tmp_path):
    path = tmp_path / "scene.json"
    path.write_text(
        json.dumps(
            {
                "permittivity": 9.0,
                "attenuation": 25.0,
                "targets": [
                    {
                        "x": 0.06,
                        "depth": 0.05,
                        "material": "non_corroded_rebar",
                        "reflectivity": [-0.9, 0.0],
                        "refractive_index": [80.0, 80.0],
                        "dispersion_slope": 0.0,
                    }
                ],
            }
        )
    )
    return path


@pytest.fixture()
def scan_json(tmp_path):
    path = tmp_path / "scan.json"
    path.write_text(
        json.dumps(
            {
                "speed": 0.02,
                "frame_rate": 40.0,
                "length": 0.12,
                "noise_std": 0.002,
                "seed": 3,
            }
        )
    )
    return path


def test_pipeline_end_to_end(tmp_path, scene_json, scan_json):
    sim_dir = tmp_path / "sim"
    assert main(["simulate", "--scene", str(scene_json), "--scan", str(scan_json), "--out", str(sim_dir)]) == 0
    contents = read_dataset(sim_dir)
    assert contents.manifest["record_type"] == "bscan"
    assert len(contents.records) == 2

    img_dir = tmp_path / "img"
    assert main([
        "focus", "--algo", "rma", "--eps", "9.0", "--speed", "0.02",
        "--in", str(sim_dir), "--out", str(img_dir),
    ]) == 0
    assert (img_dir / "image_co.pgm").exists()
    assert (img_dir / "image_co.png").exists()

    assert main(["detect", "--pfa", "1e-6", "--in", str(img_dir)]) == 0
    report = json.loads((img_dir / "detections.json").read_text())
    co = next(r for r in report["images"] if r["channel"] == "co")
    assert len(co["detections"]) == 1
    det = co["detections"][0]
    assert det["error_x"] < 0.01 and det["error_depth"] < 0.01

    out_csv = tmp_path / "cdf.csv"
    assert main(["eval", "--pred", str(img_dir), "--truth", str(sim_dir), "--out", str(out_csv)]) == 0
    rows = list(csv.reader(out_csv.open()))
    assert rows[0] == ["metric", "error_m", "cdf"]
    assert any(r[0] == "x" for r in rows[1:]) and any(r[0] == "depth" for r in rows[1:])


def test_focus_with_backprojection(tmp_path, scene_json, scan_json):
    sim_dir = tmp_path / "sim"
    main(["simulate", "--scene", str(scene_json), "--scan", str(scan_json), "--out", str(sim_dir)])
    img_dir = tmp_path / "img_bp"
    assert main([
        "focus", "--algo", "bp", "--eps", "9.0", "--speed", "0.02",
        "--in", str(sim_dir), "--out", str(img_dir),
    ]) == 0
    assert (img_dir / "manifest.json").exists()


def test_features_csv(tmp_path, scene_json, scan_json):
    sim_dir = tmp_path / "sim"
    main(["simulate", "--scene", str(scene_json), "--scan", str(scan_json), "--out", str(sim_dir)])
    out_csv = tmp_path / "features.csv"
    assert main(["features", "--in", str(sim_dir), "--out", str(out_csv)]) == 0
    rows = list(csv.DictReader(out_csv.open()))
    assert len(rows) == 1
    assert float(rows[0]["envelope_width_s"]) > 0
    # band reflectivity folds in 1/r spreading, so it is positive but not <= 1
    assert float(rows[0]["band_reflectivity"]) > 0


def test_invalid_permittivity_is_usage_error(tmp_path, scene_json, scan_json):
    sim_dir = tmp_path / "sim"
    main(["simulate", "--scene", str(scene_json), "--scan", str(scan_json), "--out", str(sim_dir)])
    code = main([
        "focus", "--algo", "rma", "--eps", "0.5", "--speed", "0.02",
        "--in", str(sim_dir), "--out", str(tmp_path / "x"),
    ])
    assert code == 1


def test_missing_input_is_bad_input(tmp_path):
    code = main(["detect", "--pfa", "1e-4", "--in", str(tmp_path / "nope")])
    assert code == 2


def test_corrupt_scene_json_is_bad_input(tmp_path, scan_json):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code = main(["simulate", "--scene", str(bad), "--scan", str(scan_json), "--out", str(tmp_path / "o")])
    assert code == 2


def test_unknown_subcommand_is_usage_error():
    assert main(["frobnicate"]) == 1


def test_export_dataset_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["export-dataset", "--kind", "mnet", "--n", "8", "--seed", "7", "--out", str(a)]) == 0
    assert main(["export-dataset", "--kind", "mnet", "--n", "8", "--seed", "7", "--out", str(b)]) == 0
    assert dir_digest(a) == dir_digest(b)
