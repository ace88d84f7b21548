"""Интеграционные тесты: synth -> mosaic -> eval на небольшой сцене."""
import json
from pathlib import Path

import pytest

from app.app import main

SCENE = {
    "name": "integration",
    "seed": 5,
    "resolution": [240, 136],
    "num_frames": 24,
    "texture": {"width": 520, "height": 320, "octaves": 4, "shapes": 60},
    "deformation": {"random": {"count": 3, "max_displacement": 3.0, "sigma_range": [50.0, 80.0]}},
    "camera": {
        "waypoints": [
            {"frame": 0, "position": [160.0, 160.0]},
            {"frame": 12, "position": [220.0, 160.0]},
            {"frame": 23, "position": [165.0, 160.0]},
        ]
    },
}


@pytest.fixture(scope="module")
def sequence(tmp_path_factory: pytest.TempPathFactory) -> Path:
    root = tmp_path_factory.mktemp("synthetic")
    scene_path = root / "integration.scene.json"
    scene_path.write_text(json.dumps(SCENE), encoding="utf-8")
    assert main(["synth", "--scene", str(scene_path), "-o", str(root / "seq")]) == 0
    return root / "seq"


def _evaluate(sequence: Path, run: Path, *extra: str) -> dict:
    args = ["eval", "--scene", str(sequence / "scene.json"), "--run", str(run), "--frames", str(sequence / "frames")]
    assert main([*args, *extra]) == 0
    return json.loads((run / "report.json").read_text(encoding="utf-8"))


def test_sequence_layout(sequence: Path) -> None:
    assert len(list((sequence / "frames").glob("frame_*.png"))) == 24
    assert len(list((sequence / "corr").glob("frame_*.corr"))) == 24
    assert json.loads((sequence / "scene.json").read_text(encoding="utf-8"))["num_frames"] == 24


def test_mosaic_tracks_the_synthetic_scene(sequence: Path, tmp_path: Path) -> None:
    run = tmp_path / "run"
    assert main(["mosaic", str(sequence / "frames"), "-o", str(run)]) == 0
    report = _evaluate(sequence, run)
    assert report["frames"] == 24
    assert report["nodes"] > 0
    assert report["node_rmse"] < 2.0
    assert report["mosaic_rmse"] < 0.1
    assert report["inlier_precision"] > 0.9


def test_loop_closing_reduces_drift(sequence: Path, tmp_path: Path) -> None:
    with_loop, without_loop = tmp_path / "loop", tmp_path / "no_loop"
    assert main(["mosaic", str(sequence / "frames"), "-o", str(with_loop)]) == 0
    assert main(["mosaic", str(sequence / "frames"), "-o", str(without_loop), "--no-loop"]) == 0

    stats = [json.loads(line) for line in (without_loop / "stats.jsonl").read_text(encoding="utf-8").splitlines()]
    assert all(s["loop_keyframe"] is None for s in stats)
    effective = json.loads((without_loop / "mosaic.json").read_text(encoding="utf-8"))["effective_config"]
    assert effective["loop_closing"] is False

    loop_stats = [json.loads(line) for line in (with_loop / "stats.jsonl").read_text(encoding="utf-8").splitlines()]
    drift_loop = _evaluate(sequence, with_loop)["drift"]
    drift_plain = _evaluate(sequence, without_loop)["drift"]
    assert any(s["loop_keyframe"] is not None for s in loop_stats)
    assert drift_loop <= drift_plain
    # 3 px at 480x270, scaled to the 240x136 frames
    assert drift_loop < 1.5
