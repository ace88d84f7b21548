"""Юнит-тесты синтетических сцен, карт соответствий и оценки."""
import json
from pathlib import Path

import numpy as np
import pytest

from app.core.features.detector import MatchPair
from app.core.synth import CorrMapError, SceneError, evaluate, generate, load_scene, read_corrmap, save_sequence
from app.core.synth import scene_from_mapping, write_corrmap
from app.core.synth.evaluation import label_matches, label_quality
from app.core.synth.generator import ground_truth_composite
from app.core.synth.scene import Bump, lipschitz_ratio


def _scene_doc(**overrides) -> dict:
    doc = {
        "name": "tiny",
        "seed": 3,
        "resolution": [96, 64],
        "num_frames": 4,
        "texture": {"width": 400, "height": 240, "octaves": 3, "shapes": 20},
        "camera": {"waypoints": [{"frame": 0, "position": [120.0, 120.0]}]},
    }
    doc.update(overrides)
    return doc


def _moving_camera(step: float = 4.0, frames: int = 4) -> dict:
    return {
        "waypoints": [
            {"frame": 0, "position": [120.0, 120.0]},
            {"frame": frames - 1, "position": [120.0 + step * (frames - 1), 120.0]},
        ]
    }


def test_static_scene_repeats_first_frame() -> None:
    sequence = generate(scene_from_mapping(_scene_doc()))
    assert len(sequence.frames) == 4
    for frame in sequence.frames[1:]:
        np.testing.assert_array_equal(frame, sequence.frames[0])


def test_translating_camera_gives_shifted_crops() -> None:
    sequence = generate(scene_from_mapping(_scene_doc(camera=_moving_camera())))
    first, second = sequence.frames[0], sequence.frames[1]
    np.testing.assert_array_equal(second[:, :-4], first[:, 4:])
    np.testing.assert_allclose(sequence.corrmaps[1] - sequence.corrmaps[0], np.broadcast_to([4.0, 0.0], (64, 96, 2)))


def test_deformation_inverts_numerically() -> None:
    bumps = [{"center": [130.0, 120.0], "amplitude": [8.0, -5.0], "sigma": 40.0, "frequency": 0.1, "phase": 0.5}]
    scene = scene_from_mapping(_scene_doc(deformation={"bumps": bumps}))
    pixels = np.stack(np.meshgrid(np.arange(0, 96, 5.0), np.arange(0, 64, 5.0)), axis=-1).reshape(-1, 2)
    for t in range(4):
        back = scene.world_to_frame(scene.frame_to_world(pixels, t), t)
        assert np.max(np.abs(back - pixels)) < 0.01


def test_generation_is_deterministic_per_seed() -> None:
    doc = _scene_doc(deformation={"random": {"count": 4, "max_displacement": 6.0}}, camera=_moving_camera())
    first = generate(scene_from_mapping(doc, seed=7))
    second = generate(scene_from_mapping(doc, seed=7), workers=3)
    for a, b in zip(first.frames, second.frames):
        np.testing.assert_array_equal(a, b)
    other = generate(scene_from_mapping(doc, seed=8))
    assert not np.array_equal(first.frames[2], other.frames[2])


def test_folding_deformation_is_rejected() -> None:
    bumps = [{"center": [120.0, 120.0], "amplitude": [60.0, 0.0], "sigma": 20.0, "frequency": 0.1}]
    with pytest.raises(SceneError):
        scene_from_mapping(_scene_doc(deformation={"bumps": bumps}))
    assert lipschitz_ratio([Bump((0.0, 0.0), (3.0, 4.0), 10.0, 0.1)]) == pytest.approx(0.5 * np.exp(-0.5))


def test_random_bumps_stay_below_bound() -> None:
    doc = _scene_doc(deformation={"random": {"count": 8, "max_displacement": 40.0, "sigma_range": [30.0, 40.0]}})
    assert lipschitz_ratio(scene_from_mapping(doc).bumps) <= 0.8 + 1e-12


def test_schema_errors_name_the_field() -> None:
    with pytest.raises(SceneError, match="resolution"):
        scene_from_mapping(_scene_doc(resolution=[96]))


def test_frames_must_stay_on_texture() -> None:
    camera = {"waypoints": [{"frame": 0, "position": [10.0, 10.0]}]}
    with pytest.raises(SceneError):
        generate(scene_from_mapping(_scene_doc(camera=camera)))


def test_bundled_scenes_load() -> None:
    default = load_scene("default", num_frames=2)
    assert default.resolution == (480, 270)
    assert default.num_frames == 2
    assert load_scene("out_and_back").num_frames == 160
    with pytest.raises(SceneError):
        load_scene("no_such_scene")


def test_sequence_files(tmp_path: Path) -> None:
    sequence = generate(scene_from_mapping(_scene_doc(num_frames=2)))
    root = save_sequence(sequence, tmp_path / "seq")
    assert sorted(p.name for p in (root / "frames").iterdir()) == ["frame_0000.png", "frame_0001.png"]
    np.testing.assert_array_equal(read_corrmap(root / "corr" / "frame_0001.corr"), sequence.corrmaps[1])
    saved = json.loads((root / "scene.json").read_text(encoding="utf-8"))
    assert scene_from_mapping(saved).seed == 3


def test_corrmap_rejects_bad_files(tmp_path: Path) -> None:
    path = write_corrmap(tmp_path / "a.corr", np.zeros((2, 3, 2), dtype=np.float32))
    assert path.stat().st_size == 16 + 2 * 3 * 2 * 4
    broken = tmp_path / "b.corr"
    broken.write_bytes(b"XXXX" + path.read_bytes()[4:])
    with pytest.raises(CorrMapError):
        read_corrmap(broken)
    truncated = tmp_path / "c.corr"
    truncated.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(CorrMapError):
        read_corrmap(truncated)
    with pytest.raises(CorrMapError):
        write_corrmap(tmp_path / "d.corr", np.zeros((2, 3)))


def _trajectories(scene, offset=(0.0, 0.0)) -> dict:
    anchors = np.array([[10.0, 10.0], [50.0, 30.0], [80.0, 60.0]])
    frames = []
    for t in range(scene.num_frames):
        positions = scene.true_node_positions(anchors, t) + np.asarray(offset)
        frames.append({"frame": t, "positions": positions.tolist()})
    return {"anchors": anchors.tolist(), "frames": frames}


def test_perfect_estimates_score_zero() -> None:
    scene = scene_from_mapping(_scene_doc(camera=_moving_camera()))
    report = evaluate(_trajectories(scene), scene)
    assert report.node_rmse == pytest.approx(0.0, abs=1e-9)
    assert report.drift == pytest.approx(0.0, abs=1e-9)
    assert report.frames == 4 and report.nodes == 3


def test_constant_offset_scores_five() -> None:
    scene = scene_from_mapping(_scene_doc(camera=_moving_camera()))
    trajectories = _trajectories(scene, offset=(3.0, 4.0))
    trajectories["frames"][0]["positions"][2] = None
    report = evaluate(trajectories, scene)
    assert report.node_rmse == pytest.approx(5.0)
    assert report.drift == pytest.approx(5.0)


def test_node_order_does_not_matter() -> None:
    scene = scene_from_mapping(_scene_doc(camera=_moving_camera()))
    trajectories = _trajectories(scene, offset=(1.0, -2.0))
    trajectories["frames"][1]["positions"][0] = [0.0, 0.0]
    order = [2, 0, 1]
    permuted = {
        "anchors": [trajectories["anchors"][i] for i in order],
        "frames": [
            {"frame": f["frame"], "positions": [f["positions"][i] for i in order]} for f in trajectories["frames"]
        ],
    }
    assert evaluate(permuted, scene).node_rmse == pytest.approx(evaluate(trajectories, scene).node_rmse)


def test_nodes_outside_the_frame_do_not_count() -> None:
    """Узел, ушедший из кадра, входит только в node_rmse_all."""
    scene = scene_from_mapping(_scene_doc(camera=_moving_camera(step=20.0)))
    trajectories = _trajectories(scene)
    for entry in trajectories["frames"][1:]:
        entry["positions"][0] = [500.0, 500.0]
    report = evaluate(trajectories, scene)
    assert report.node_rmse == pytest.approx(0.0, abs=1e-9)
    assert report.drift == pytest.approx(0.0, abs=1e-9)
    assert report.node_rmse_all > 100.0


def test_mosaic_rmse_of_ground_truth_is_zero() -> None:
    scene = scene_from_mapping(_scene_doc())
    truth = np.clip(np.rint(ground_truth_composite(scene, (0, 0), (64, 96))), 0, 255).astype(np.uint8)
    report = evaluate(_trajectories(scene), scene, truth, np.ones((64, 96), dtype=bool), (0, 0))
    assert report.mosaic_rmse < 0.5 / 255.0


def test_match_labels_follow_motion() -> None:
    scene = scene_from_mapping(_scene_doc(camera=_moving_camera()))
    matches = [
        MatchPair((20.0, 20.0), (16.0, 20.0), 1.0),
        MatchPair((40.0, 30.0), (60.0, 10.0), 1.0),
    ]
    np.testing.assert_array_equal(label_matches(scene, matches, 0, 1), [True, False])
    precision, recall = label_quality(np.array([True, True, False]), np.array([True, False, False]))
    assert (precision, recall) == (0.5, 1.0)
