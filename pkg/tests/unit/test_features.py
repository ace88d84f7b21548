"""Юнит-тесты детектора и сопоставления особых точек."""
import numpy as np
import pytest

from app.core.features.detector import (
    DetectorConfig,
    FeatureFormatError,
    detect_and_match,
    detect_features,
    match_features,
    matches_to_arrays,
)
from app.core.frames.io import to_gray
from app.core.synth.scene import generate_texture


def test_blank_frame_has_no_features() -> None:
    blank = np.full((270, 480, 3), 128, dtype=np.uint8)
    features = detect_features(blank)
    assert len(features) == 0
    assert match_features(features, features) == []


def test_textured_frame_features_inside_image(texture: np.ndarray) -> None:
    frame = texture[:270, :480]
    features = detect_features(frame, DetectorConfig(max_features=500))
    assert 50 < len(features) <= 500
    assert features.descriptors.shape == (len(features), 32)
    assert np.all(features.positions >= 0)
    assert np.all(features.positions[:, 0] < 480) and np.all(features.positions[:, 1] < 270)


def test_shifted_crop_matches_follow_shift(texture: np.ndarray) -> None:
    """Сдвиг окна на (8, 5) даёт смещение сопоставлений (-8, -5)."""
    frame_a = texture[0:270, 0:480]
    frame_b = texture[5:275, 8:488]
    matches = detect_and_match(frame_a, frame_b)
    assert len(matches) > 50
    points_a, points_b = matches_to_arrays(matches)
    shift = points_b - points_a
    close = np.linalg.norm(shift - np.array([-8.0, -5.0]), axis=1) < 1.5
    assert close.mean() > 0.8


def test_each_keypoint_of_b_used_once(texture: np.ndarray) -> None:
    frame_a = texture[0:270, 0:480]
    frame_b = texture[3:273, 4:484]
    matches = match_features(detect_features(frame_a), detect_features(frame_b))
    used_b = [m.index_b for m in matches]
    assert min(used_b) >= 0
    assert len(set(used_b)) == len(matches)


def test_invalid_inputs() -> None:
    with pytest.raises(FeatureFormatError):
        detect_features(np.zeros((0, 0), dtype=np.uint8))
    with pytest.raises(FeatureFormatError):
        detect_and_match(np.zeros((50, 50), dtype=np.uint8), np.zeros((50, 50, 3), dtype=np.uint8))


def test_default_scene_frame_is_feature_dense() -> None:
    """Кадр 480x270 текстуры сцены по умолчанию даёт не меньше половины заказанных точек."""
    texture = generate_texture(1280, 640, seed=0, octaves=5, shapes=200)
    for x0 in (0, 400, 800):
        features = detect_features(texture[185:455, x0 : x0 + 480], DetectorConfig())
        assert len(features) >= 500


def test_low_contrast_frame_lowers_fast_threshold(texture: np.ndarray) -> None:
    """Приглушённый кадр: адаптивный порог FAST находит больше точек, чем фиксированный."""
    dim = (texture[:270, :480].astype(np.float64) * 0.05 + 120).astype(np.uint8)
    fixed = detect_features(dim, DetectorConfig(min_fast_threshold=10))
    adaptive = detect_features(dim, DetectorConfig())
    assert len(adaptive) > len(fixed)


def test_detect_and_match_is_deterministic(texture: np.ndarray) -> None:
    frame_a = texture[0:270, 0:480]
    frame_b = texture[4:274, 6:486]
    first = detect_and_match(frame_a, frame_b, workers=1)
    second = detect_and_match(frame_a, frame_b, workers=2)
    assert first == second


def test_stricter_ratio_never_adds_matches(texture: np.ndarray) -> None:
    features_a = detect_features(texture[0:270, 0:480])
    features_b = detect_features(texture[6:276, 10:490])
    counts = [len(match_features(features_a, features_b, ratio)) for ratio in (0.95, 0.9, 0.8, 0.7, 0.6, 0.5)]
    assert all(later <= earlier for earlier, later in zip(counts, counts[1:]))
    assert counts[0] > counts[-1]


def test_independent_noise_frames_barely_match() -> None:
    """Независимый шум: почти нет сопоставлений и нет исключений."""
    rng = np.random.default_rng(11)
    noise_a = rng.integers(0, 256, (270, 480), dtype=np.uint8)
    noise_b = rng.integers(0, 256, (270, 480), dtype=np.uint8)
    matches = detect_and_match(noise_a, noise_b)
    assert len(matches) < 50


def test_float_frames_are_clipped_not_wrapped() -> None:
    """Значения вне 0..255 насыщаются, дробные округляются."""
    gray = to_gray(np.array([[-20.0, 0.4, 127.6, 255.0, 300.0, 1000.0]]))
    np.testing.assert_array_equal(gray, [[0, 0, 128, 255, 255, 255]])
    colour = to_gray(np.full((4, 4, 3), 256.0))
    assert colour.dtype == np.uint8
    assert np.all(colour == 255)
