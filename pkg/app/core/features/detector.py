"""Одномасштабный детектор ORB и сопоставление дескрипторов с тестом отношения."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import cv2
import numpy as np

from app.core.frames.io import to_gray
from app.system.logs.logger import get_logger
from app.system.parallel.workers import map_ordered

LOGGER = get_logger("features")
DESCRIPTOR_BITS = 256


class FeatureFormatError(ValueError):
    """Изображения пусты или имеют разный формат каналов."""


@dataclass(frozen=True)
class DetectorConfig:
    """Настройки детектора; пирамида изображений всегда из одного уровня."""

    max_features: int = 1000
    fast_threshold: int = 10
    min_fast_threshold: int = 2
    min_fill: float = 0.5
    edge_threshold: int = 19
    patch_size: int = 19
    ratio_test: float = 0.8


@dataclass(frozen=True)
class Keypoint:
    position: Tuple[float, float]
    response: float


@dataclass(frozen=True)
class MatchPair:
    """Пара точек кадров A и B; индексы равны -1 для пар из файла."""

    point_a: Tuple[float, float]
    point_b: Tuple[float, float]
    score: float
    index_a: int = -1
    index_b: int = -1


@dataclass
class FrameFeatures:
    """Особые точки одного кадра: координаты, отклики и бинарные дескрипторы."""

    positions: np.ndarray
    responses: np.ndarray
    descriptors: np.ndarray
    image_shape: Tuple[int, int]

    @classmethod
    def empty(cls, image_shape: Tuple[int, int]) -> "FrameFeatures":
        return cls(
            positions=np.zeros((0, 2)),
            responses=np.zeros(0),
            descriptors=np.zeros((0, DESCRIPTOR_BITS // 8), dtype=np.uint8),
            image_shape=image_shape,
        )

    def __len__(self) -> int:
        return int(self.positions.shape[0])

    @property
    def keypoints(self) -> List[Keypoint]:
        return [
            Keypoint(position=(float(x), float(y)), response=float(r))
            for (x, y), r in zip(self.positions, self.responses)
        ]


def _check_image(image: np.ndarray) -> np.ndarray:
    array = np.asarray(image)
    if array.size == 0 or array.ndim not in (2, 3):
        raise FeatureFormatError(f"Ожидалось непустое изображение, получена форма {array.shape}")
    return array


def _orb(config: DetectorConfig, fast_threshold: int) -> "cv2.ORB":
    return cv2.ORB_create(
        nfeatures=config.max_features,
        scaleFactor=1.2,
        nlevels=1,
        edgeThreshold=config.edge_threshold,
        firstLevel=0,
        WTA_K=2,
        scoreType=cv2.ORB_HARRIS_SCORE,
        patchSize=config.patch_size,
        fastThreshold=fast_threshold,
    )


def detect_features(image: np.ndarray, config: DetectorConfig = DetectorConfig()) -> FrameFeatures:
    """ORB with ``nlevels=1``: no image pyramid, a single detection scale.

    Low-contrast frames are re-detected with the FAST threshold halved down to
    ``min_fast_threshold`` until ``min_fill * max_features`` corners are found.
    """

    array = _check_image(image)
    gray = to_gray(array)
    height, width = gray.shape
    if min(height, width) < 2 * config.edge_threshold + 1:
        return FrameFeatures.empty((height, width))
    threshold = config.fast_threshold
    wanted = config.min_fill * config.max_features
    keypoints, descriptors = _orb(config, threshold).detectAndCompute(gray, None)
    while len(keypoints) < wanted and threshold > config.min_fast_threshold:
        threshold = max(config.min_fast_threshold, threshold // 2)
        keypoints, descriptors = _orb(config, threshold).detectAndCompute(gray, None)
    LOGGER.debug("Особых точек: %d при пороге FAST %d", len(keypoints), threshold)
    if descriptors is None or not keypoints:
        return FrameFeatures.empty((height, width))
    positions = np.array([kp.pt for kp in keypoints], dtype=np.float64)
    responses = np.array([kp.response for kp in keypoints], dtype=np.float64)
    return FrameFeatures(
        positions=positions,
        responses=responses,
        descriptors=np.ascontiguousarray(descriptors, dtype=np.uint8),
        image_shape=(height, width),
    )


def match_features(features_a: FrameFeatures, features_b: FrameFeatures, ratio: float = 0.8) -> List[MatchPair]:
    """Brute-force Hamming matching from A to B with the nearest/second-nearest ratio test.

    Each keypoint of B keeps at most its best match so feature tracks stay unambiguous.
    """

    if len(features_a) == 0 or len(features_b) < 2:
        return []
    matcher = cv2.BFMatcher(cv2.NORM_HAMMING, crossCheck=False)
    knn = matcher.knnMatch(features_a.descriptors, features_b.descriptors, k=2)

    best: Dict[int, Tuple[float, int, int]] = {}
    for pair in knn:
        if len(pair) < 2:
            continue
        first, second = pair
        if not first.distance < ratio * second.distance:
            continue
        current = best.get(first.trainIdx)
        candidate = (float(first.distance), int(first.queryIdx), int(first.trainIdx))
        if current is None or candidate[:2] < current[:2]:
            best[first.trainIdx] = candidate

    matches: List[MatchPair] = []
    for distance, index_a, index_b in sorted(best.values(), key=lambda item: item[1]):
        ax, ay = features_a.positions[index_a]
        bx, by = features_b.positions[index_b]
        matches.append(
            MatchPair(
                point_a=(float(ax), float(ay)),
                point_b=(float(bx), float(by)),
                score=1.0 - distance / DESCRIPTOR_BITS,
                index_a=index_a,
                index_b=index_b,
            )
        )
    return matches


def detect_and_match(
    image_a: np.ndarray,
    image_b: np.ndarray,
    config: DetectorConfig = DetectorConfig(),
    workers: int = 1,
) -> List[MatchPair]:
    array_a = _check_image(image_a)
    array_b = _check_image(image_b)
    if array_a.ndim != array_b.ndim or array_a.dtype != array_b.dtype or array_a.shape[2:] != array_b.shape[2:]:
        raise FeatureFormatError(
            f"Форматы изображений не совпадают: {array_a.shape}/{array_a.dtype} и {array_b.shape}/{array_b.dtype}"
        )
    features_a, features_b = map_ordered(lambda image: detect_features(image, config), [array_a, array_b], workers)
    return match_features(features_a, features_b, config.ratio_test)


def matches_to_arrays(matches: Sequence[MatchPair]) -> Tuple[np.ndarray, np.ndarray]:
    if not matches:
        return np.zeros((0, 2)), np.zeros((0, 2))
    points_a = np.array([m.point_a for m in matches], dtype=np.float64)
    points_b = np.array([m.point_b for m in matches], dtype=np.float64)
    return points_a, points_b
