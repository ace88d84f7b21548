"""Сравнение результатов прогона с эталоном синтетической сцены."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from app.core.features.detector import MatchPair, matches_to_arrays
from app.core.synth.generator import ground_truth_composite
from app.core.synth.scene import SyntheticScene

LABEL_TOLERANCE = 2.0


@dataclass
class EvalReport:
    node_rmse: float = 0.0
    node_rmse_all: float = 0.0
    mosaic_rmse: float = 0.0
    inlier_precision: float = 0.0
    inlier_recall: float = 0.0
    drift: float = 0.0
    frames: int = 0
    nodes: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def node_errors(estimated: np.ndarray, truth: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.asarray(estimated, dtype=np.float64) - np.asarray(truth, dtype=np.float64), axis=-1)


def trajectory_errors(
    trajectories: Mapping[str, Any], scene: SyntheticScene, visible_only: bool = True
) -> Dict[int, np.ndarray]:
    """Per-frame node position errors; nodes without a position in a frame are skipped.

    With ``visible_only`` a node counts at frame ``t`` only while its true
    position lies inside that frame.
    """

    anchors = np.asarray(trajectories.get("anchors", []), dtype=np.float64).reshape(-1, 2)
    errors: Dict[int, np.ndarray] = {}
    for entry in trajectories.get("frames", []):
        t = int(entry["frame"])
        positions = entry.get("positions", [])
        known = [i for i, p in enumerate(positions) if p is not None]
        if not known:
            continue
        estimated = np.array([positions[i] for i in known], dtype=np.float64)
        truth = scene.true_node_positions(anchors[known], t)
        if visible_only:
            inside = (
                (truth[:, 0] >= 0.0)
                & (truth[:, 0] <= scene.width - 1)
                & (truth[:, 1] >= 0.0)
                & (truth[:, 1] <= scene.height - 1)
            )
            if not inside.any():
                continue
            estimated, truth = estimated[inside], truth[inside]
        errors[t] = node_errors(estimated, truth)
    return errors



def mosaic_rmse(
    scene: SyntheticScene, mosaic: np.ndarray, mask: np.ndarray, origin: Sequence[int]
) -> float:
    """RMS colour error over occupied pixels, on a ``[0, 1]`` scale per channel."""

    if mosaic.size == 0 or not np.any(mask):
        return 0.0
    truth = ground_truth_composite(scene, (int(origin[0]), int(origin[1])), mask.shape)
    diff = mosaic[..., :3].astype(np.float64) - truth[..., :3]
    return float(np.sqrt(np.mean(diff[mask] ** 2)) / 255.0)


def label_matches(
    scene: SyntheticScene, matches: Sequence[MatchPair], t_a: int, t_b: int, tolerance: float = LABEL_TOLERANCE
) -> np.ndarray:
    """True where a match agrees with the ground-truth motion from frame ``t_a`` to ``t_b``."""

    points_a, points_b = matches_to_arrays(matches)
    if points_a.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    expected = scene.world_to_frame(scene.frame_to_world(points_a, t_a), t_b)
    return node_errors(points_b, expected) < tolerance


def label_quality(predicted: np.ndarray, truth: np.ndarray) -> Tuple[float, float]:
    """``(precision, recall)`` of the predicted inlier flags."""

    predicted = np.asarray(predicted, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    true_positive = int(np.count_nonzero(predicted & truth))
    precision = true_positive / max(int(np.count_nonzero(predicted)), 1)
    recall = true_positive / max(int(np.count_nonzero(truth)), 1)
    return precision, recall


def evaluate(
    trajectories: Mapping[str, Any],
    scene: SyntheticScene,
    mosaic: Optional[np.ndarray] = None,
    mask: Optional[np.ndarray] = None,
    origin: Sequence[int] = (0, 0),
    labels: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> EvalReport:
    """Score a run: node RMSE over all frames, final-frame drift, mosaic RMSE and label quality.

    ``node_rmse`` and ``drift`` use the nodes inside the frame; ``node_rmse_all``
    also counts nodes that have left the view.

    ``labels`` is ``(predicted, truth)`` over pooled matches; without it the
    label metrics stay zero.
    """

    errors = trajectory_errors(trajectories, scene)
    report = EvalReport(frames=len(errors), nodes=len(trajectories.get("anchors", [])))
    if errors:
        pooled = np.concatenate(list(errors.values()))
        report.node_rmse = float(np.sqrt(np.mean(pooled**2)))
        report.drift = float(np.mean(errors[max(errors)]))
    every_node = trajectory_errors(trajectories, scene, visible_only=False)
    if every_node:
        report.node_rmse_all = float(np.sqrt(np.mean(np.concatenate(list(every_node.values())) ** 2)))
    if mosaic is not None and mask is not None:
        report.mosaic_rmse = mosaic_rmse(scene, mosaic, mask, origin)
    if labels is not None:
        report.inlier_precision, report.inlier_recall = label_quality(*labels)
    return report
