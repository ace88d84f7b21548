"""Ключевые кадры и замыкание петель."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from app.core.features.detector import FrameFeatures, match_features
from app.core.fieldest.estimator import EstimatorParams, FieldEstimate, estimate_field
from app.core.slam.graph import KeyFrame, NodeGraph
from app.core.slam.tracking import WarpEstimate, propagate_warps
from app.system.logs.logger import get_logger

LOGGER = get_logger("slam.keyframes")


@dataclass
class LoopResult:
    """Loop-closing estimate for every node of the graph.

    Nodes created after the keyframe have infinite variance: the loop sensor
    knows nothing about them.
    """

    keyframe: KeyFrame
    estimate: WarpEstimate
    keyframe_positions: np.ndarray
    field: FieldEstimate
    match_count: int


def keyframe_distance(positions: np.ndarray, keyframe: KeyFrame) -> float:
    """Mean displacement of the nodes shared with ``keyframe``."""

    count = min(keyframe.node_count, positions.shape[0])
    if count == 0:
        return float("inf")
    return float(np.mean(np.linalg.norm(positions[:count] - keyframe.node_positions[:count], axis=1)))


def keyframes_by_distance(graph: NodeGraph, positions: Optional[np.ndarray] = None) -> List[KeyFrame]:
    """Keyframes ordered from the closest to the farthest; ties keep insertion order."""

    current = graph.positions if positions is None else positions
    distances = [keyframe_distance(current, keyframe) for keyframe in graph.keyframes]
    order = sorted(range(len(distances)), key=lambda i: (distances[i], i))
    return [graph.keyframes[i] for i in order]


def capture_keyframe(graph: NodeGraph, frame_index: int, features: FrameFeatures) -> KeyFrame:
    return KeyFrame(
        frame_index=frame_index,
        features=features,
        node_positions=graph.positions.copy(),
        node_scales=graph.scales.copy(),
        node_dqs=graph.dqs.copy(),
        node_variances=graph.variances.copy(),
    )


def maybe_add_keyframe(graph: NodeGraph, t: int, threshold_H: float, features: Optional[FrameFeatures] = None) -> bool:
    """Add a keyframe when the nodes moved more than ``threshold_H`` from every stored keyframe."""

    if len(graph) == 0:
        raise ValueError("Нельзя создать ключевой кадр без узлов")
    if features is None:
        features = FrameFeatures.empty((0, 0))
    if graph.keyframes:
        positions = graph.positions
        nearest = min(keyframe_distance(positions, keyframe) for keyframe in graph.keyframes)
        if not nearest > threshold_H:
            return False
        LOGGER.info("Кадр %d: новый ключевой кадр (смещение %.1f px)", t, nearest)
    graph.keyframes.append(capture_keyframe(graph, t, features))
    return True


def loop_close_against(
    graph: NodeGraph,
    keyframe: KeyFrame,
    current_features: FrameFeatures,
    params: EstimatorParams,
    ratio: float = 0.8,
) -> Optional[LoopResult]:
    matches = match_features(keyframe.features, current_features, ratio)
    field = estimate_field(matches, keyframe.node_positions, params)
    if not field.ok:
        LOGGER.debug("Петля с кадром %d не замкнута: %s", keyframe.frame_index, field.reason)
        return None

    propagated = propagate_warps(
        keyframe.node_scales,
        keyframe.node_dqs,
        keyframe.node_variances,
        field.node_scales,
        field.node_dqs,
        field.node_uncertainties,
    )
    total = len(graph)
    count = keyframe.node_count
    scales = graph.scales.copy()
    dqs = graph.dqs.copy()
    variances = np.full(total, np.inf)
    scales[:count] = propagated.scales
    dqs[:count] = propagated.dqs
    variances[:count] = propagated.variances
    keyframe_positions = np.full((total, 2), np.nan)
    keyframe_positions[:count] = keyframe.node_positions
    return LoopResult(
        keyframe=keyframe,
        estimate=WarpEstimate(scales=scales, dqs=dqs, variances=variances),
        keyframe_positions=keyframe_positions,
        field=field,
        match_count=len(matches),
    )


def loop_close(
    graph: NodeGraph,
    current_features: FrameFeatures,
    t: int,
    params: EstimatorParams,
    *,
    positions: Optional[np.ndarray] = None,
    exhaustive: bool = False,
    ratio: float = 0.8,
) -> Optional[LoopResult]:
    """Close a loop against the nearest keyframe, or against every keyframe in turn when ``exhaustive``."""

    if not graph.keyframes:
        return None
    candidates: Sequence[KeyFrame] = keyframes_by_distance(graph, positions)
    if not exhaustive:
        candidates = candidates[:1]
    for keyframe in candidates:
        result = loop_close_against(graph, keyframe, current_features, params, ratio)
        if result is not None:
            LOGGER.debug("Кадр %d: петля с ключевым кадром %d", t, keyframe.frame_index)
            return result
    return None
