"""Покадровый конвейер SLAM.

Order of one step: detection, tracking against the previous frame, loop
closing (every ``loop_stride`` frames or when tracking is lost), merging,
variance clamping, ARAP smoothing, keyframe check and node insertion over the
frame footprint.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence

import numpy as np

from app.core.features.detector import DetectorConfig, FrameFeatures, MatchPair, detect_features, match_features
from app.core.fieldest.estimator import EstimatorParams, estimate_field
from app.core.slam.arap import ArapParams, arap_smooth_arrays
from app.core.slam.fusion import ekf_merge_arrays
from app.core.slam.graph import FeatureTracks, FrameStatus, NodeGraph, frame_footprint
from app.core.slam.keyframes import LoopResult, loop_close, maybe_add_keyframe
from app.core.slam.nodes import CoverageRegion, insert_nodes
from app.core.slam.tracking import (
    WarpEstimate,
    clamp_node_variances,
    propagate_feature_tracks,
    track_step,
)
from app.system.logs.logger import get_logger

LOGGER = get_logger("slam.pipeline")


@dataclass(frozen=True)
class SlamParams:
    alpha: float = 2e-4
    beta: float = 3e-3
    gamma: float = 5e-3
    loop_stride: int = 5
    keyframe_H: float = 40.0
    hex_spacing: float = 60.0
    loop_closing: bool = True
    border_samples: int = 16
    estimator: EstimatorParams = field(default_factory=EstimatorParams)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    arap: ArapParams = field(default_factory=ArapParams)


@dataclass
class FrameResult:
    frame_index: int
    status: FrameStatus
    node_count: int
    mean_variance: float
    matches: int = 0
    inliers: int = 0
    keyframe_added: bool = False
    nodes_added: int = 0
    loop_keyframe: Optional[int] = None
    arap_iterations: int = 0
    timings: Dict[str, float] = field(default_factory=dict)

    def to_stats(self) -> Dict[str, Any]:
        return {
            "frame": self.frame_index,
            "status": self.status.value,
            "nodes": self.node_count,
            "mean_variance": self.mean_variance,
            "matches": self.matches,
            "inliers": self.inliers,
            "keyframe_added": self.keyframe_added,
            "nodes_added": self.nodes_added,
            "loop_keyframe": self.loop_keyframe,
            "arap_iterations": self.arap_iterations,
            "ms": {stage: round(value, 3) for stage, value in self.timings.items()},
        }


class _StageTimer:
    def __init__(self) -> None:
        self.timings: Dict[str, float] = {}

    def stage(self, name: str) -> "_Stage":
        return _Stage(self, name)


class _Stage:
    def __init__(self, timer: _StageTimer, name: str):
        self._timer = timer
        self._name = name
        self._start = 0.0

    def __enter__(self) -> None:
        self._start = time.perf_counter()

    def __exit__(self, *exc: object) -> None:
        elapsed = (time.perf_counter() - self._start) * 1000.0
        self._timer.timings[self._name] = self._timer.timings.get(self._name, 0.0) + elapsed


def _mean_variance(graph: NodeGraph) -> float:
    finite = graph.variances[np.isfinite(graph.variances)]
    return float(finite.mean()) if finite.size else 0.0


class SlamPipeline:
    """Owns the node graph and advances it one frame at a time."""

    def __init__(self, params: SlamParams):
        self.params = params
        self.graph = NodeGraph(hex_spacing=params.hex_spacing)
        self.previous_features: Optional[FrameFeatures] = None
        self.frame_shape: Optional[tuple] = None
        self.last_status: Optional[FrameStatus] = None

    @property
    def started(self) -> bool:
        return self.previous_features is not None

    def footprint(self, frame_shape: Optional[Sequence[int]] = None) -> np.ndarray:
        shape = tuple(frame_shape or self.frame_shape)
        return frame_footprint(self.graph, shape[:2], self.params.alpha, self.params.border_samples)

    def start(
        self, frame: np.ndarray, features: Optional[FrameFeatures] = None, frame_index: int = 0
    ) -> FrameResult:
        """Frame 0 defines the reference coordinates: nodes over the whole frame, identity warps."""

        timer = _StageTimer()
        with timer.stage("detect"):
            features = features if features is not None else detect_features(frame, self.params.detector)
        height, width = frame.shape[:2]
        self.frame_shape = (height, width)
        self.graph = NodeGraph(hex_spacing=self.params.hex_spacing)
        with timer.stage("insert"):
            region = CoverageRegion.from_rectangle(0, 0, width, height)
            added = insert_nodes(self.graph, region, self.params.alpha, frame_index)
        with timer.stage("keyframe"):
            maybe_add_keyframe(self.graph, frame_index, self.params.keyframe_H, features)
        self.previous_features = features
        self.last_status = FrameStatus.REFERENCE
        LOGGER.info("Опорный кадр %dx%d: %d узлов, %d особых точек", width, height, added, len(features))
        return FrameResult(
            frame_index=frame_index,
            status=FrameStatus.REFERENCE,
            node_count=len(self.graph),
            mean_variance=0.0,
            keyframe_added=True,
            nodes_added=added,
            timings=timer.timings,
        )

    def process_frame(
        self,
        frame_index: int,
        frame: np.ndarray,
        tracking_matches: Optional[Sequence[MatchPair]] = None,
        features: Optional[FrameFeatures] = None,
    ) -> FrameResult:
        if not self.started:
            return self.start(frame, features, frame_index)
        params = self.params
        graph = self.graph
        timer = _StageTimer()

        with timer.stage("detect"):
            features = features if features is not None else detect_features(frame, params.detector)
            if tracking_matches is None:
                tracking_matches = match_features(self.previous_features, features, params.detector.ratio_test)
            matches = list(tracking_matches)

        track: Optional[WarpEstimate] = None
        tracks = FeatureTracks()
        inliers = 0
        with timer.stage("track"):
            field_estimate = estimate_field(matches, graph.positions, params.estimator)
            if field_estimate.ok:
                track = track_step(graph, field_estimate)
                inliers = field_estimate.inlier_count
                tracks = propagate_feature_tracks(
                    graph.feature_tracks, matches, field_estimate, graph.positions, graph.variances, params.alpha
                )
        lost = track is None

        loop: Optional[LoopResult] = None
        with timer.stage("loop"):
            due = frame_index % params.loop_stride == 0
            if params.loop_closing and (due or lost):
                loop = loop_close(
                    graph,
                    features,
                    frame_index,
                    params.estimator,
                    positions=track.positions(graph.anchors) if track is not None else graph.positions,
                    exhaustive=lost,
                    ratio=params.detector.ratio_test,
                )

        if lost and loop is None:
            if self.last_status is not FrameStatus.LOST:
                LOGGER.info("Кадр %d: слежение потеряно (%s)", frame_index, field_estimate.reason)
            self.last_status = FrameStatus.LOST
            return FrameResult(
                frame_index=frame_index,
                status=FrameStatus.LOST,
                node_count=len(graph),
                mean_variance=_mean_variance(graph),
                matches=len(matches),
                timings=timer.timings,
            )

        with timer.stage("merge"):
            if track is None:
                known = np.isfinite(loop.estimate.variances)
                merged = WarpEstimate(
                    scales=np.where(known, loop.estimate.scales, graph.scales),
                    dqs=np.where(known[:, None], loop.estimate.dqs, graph.dqs),
                    variances=np.where(known, loop.estimate.variances, graph.variances),
                )
            elif loop is not None:
                merged = ekf_merge_arrays(
                    track, loop.estimate, track.positions(graph.anchors), loop.keyframe_positions, params.gamma
                ).estimate
            else:
                merged = track
            variances = clamp_node_variances(
                merged.variances, merged.positions(graph.anchors), tracks.positions, tracks.variances, params.beta
            )

        with timer.stage("arap"):
            smoothed = arap_smooth_arrays(graph.anchors, merged.scales, merged.dqs, variances, params.arap)
            graph.set_state(smoothed.scales, smoothed.dqs, variances)
            graph.feature_tracks = tracks

        with timer.stage("keyframe"):
            keyframe_added = maybe_add_keyframe(graph, frame_index, params.keyframe_H, features)

        with timer.stage("insert"):
            region = CoverageRegion.from_polygon(self.footprint(frame.shape))
            added = insert_nodes(graph, region, params.alpha, frame_index)

        status = FrameStatus.LOOP_CLOSED if loop is not None else FrameStatus.TRACKED
        if self.last_status is FrameStatus.LOST:
            LOGGER.info("Кадр %d: слежение восстановлено (%s)", frame_index, status.value)
        if added:
            LOGGER.info("Кадр %d: добавлено узлов %d (всего %d)", frame_index, added, len(graph))
        self.previous_features = features
        self.last_status = status
        return FrameResult(
            frame_index=frame_index,
            status=status,
            node_count=len(graph),
            mean_variance=_mean_variance(graph),
            matches=len(matches),
            inliers=inliers,
            keyframe_added=keyframe_added,
            nodes_added=added,
            loop_keyframe=loop.keyframe.frame_index if loop is not None else None,
            arap_iterations=smoothed.iterations,
            timings=timer.timings,
        )

    def snapshot(self, frame_index: int) -> Dict[str, Any]:
        return self.graph.snapshot(frame_index, self.last_status)


def process_frame(
    state: SlamPipeline, frame_index: int, frame: np.ndarray, tracking_matches: Optional[Sequence[MatchPair]] = None
) -> FrameResult:
    return state.process_frame(frame_index, frame, tracking_matches)
