"""Двумерный нежёсткий SLAM: граф узлов, слежение, петли, слияние, ARAP."""
from app.core.slam.arap import arap_smooth
from app.core.slam.fusion import ekf_merge
from app.core.slam.graph import FeatureTrack, FrameStatus, KeyFrame, Node, NodeGraph, pixel_unwarp
from app.core.slam.keyframes import loop_close, maybe_add_keyframe
from app.core.slam.nodes import CoverageRegion, insert_nodes
from app.core.slam.pipeline import FrameResult, SlamParams, SlamPipeline, process_frame
from app.core.slam.tracking import (
    TrackingLostError,
    clamp_node_variance,
    propagate_feature_uncertainty,
    track_step,
)

__all__ = [
    "CoverageRegion",
    "FeatureTrack",
    "FrameResult",
    "FrameStatus",
    "KeyFrame",
    "Node",
    "NodeGraph",
    "SlamParams",
    "SlamPipeline",
    "TrackingLostError",
    "arap_smooth",
    "clamp_node_variance",
    "ekf_merge",
    "insert_nodes",
    "loop_close",
    "maybe_add_keyframe",
    "pixel_unwarp",
    "process_frame",
    "propagate_feature_uncertainty",
    "track_step",
]
