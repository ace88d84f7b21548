"""Покадровое отслеживание узлов и распространение неопределённости."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from app.core.dq import algebra
from app.core.features.detector import MatchPair, matches_to_arrays
from app.core.fieldest.estimator import FieldEstimate, MAX_LOG_UNCERTAINTY
from app.core.slam.graph import VARIANCE_CAP, FeatureTrack, FeatureTracks, NodeGraph

# external match files carry no keypoint ids; tracks are linked by position instead
LINK_TOLERANCE = 0.5


class TrackingLostError(RuntimeError):
    """Оценка поля между соседними кадрами не удалась."""


@dataclass
class WarpEstimate:
    """Per-node warps and variances produced by tracking or loop closing."""

    scales: np.ndarray
    dqs: np.ndarray
    variances: np.ndarray

    def positions(self, anchors: np.ndarray) -> np.ndarray:
        return algebra.warp_apply(self.scales, self.dqs, anchors)


def propagate_warps(
    scales: np.ndarray,
    dqs: np.ndarray,
    variances: np.ndarray,
    delta_scales: np.ndarray,
    delta_dqs: np.ndarray,
    delta_variances: np.ndarray,
) -> WarpEstimate:
    """Compose increments onto warps and propagate variances: ``Δs² σ² + Δσ²``."""

    new_scales, new_dqs = algebra.warp_update(scales, dqs, delta_scales, delta_dqs)
    new_variances = np.minimum(delta_scales**2 * variances + delta_variances, VARIANCE_CAP)
    return WarpEstimate(scales=new_scales, dqs=new_dqs, variances=new_variances)


def track_step(graph: NodeGraph, field: FieldEstimate) -> WarpEstimate:
    if not field.ok:
        raise TrackingLostError(f"Слежение потеряно: {field.reason}")
    if field.node_scales.shape[0] != len(graph):
        raise ValueError("Оценка поля покрывает не все узлы графа")
    return propagate_warps(
        graph.scales, graph.dqs, graph.variances, field.node_scales, field.node_dqs, field.node_uncertainties
    )


def propagate_feature_uncertainty(
    track: FeatureTrack, is_inlier: bool, residual_or_field: float | Tuple[float, float]
) -> FeatureTrack:
    """Inliers add their squared residual; outliers follow the node rule with ``(Δs², Δσ²)``."""

    if is_inlier:
        variance = track.variance + float(residual_or_field)
    else:
        delta_scale_sq, delta_variance = residual_or_field
        variance = delta_scale_sq * track.variance + delta_variance
    return FeatureTrack(position=track.position, variance=min(variance, VARIANCE_CAP))


def blended_variance(points: np.ndarray, node_positions: np.ndarray, variances: np.ndarray, alpha: float) -> np.ndarray:
    """Kernel-weighted mean of node variances around ``points``."""

    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if points.shape[0] == 0 or node_positions.shape[0] == 0:
        return np.zeros(points.shape[0])
    weights = algebra.stable_kernel(algebra.squared_distances(points, node_positions), alpha)
    return (weights @ np.minimum(variances, VARIANCE_CAP)) / weights.sum(axis=1)


def _link_previous(previous: FeatureTracks, matches: Sequence[MatchPair], points_a: np.ndarray) -> np.ndarray:
    """Index of the previous track each match continues, or -1."""

    linked = np.full(len(matches), -1, dtype=np.int64)
    if len(previous) == 0 or not matches:
        return linked
    indices = np.array([m.index_a for m in matches], dtype=np.int64)
    if np.all(indices >= 0) and np.all(previous.keypoint_index >= 0):
        lookup = {int(k): i for i, k in enumerate(previous.keypoint_index)}
        return np.array([lookup.get(int(k), -1) for k in indices], dtype=np.int64)
    distances, nearest = cKDTree(previous.positions).query(points_a, k=1)
    return np.where(distances <= LINK_TOLERANCE, nearest, -1)


def propagate_feature_tracks(
    previous: FeatureTracks,
    matches: Sequence[MatchPair],
    field: FieldEstimate,
    node_positions: np.ndarray,
    node_variances: np.ndarray,
    alpha: float,
) -> FeatureTracks:
    """Feature tracks of the new frame, one per tracking match.

    Matches that continue no previous track start from the kernel-blended
    variance of the previous frame's nodes at their source point.
    """

    points_a, points_b = matches_to_arrays(matches)
    if not matches:
        return FeatureTracks()
    linked = _link_previous(previous, matches, points_a)
    prior = blended_variance(points_a, node_positions, node_variances, alpha)
    has_track = linked >= 0
    prior[has_track] = previous.variances[linked[has_track]]

    inliers = field.inlier_flags
    variances = prior + np.where(inliers, field.match_residuals, 0.0)
    outliers = ~inliers
    if outliers.any():
        delta_scales, _ = field.evaluate(points_a[outliers])
        delta_variances = field.uncertainty_at(points_a[outliers])
        variances[outliers] = delta_scales**2 * prior[outliers] + delta_variances

    keypoints = np.array([m.index_b for m in matches], dtype=np.int64)
    return FeatureTracks(positions=points_b, variances=np.minimum(variances, VARIANCE_CAP), keypoint_index=keypoints)


def clamp_node_variance(
    node_variance: float, feature_tracks: Sequence[FeatureTrack], node_anchor_position: Sequence[float], beta: float
) -> float:
    """``min(σ², min_j σ²_j + exp(β d²_j))`` over the features; no features leaves σ² unchanged."""

    if not feature_tracks:
        return float(node_variance)
    positions = np.array([track.position for track in feature_tracks], dtype=np.float64)
    variances = np.array([track.variance for track in feature_tracks], dtype=np.float64)
    clamped = clamp_node_variances(
        np.array([node_variance], dtype=np.float64), np.asarray(node_anchor_position, dtype=np.float64)[None, :],
        positions, variances, beta,
    )
    return float(clamped[0])


def clamp_node_variances(
    variances: np.ndarray,
    node_positions: np.ndarray,
    feature_positions: np.ndarray,
    feature_variances: np.ndarray,
    beta: float,
    chunk: int = 4096,
) -> np.ndarray:
    if beta <= 0:
        raise ValueError(f"beta должен быть > 0, получено {beta}")
    variances = np.asarray(variances, dtype=np.float64)
    if feature_positions.shape[0] == 0 or node_positions.shape[0] == 0:
        return variances.copy()
    bound = np.full(node_positions.shape[0], np.inf)
    for start in range(0, feature_positions.shape[0], chunk):
        stop = start + chunk
        sq = algebra.squared_distances(node_positions, feature_positions[start:stop])
        candidates = feature_variances[None, start:stop] + np.exp(np.minimum(beta * sq, MAX_LOG_UNCERTAINTY))
        bound = np.minimum(bound, candidates.min(axis=1))
    return np.minimum(variances, bound)

