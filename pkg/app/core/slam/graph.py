"""Граф узлов деформации: якоря, деформации, дисперсии и ключевые кадры."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from app.core.dq import algebra
from app.core.dq.dualquat import NoSupportError, WarpFunction
from app.core.features.detector import FrameFeatures

# variances saturate here instead of reaching inf
VARIANCE_CAP = 1e100
# pixels whose strongest raw Gaussian weight is below this have no node support
SUPPORT_EPS = 1e-6


class FrameStatus(str, enum.Enum):
    REFERENCE = "reference"
    TRACKED = "tracked"
    LOOP_CLOSED = "loop_closed"
    LOST = "lost"


@dataclass(frozen=True)
class Node:
    """Read-only view of one node of the graph."""

    index: int
    anchor: Tuple[float, float]
    warp: WarpFunction
    variance: float
    created_at: int

    @property
    def current_position(self) -> np.ndarray:
        return self.warp(self.anchor)


@dataclass(frozen=True)
class FeatureTrack:
    position: Tuple[float, float]
    variance: float


@dataclass
class FeatureTracks:
    """Features of the latest tracked frame with their propagated variances.

    ``keypoint_index`` links a track to the detector keypoint it sits on
    (``-1`` for tracks built from external match files).
    """

    positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    variances: np.ndarray = field(default_factory=lambda: np.zeros(0))
    keypoint_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return int(self.positions.shape[0])

    @property
    def tracks(self) -> List[FeatureTrack]:
        return [
            FeatureTrack(position=(float(x), float(y)), variance=float(v))
            for (x, y), v in zip(self.positions, self.variances)
        ]


@dataclass
class KeyFrame:
    """Stored frame: features plus the state of the nodes that existed at that time."""

    frame_index: int
    features: FrameFeatures
    node_positions: np.ndarray
    node_scales: np.ndarray
    node_dqs: np.ndarray
    node_variances: np.ndarray

    @property
    def node_count(self) -> int:
        return int(self.node_positions.shape[0])


@dataclass
class NodeGraph:
    """SLAM state stored as parallel arrays, one row per node."""

    hex_spacing: float
    anchors: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    scales: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dqs: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    variances: np.ndarray = field(default_factory=lambda: np.zeros(0))
    created_at: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    lattice: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    lattice_origin: Optional[np.ndarray] = None
    keyframes: List[KeyFrame] = field(default_factory=list)
    feature_tracks: FeatureTracks = field(default_factory=FeatureTracks)

    def __len__(self) -> int:
        return int(self.anchors.shape[0])

    @property
    def positions(self) -> np.ndarray:
        if len(self) == 0:
            return np.zeros((0, 2))
        return algebra.warp_apply(self.scales, self.dqs, self.anchors)

    @property
    def nodes(self) -> List[Node]:
        return [
            Node(
                index=i,
                anchor=(float(self.anchors[i, 0]), float(self.anchors[i, 1])),
                warp=WarpFunction.from_arrays(self.scales[i], self.dqs[i]),
                variance=float(self.variances[i]),
                created_at=int(self.created_at[i]),
            )
            for i in range(len(self))
        ]

    def set_state(self, scales: np.ndarray, dqs: np.ndarray, variances: np.ndarray) -> None:
        if scales.shape != (len(self),) or dqs.shape != (len(self), 4) or variances.shape != (len(self),):
            raise ValueError("Размеры массивов состояния не совпадают с числом узлов")
        self.scales = np.asarray(scales, dtype=np.float64).copy()
        self.dqs = algebra.normalize(dqs)
        self.variances = np.minimum(np.asarray(variances, dtype=np.float64), VARIANCE_CAP)

    def add_nodes(
        self,
        anchors: np.ndarray,
        scales: np.ndarray,
        dqs: np.ndarray,
        variances: np.ndarray,
        created_at: int,
        lattice: np.ndarray,
    ) -> None:
        count = int(np.asarray(anchors).shape[0])
        if count == 0:
            return
        self.anchors = np.vstack([self.anchors, np.asarray(anchors, dtype=np.float64)])
        self.scales = np.concatenate([self.scales, np.asarray(scales, dtype=np.float64)])
        self.dqs = np.vstack([self.dqs, np.asarray(dqs, dtype=np.float64)])
        self.variances = np.concatenate([self.variances, np.minimum(variances, VARIANCE_CAP)])
        self.created_at = np.concatenate([self.created_at, np.full(count, created_at, dtype=np.int64)])
        self.lattice = np.vstack([self.lattice, np.asarray(lattice, dtype=np.int64).reshape(count, 2)])

    def pixel_warps(self, points: np.ndarray, alpha: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return pixel_warps(points, self.anchors, self.scales, self.dqs, alpha)

    def snapshot(self, frame_index: int, status: FrameStatus | str | None = None) -> Dict[str, Any]:
        """JSON-ready dump of the nodes and the keyframe list."""

        positions = self.positions
        return {
            "frame": int(frame_index),
            "status": FrameStatus(status).value if status is not None else None,
            "hex_spacing": float(self.hex_spacing),
            "nodes": [
                {
                    "id": i,
                    "anchor": [float(v) for v in self.anchors[i]],
                    "position": [float(v) for v in positions[i]],
                    "scale": float(self.scales[i]),
                    "dq": [float(v) for v in self.dqs[i]],
                    "variance": float(self.variances[i]),
                    "created_at": int(self.created_at[i]),
                }
                for i in range(len(self))
            ],
            "keyframes": [
                {"frame": keyframe.frame_index, "node_count": keyframe.node_count, "features": len(keyframe.features)}
                for keyframe in self.keyframes
            ],
        }


def pixel_warps(
    points: np.ndarray, anchors: np.ndarray, scales: np.ndarray, dqs: np.ndarray, alpha: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Blended warps ``(scales, dqs, supported)`` at reference-frame ``points``.

    Weights are ``exp(-alpha d^2)`` between a point and the node anchors; a
    point is supported when its largest weight exceeds ``SUPPORT_EPS``.
    """

    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if anchors.shape[0] == 0:
        raise NoSupportError("В графе нет узлов")
    sq = algebra.squared_distances(points, anchors)
    supported = np.exp(-alpha * sq.min(axis=1)) > SUPPORT_EPS
    weights = algebra.stable_kernel(sq, alpha)
    return algebra.blend_scales(weights, scales), algebra.blend_rows(weights, dqs), supported


def nearby_nodes(tree: cKDTree, center: np.ndarray, half_extent: float, alpha: float) -> np.ndarray:
    """Sorted indices of the nodes that matter anywhere within ``half_extent`` of ``center``.

    Every dropped node weighs less than ``SUPPORT_EPS`` times the nearest node
    at each point of that disc; the nearest node itself is always kept.
    """

    if alpha <= 0.0:
        return np.arange(tree.n, dtype=np.int64)
    nearest, _ = tree.query(center, k=1)
    reach = float(nearest) + half_extent
    radius = half_extent + math.sqrt(reach**2 + math.log(1.0 / SUPPORT_EPS) / alpha)
    return np.sort(np.asarray(tree.query_ball_point(center, radius), dtype=np.int64))



def pixel_unwarp(
    points: np.ndarray,
    graph: NodeGraph,
    alpha: float,
    max_iters: int = 30,
    tolerance: float = 1e-4,
) -> np.ndarray:
    """Reference-frame coordinates of current-frame ``points`` by fixed-point inversion.

    Solves ``W_p(x0)(x0) = y`` for every ``y`` via ``x0 <- W_p(x0)^{-1}(y)``,
    starting from the inverse of the nearest node's warp.
    """

    targets = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(graph) == 0:
        raise NoSupportError("В графе нет узлов")
    nearest = np.argmin(algebra.squared_distances(targets, graph.positions), axis=1)
    estimate = algebra.warp_unapply(graph.scales[nearest], graph.dqs[nearest], targets)
    for _ in range(max_iters):
        scales, dqs, _ = graph.pixel_warps(estimate, alpha)
        updated = algebra.warp_unapply(scales, dqs, targets)
        step = np.max(np.linalg.norm(updated - estimate, axis=1)) if len(targets) else 0.0
        estimate = updated
        if step < tolerance:
            break
    return estimate


def frame_border(frame_shape: Tuple[int, int], samples_per_edge: int = 16) -> np.ndarray:
    """Points along the border of a ``(height, width)`` frame, clockwise from the top-left pixel."""

    height, width = int(frame_shape[0]), int(frame_shape[1])
    right, bottom = float(width - 1), float(height - 1)
    steps = np.linspace(0.0, 1.0, samples_per_edge, endpoint=False)
    top = np.stack([steps * right, np.zeros_like(steps)], axis=-1)
    east = np.stack([np.full_like(steps, right), steps * bottom], axis=-1)
    south = np.stack([right - steps * right, np.full_like(steps, bottom)], axis=-1)
    west = np.stack([np.zeros_like(steps), bottom - steps * bottom], axis=-1)
    return np.vstack([top, east, south, west])


def frame_footprint(
    graph: NodeGraph, frame_shape: Tuple[int, int], alpha: float, samples_per_edge: int = 16
) -> np.ndarray:
    """Polygon of the current frame's border mapped into reference-frame coordinates."""

    return pixel_unwarp(frame_border(frame_shape, samples_per_edge), graph, alpha)
