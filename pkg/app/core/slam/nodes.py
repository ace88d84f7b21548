"""Вставка узлов на гексагональной решётке."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence, Set, Tuple

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

from app.core.dq import algebra
from app.core.slam.graph import NodeGraph
from app.system.logs.logger import get_logger

LOGGER = get_logger("slam.nodes")

HEX_STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1))
# a lattice point is kept when it lies this close (in spacings) to the region;
# hex cells have circumradius spacing/sqrt(3) < 0.6 spacing
ACCEPT_RADIUS = 0.6


@dataclass(frozen=True)
class CoverageRegion:
    """Area of the reference frame that must be covered by nodes.

    Either an axis-aligned rectangle ``(x0, y0, x1, y1)`` (pixel centres
    ``x0 <= x < x1``) or a polygon of reference-frame points.
    """

    rectangle: Optional[Tuple[float, float, float, float]] = None
    polygon: Optional[Tuple[Tuple[float, float], ...]] = None

    @classmethod
    def from_rectangle(cls, x0: float, y0: float, x1: float, y1: float) -> "CoverageRegion":
        return cls(rectangle=(float(x0), float(y0), float(x1), float(y1)))

    @classmethod
    def from_polygon(cls, points: Sequence[Sequence[float]] | np.ndarray) -> "CoverageRegion":
        return cls(polygon=tuple((float(x), float(y)) for x, y in np.asarray(points, dtype=np.float64)))

    def bounds(self) -> Tuple[float, float, float, float]:
        if self.rectangle is not None:
            return self.rectangle
        if not self.polygon:
            raise ValueError("Пустая область покрытия")
        points = np.asarray(self.polygon)
        low, high = points.min(axis=0), points.max(axis=0)
        return float(low[0]), float(low[1]), float(high[0]), float(high[1])

    def center(self) -> Tuple[float, float]:
        x0, y0, x1, y1 = self.bounds()
        return 0.5 * (x0 + x1), 0.5 * (y0 + y1)

    def raster(self, margin: int = 0) -> Tuple[np.ndarray, np.ndarray]:
        """Boolean mask of the region and the reference coordinate of its pixel ``(0, 0)``."""

        x0, y0, x1, y1 = self.bounds()
        origin = np.array([math.floor(x0) - margin, math.floor(y0) - margin], dtype=np.int64)
        width = int(math.ceil(x1)) - int(origin[0]) + margin + 1
        height = int(math.ceil(y1)) - int(origin[1]) + margin + 1
        if self.rectangle is not None:
            xs = np.arange(width) + origin[0]
            ys = np.arange(height) + origin[1]
            inside_x = (xs >= x0) & (xs < x1)
            inside_y = (ys >= y0) & (ys < y1)
            return inside_y[:, None] & inside_x[None, :], origin
        image = Image.new("L", (width, height), 0)
        shifted = [(x - origin[0], y - origin[1]) for x, y in self.polygon]
        ImageDraw.Draw(image).polygon(shifted, fill=1, outline=1)
        return np.asarray(image, dtype=bool), origin


def lattice_points(origin: np.ndarray, indices: np.ndarray, spacing: float) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.float64).reshape(-1, 2)
    x = origin[0] + spacing * (indices[:, 0] + 0.5 * indices[:, 1])
    y = origin[1] + spacing * (math.sqrt(3.0) / 2.0) * indices[:, 1]
    return np.stack([x, y], axis=-1)


class _RegionDistance:
    """Distance from reference-frame points to the region (0 inside)."""

    def __init__(self, region: CoverageRegion, margin: int):
        mask, self.origin = region.raster(margin)
        self.shape = mask.shape
        self.field = ndimage.distance_transform_edt(~mask) if mask.any() else np.full(mask.shape, np.inf)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        cols = np.rint(points[:, 0] - self.origin[0]).astype(np.int64)
        rows = np.rint(points[:, 1] - self.origin[1]).astype(np.int64)
        inside = (rows >= 0) & (rows < self.shape[0]) & (cols >= 0) & (cols < self.shape[1])
        result = np.full(points.shape[0], np.inf)
        result[inside] = self.field[rows[inside], cols[inside]]
        return result


def _initial_state(anchors: np.ndarray, alpha: float, graph: NodeGraph) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Warps and variances of new nodes: kernel-weighted blends of the existing ones."""

    count = anchors.shape[0]
    if len(graph) == 0:
        return np.ones(count), np.tile(algebra.IDENTITY, (count, 1)), np.zeros(count)
    weights = algebra.stable_kernel(algebra.squared_distances(anchors, graph.anchors), alpha)
    scales = algebra.blend_scales(weights, graph.scales)
    dqs = algebra.blend_rows(weights, graph.dqs)
    variances = (weights @ graph.variances) / weights.sum(axis=1)
    return scales, dqs, variances


def insert_nodes(graph: NodeGraph, coverage_region: CoverageRegion, alpha: float = 2e-4, frame_index: int = 0) -> int:
    """Grow the hexagonal lattice until ``coverage_region`` is covered; returns the number of new nodes.

    The first node goes to the centre of the region.  New lattice points are
    found by walking the six neighbours of existing nodes; a point is accepted
    while it lies within ``0.6 * hex_spacing`` of the region.
    """

    spacing = float(graph.hex_spacing)
    if spacing <= 0:
        raise ValueError(f"Шаг решётки должен быть > 0, получено {spacing}")
    margin = int(math.ceil(spacing)) + 2
    distance = _RegionDistance(coverage_region, margin)
    if not np.isfinite(distance.field).any():
        return 0
    # one pixel of slack for the rounding of lattice points onto the distance raster
    limit = ACCEPT_RADIUS * spacing + 1.0

    if graph.lattice_origin is None:
        graph.lattice_origin = np.asarray(coverage_region.center(), dtype=np.float64)
    origin = graph.lattice_origin

    occupied: Set[Tuple[int, int]] = {(int(i), int(j)) for i, j in graph.lattice}
    accepted: list[Tuple[int, int]] = []
    seen: Set[Tuple[int, int]] = set(occupied)
    queue: deque[Tuple[int, int]] = deque(sorted(occupied))
    if not occupied:
        queue.append((0, 0))
        seen.add((0, 0))
        accepted.append((0, 0))

    while queue:
        i, j = queue.popleft()
        for di, dj in HEX_STEPS:
            candidate = (i + di, j + dj)
            if candidate in seen:
                continue
            seen.add(candidate)
            point = lattice_points(origin, np.array([candidate]), spacing)
            if distance(point)[0] < limit:
                accepted.append(candidate)
                queue.append(candidate)

    # parts of the region the walk could not reach (disconnected from existing nodes)
    x0, y0, x1, y1 = coverage_region.bounds()
    corners = np.array([[x0, y0], [x1, y0], [x0, y1], [x1, y1]], dtype=np.float64) - origin
    row_range = corners[:, 1] / (spacing * math.sqrt(3.0) / 2.0)
    j_lo, j_hi = int(math.floor(row_range.min())) - 1, int(math.ceil(row_range.max())) + 1
    stragglers: list[Tuple[int, int]] = []
    for j in range(j_lo, j_hi + 1):
        col_range = corners[:, 0] / spacing - 0.5 * j
        for i in range(int(math.floor(col_range.min())) - 1, int(math.ceil(col_range.max())) + 2):
            if (i, j) in seen:
                continue
            if distance(lattice_points(origin, np.array([(i, j)]), spacing))[0] < limit:
                stragglers.append((i, j))
    if stragglers:
        LOGGER.warning("Решётка не дотянулась до %d точек области, они добавлены напрямую", len(stragglers))
        accepted.extend(stragglers)

    if not accepted:
        return 0
    indices = np.array(accepted, dtype=np.int64)
    anchors = lattice_points(origin, indices, spacing)
    scales, dqs, variances = _initial_state(anchors, alpha, graph)
    graph.add_nodes(anchors, scales, dqs, variances, frame_index, indices)
    LOGGER.debug("Добавлено узлов: %d (всего %d)", len(accepted), len(graph))
    return len(accepted)
