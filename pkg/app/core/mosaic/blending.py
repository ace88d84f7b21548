"""Плотное смешивание кадра в мозаику по деформациям узлов.

Iteration runs over canvas pixels: every pixel ``x0`` inside the warped frame
footprint gets its blended warp ``W_p``, the frame is sampled bilinearly at
``W_p(x0)`` and merged with the capped running average.  Rows are split into
fixed bands; each band writes only its own rows, so the result does not
depend on the worker count.  Inside a band, square tiles on canvas
columns blend only the nodes within reach of the tile.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage
from scipy.spatial import cKDTree

from app.core.dq import algebra
from app.core.dq.dualquat import NoSupportError, WarpFunction
from app.core.mosaic.canvas import Canvas
from app.core.slam.graph import NodeGraph, frame_footprint, nearby_nodes, pixel_warps
from app.system.parallel.workers import map_ordered

# sample positions this far outside the frame still count as inside (round-off)
EDGE_TOLERANCE = 1e-6


@dataclass(frozen=True)
class BlendParams:
    alpha: float = 2e-4
    band_height: int = 64
    border_samples: int = 16


@dataclass
class BlendStats:
    footprint_area: int = 0
    blended: int = 0
    skipped: int = 0
    unsupported: int = 0

    def to_dict(self) -> Dict[str, int]:
        return {
            "footprint_area": self.footprint_area,
            "blended": self.blended,
            "skipped": self.skipped,
            "unsupported": self.unsupported,
        }


def pixel_warp(x_ref: Sequence[float], nodes: NodeGraph, alpha: float) -> WarpFunction:
    """Blended warp of one reference-frame pixel; raises :class:`NoSupportError` far from every node."""

    scales, dqs, supported = nodes.pixel_warps(np.asarray(x_ref, dtype=np.float64)[None, :], alpha)
    if not supported[0]:
        raise NoSupportError(f"Нет узлов рядом с точкой {tuple(x_ref)}")
    return WarpFunction.from_arrays(scales[0], dqs[0])


def rasterize_polygon(polygon: np.ndarray, origin: np.ndarray, shape: Tuple[int, int], dilate: int = 1) -> np.ndarray:
    """Mask of the polygon on a ``shape`` raster whose pixel ``(0, 0)`` is at ``origin``."""

    image = Image.new("L", (shape[1], shape[0]), 0)
    shifted = [(float(x - origin[0]), float(y - origin[1])) for x, y in polygon]
    ImageDraw.Draw(image).polygon(shifted, fill=1, outline=1)
    mask = np.asarray(image, dtype=bool)
    if dilate > 0:
        mask = ndimage.binary_dilation(mask, iterations=dilate)
    return mask


def sample_bilinear(frame: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Bilinear samples ``(K, C)`` of ``frame`` at ``(x, y)`` points."""

    coords = [points[:, 1], points[:, 0]]
    if frame.ndim == 2:
        return ndimage.map_coordinates(frame.astype(np.float64), coords, order=1, mode="nearest")[:, None]
    channels = [
        ndimage.map_coordinates(frame[..., c].astype(np.float64), coords, order=1, mode="nearest")
        for c in range(frame.shape[2])
    ]
    return np.stack(channels, axis=-1)


def tile_warps(
    x0: np.ndarray, nodes: NodeGraph, tree: cKDTree, alpha: float, tile_ids: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """:meth:`NodeGraph.pixel_warps` evaluated tile by tile over the nodes near each tile."""

    scales = np.empty(x0.shape[0])
    dqs = np.empty((x0.shape[0], 4))
    supported = np.empty(x0.shape[0], dtype=bool)
    for tile_id in np.unique(tile_ids):
        selected = tile_ids == tile_id
        points = x0[selected]
        low, high = points.min(axis=0), points.max(axis=0)
        center = (low + high) / 2.0
        subset = nearby_nodes(tree, center, float(np.linalg.norm(high - center)), alpha)
        scales[selected], dqs[selected], supported[selected] = pixel_warps(
            points, nodes.anchors[subset], nodes.scales[subset], nodes.dqs[subset], alpha
        )
    return scales, dqs, supported


def _blend_band(
    canvas: Canvas,
    frame: np.ndarray,
    nodes: NodeGraph,
    tree: cKDTree,
    alpha: float,
    tile: int,
    rows: np.ndarray,
    cols: np.ndarray,
) -> Tuple[int, int, int]:
    if rows.size == 0:
        return 0, 0, 0
    x0 = np.stack([cols + canvas.origin_offset[0], rows + canvas.origin_offset[1]], axis=-1).astype(np.float64)
    scales, dqs, supported = tile_warps(x0, nodes, tree, alpha, cols // tile)

    targets = algebra.warp_apply(scales, dqs, x0)
    height, width = frame.shape[:2]
    inside = (
        supported
        & (targets[:, 0] >= -EDGE_TOLERANCE)
        & (targets[:, 0] <= width - 1 + EDGE_TOLERANCE)
        & (targets[:, 1] >= -EDGE_TOLERANCE)
        & (targets[:, 1] <= height - 1 + EDGE_TOLERANCE)
    )
    if inside.any():
        points = targets[inside]
        points[:, 0] = np.clip(points[:, 0], 0.0, width - 1)
        points[:, 1] = np.clip(points[:, 1], 0.0, height - 1)
        samples = sample_bilinear(frame, points)
        if samples.shape[1] == 1:
            samples = np.repeat(samples, 3, axis=1)
        canvas.update(rows[inside], cols[inside], samples[:, :3])
    blended = int(np.count_nonzero(inside))
    unsupported = int(np.count_nonzero(~supported))
    return blended, rows.size - blended, unsupported


def blend_frame(
    canvas: Canvas, frame_t: np.ndarray, nodes: NodeGraph, config: BlendParams, workers: int = 1
) -> BlendStats:
    """Merge ``frame_t`` into ``canvas`` through the current node warps."""

    polygon = frame_footprint(nodes, frame_t.shape[:2], config.alpha, config.border_samples)
    x_min, y_min = np.floor(polygon.min(axis=0)) - 1
    x_max, y_max = np.ceil(polygon.max(axis=0)) + 1
    canvas.ensure_contains(x_min, y_min, x_max, y_max)

    box_origin = np.array([int(x_min), int(y_min)], dtype=np.int64)
    box_shape = (int(y_max - y_min) + 1, int(x_max - x_min) + 1)
    mask = rasterize_polygon(polygon, box_origin, box_shape)
    box_rows, box_cols = np.nonzero(mask)
    rows = box_rows + int(box_origin[1] - canvas.origin_offset[1])
    cols = box_cols + int(box_origin[0] - canvas.origin_offset[0])

    # bands on the absolute canvas rows, independent of the worker count
    band = max(1, int(config.band_height))
    band_ids = rows // band
    bands: List[Tuple[np.ndarray, np.ndarray]] = []
    for band_id in np.unique(band_ids):
        selected = band_ids == band_id
        bands.append((rows[selected], cols[selected]))

    tree = cKDTree(nodes.anchors)
    results = map_ordered(
        lambda item: _blend_band(canvas, frame_t, nodes, tree, config.alpha, band, item[0], item[1]), bands, workers
    )
    stats = BlendStats(footprint_area=int(rows.size))
    for blended, skipped, unsupported in results:
        stats.blended += blended
        stats.skipped += skipped
        stats.unsupported += unsupported
    return stats


def _uncertainty_colour(variance: float, top: float) -> Tuple[int, int, int]:
    level = 0.0 if top <= 0 else min(1.0, math.log1p(max(variance, 0.0)) / math.log1p(top))
    return int(255 * level), int(255 * (1.0 - level)), 60


def render_overlay(
    frame: np.ndarray,
    nodes: NodeGraph,
    radius: int = 4,
    footprint: np.ndarray | None = None,
    canvas_origin: Sequence[float] = (0.0, 0.0),
) -> np.ndarray:
    """Frame with node positions coloured from green (certain) to red (uncertain).

    With ``footprint`` (reference coordinates) and ``frame`` being a rendered
    mosaic, the warped frame edges are drawn as well; ``canvas_origin`` is the
    reference coordinate of the raster's pixel ``(0, 0)``.
    """

    image = Image.fromarray(np.asarray(frame, dtype=np.uint8)).convert("RGB")
    draw = ImageDraw.Draw(image)
    ox, oy = float(canvas_origin[0]), float(canvas_origin[1])
    if footprint is not None and len(footprint) > 1:
        outline = [(float(x) - ox, float(y) - oy) for x, y in footprint]
        draw.line(outline + [outline[0]], fill=(255, 220, 0), width=1)
    positions = nodes.positions
    finite = nodes.variances[np.isfinite(nodes.variances)]
    top = float(finite.max()) if finite.size else 1.0
    for (x, y), variance in zip(positions, nodes.variances):
        cx, cy = float(x) - ox, float(y) - oy
        draw.ellipse([cx - radius, cy - radius, cx + radius, cy + radius], outline=_uncertainty_colour(variance, top))
    return np.asarray(image, dtype=np.uint8)
