"""Растущий холст мозаики с накоплением цвета и весом слияния."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np


@dataclass
class Canvas:
    """Mosaic in reference-frame coordinates.

    Canvas pixel ``(row, col)`` sits at reference coordinate
    ``origin_offset + (col, row)``.  The extent only ever grows, in whole tiles
    aligned to the reference grid.
    """

    tile_size: int = 256
    weight_cap: int = 30
    origin_offset: np.ndarray = field(default_factory=lambda: np.zeros(2, dtype=np.int64))
    color_accum: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 3)))
    merge_weight: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=np.int32))

    @property
    def shape(self) -> Tuple[int, int]:
        return int(self.merge_weight.shape[0]), int(self.merge_weight.shape[1])

    @property
    def occupancy(self) -> np.ndarray:
        return self.merge_weight > 0

    @property
    def occupied_count(self) -> int:
        return int(np.count_nonzero(self.merge_weight))

    def ensure_contains(self, x_min: float, y_min: float, x_max: float, y_max: float) -> bool:
        """Grow so that the reference box is inside the canvas; returns ``True`` if it grew."""

        tile = self.tile_size
        want_x0 = math.floor(x_min / tile) * tile
        want_y0 = math.floor(y_min / tile) * tile
        want_x1 = math.ceil((x_max + 1) / tile) * tile
        want_y1 = math.ceil((y_max + 1) / tile) * tile
        height, width = self.shape
        if height and width:
            cur_x0, cur_y0 = int(self.origin_offset[0]), int(self.origin_offset[1])
            cur_x1, cur_y1 = cur_x0 + width, cur_y0 + height
            if want_x0 >= cur_x0 and want_y0 >= cur_y0 and want_x1 <= cur_x1 and want_y1 <= cur_y1:
                return False
            want_x0, want_y0 = min(want_x0, cur_x0), min(want_y0, cur_y0)
            want_x1, want_y1 = max(want_x1, cur_x1), max(want_y1, cur_y1)

        colors = np.zeros((want_y1 - want_y0, want_x1 - want_x0, 3), dtype=np.float64)
        weights = np.zeros((want_y1 - want_y0, want_x1 - want_x0), dtype=np.int32)
        if height and width:
            row = cur_y0 - want_y0
            col = cur_x0 - want_x0
            colors[row : row + height, col : col + width] = self.color_accum
            weights[row : row + height, col : col + width] = self.merge_weight
        self.color_accum = colors
        self.merge_weight = weights
        self.origin_offset = np.array([want_x0, want_y0], dtype=np.int64)
        return True

    def update(self, rows: np.ndarray, cols: np.ndarray, samples: np.ndarray) -> None:
        """Capped running average: ``c <- (w c + c_t) / (w + 1)``, ``w <- min(w + 1, cap)``."""

        weights = self.merge_weight[rows, cols].astype(np.float64)
        current = self.color_accum[rows, cols]
        self.color_accum[rows, cols] = (weights[:, None] * current + samples) / (weights[:, None] + 1.0)
        self.merge_weight[rows, cols] = np.minimum(self.merge_weight[rows, cols] + 1, self.weight_cap)

    def occupied_box(self) -> Optional[Tuple[int, int, int, int]]:
        """``(row0, col0, row1, col1)`` of the occupied pixels (exclusive end), or ``None``."""

        occupied = self.occupancy
        if not occupied.any():
            return None
        rows = np.flatnonzero(occupied.any(axis=1))
        cols = np.flatnonzero(occupied.any(axis=0))
        return int(rows[0]), int(cols[0]), int(rows[-1]) + 1, int(cols[-1]) + 1

    def render(self, crop: bool = True) -> Tuple[np.ndarray, np.ndarray]:
        """RGB ``uint8`` raster and validity mask; unoccupied pixels are zero.

        With ``crop`` the output is cut to the occupied bounding box (``0x0``
        for an empty canvas).
        """

        rgb = np.clip(np.rint(self.color_accum), 0, 255).astype(np.uint8)
        mask = self.occupancy
        rgb[~mask] = 0
        if crop:
            box = self.occupied_box()
            if box is None:
                return np.zeros((0, 0, 3), dtype=np.uint8), np.zeros((0, 0), dtype=bool)
            row0, col0, row1, col1 = box
            return rgb[row0:row1, col0:col1], mask[row0:row1, col0:col1]
        return rgb, mask

    def to_rgba(self, crop: bool = True) -> np.ndarray:
        rgb, mask = self.render(crop)
        alpha = np.where(mask, 255, 0).astype(np.uint8)
        return np.dstack([rgb, alpha])

    def metadata(self, crop: bool = True) -> Dict[str, Any]:
        """Where the rendered raster sits in reference coordinates."""

        box = self.occupied_box() if crop else (0, 0, *self.shape)
        if box is None:
            origin = [int(self.origin_offset[0]), int(self.origin_offset[1])]
            return {"origin": origin, "width": 0, "height": 0, "occupied": 0, "tile_size": self.tile_size}
        row0, col0, row1, col1 = box
        return {
            "origin": [int(self.origin_offset[0]) + col0, int(self.origin_offset[1]) + row0],
            "width": col1 - col0,
            "height": row1 - row0,
            "occupied": self.occupied_count,
            "canvas_origin": [int(self.origin_offset[0]), int(self.origin_offset[1])],
            "canvas_shape": list(self.shape),
            "tile_size": self.tile_size,
            "weight_cap": self.weight_cap,
        }


def render(canvas: Canvas, crop: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    return canvas.render(crop)
