"""Rendering of synthetic scans with ground-truth correspondences."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from app.core.frames.io import save_png
from app.core.mosaic.blending import sample_bilinear
from app.core.synth.corrmap import write_corrmap
from app.core.synth.scene import SceneError, SyntheticScene
from app.system.logs.logger import get_logger
from app.system.parallel.workers import map_ordered

LOGGER = get_logger("synth")


@dataclass
class SyntheticSequence:
    scene: SyntheticScene
    frames: List[np.ndarray] = field(default_factory=list)
    corrmaps: List[np.ndarray] = field(default_factory=list)


def _pixel_grid(width: int, height: int) -> np.ndarray:
    xs, ys = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    return np.stack([xs, ys], axis=-1)


def render_frame(
    scene: SyntheticScene, t: int, resolution: Optional[Tuple[int, int]] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Frame ``t`` (RGB ``uint8``) and its map from frame pixels to texture coordinates."""

    width, height = resolution or scene.resolution
    corr = scene.frame_to_world(_pixel_grid(width, height), t)
    tex_h, tex_w = scene.texture.shape[:2]
    low, high = corr.reshape(-1, 2).min(axis=0), corr.reshape(-1, 2).max(axis=0)
    if low[0] < 0 or low[1] < 0 or high[0] > tex_w - 1 or high[1] > tex_h - 1:
        raise SceneError(f"Кадр {t} выходит за пределы текстуры {tex_w}x{tex_h}")
    samples = sample_bilinear(scene.texture, corr.reshape(-1, 2))
    frame = np.clip(np.rint(samples), 0, 255).astype(np.uint8).reshape(height, width, -1)
    return frame, corr.astype(np.float32)


def generate(
    scene: SyntheticScene,
    num_frames: Optional[int] = None,
    resolution: Optional[Tuple[int, int]] = None,
    workers: int = 1,
) -> SyntheticSequence:
    count = scene.num_frames if num_frames is None else int(num_frames)
    rendered = map_ordered(lambda t: render_frame(scene, t, resolution), range(count), workers)
    LOGGER.info("Сцена %s: отрисовано кадров %d", scene.name, count)
    return SyntheticSequence(
        scene=scene, frames=[frame for frame, _ in rendered], corrmaps=[corr for _, corr in rendered]
    )


def save_sequence(sequence: SyntheticSequence, output_dir: str | Path) -> Path:
    """``frames/frame_NNNN.png``, ``corr/frame_NNNN.corr`` and the effective ``scene.json``."""

    root = Path(output_dir)
    for index, (frame, corr) in enumerate(zip(sequence.frames, sequence.corrmaps)):
        save_png(root / "frames" / f"frame_{index:04d}.png", frame)
        write_corrmap(root / "corr" / f"frame_{index:04d}.corr", corr)
    scene_doc = sequence.scene.to_mapping()
    scene_doc["num_frames"] = len(sequence.frames)
    (root / "scene.json").write_text(json.dumps(scene_doc, indent=2, ensure_ascii=False), encoding="utf-8")
    return root


def ground_truth_composite(scene: SyntheticScene, origin: Tuple[int, int], shape: Tuple[int, int]) -> np.ndarray:
    """Texture colours seen through frame 0 at every reference-frame pixel of a raster.

    ``origin`` is the reference coordinate of raster pixel ``(0, 0)``;
    pixels outside the texture are zero.
    """

    height, width = shape
    grid = _pixel_grid(width, height) + np.asarray(origin, dtype=np.float64)
    world = scene.frame_to_world(grid, 0).reshape(-1, 2)
    tex_h, tex_w = scene.texture.shape[:2]
    inside = (world[:, 0] >= 0) & (world[:, 1] >= 0) & (world[:, 0] <= tex_w - 1) & (world[:, 1] <= tex_h - 1)
    colours = np.zeros((world.shape[0], scene.texture.shape[2] if scene.texture.ndim == 3 else 1))
    colours[inside] = sample_bilinear(scene.texture, world[inside])
    return colours.reshape(height, width, -1)
