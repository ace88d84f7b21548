"""Frame ingestion: PNG/PGM rasters and numerically sorted frame directories."""
from __future__ import annotations

import re
from pathlib import Path
from typing import List, Tuple

import numpy as np
from PIL import Image

FRAME_SUFFIXES = {".png", ".pgm", ".ppm", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}
_DIGITS_RE = re.compile(r"(\d+)")


class FrameReadError(RuntimeError):
    """Raised when a frame file cannot be decoded."""


def _natural_key(path: Path) -> Tuple:
    parts = _DIGITS_RE.split(path.name)
    return tuple(int(part) if part.isdigit() else part.lower() for part in parts)


def list_frames(directory: str | Path) -> List[Path]:
    """Image files of ``directory`` sorted by the numbers embedded in their names."""

    folder = Path(directory)
    if not folder.is_dir():
        raise FrameReadError(f"Каталог кадров не найден: {folder}")
    files = [path for path in folder.iterdir() if path.is_file() and path.suffix.lower() in FRAME_SUFFIXES]
    return sorted(files, key=_natural_key)


def load_frame(path: str | Path) -> np.ndarray:
    """RGB ``uint8`` array of shape ``(H, W, 3)``; grayscale sources are replicated to three channels."""

    frame_path = Path(path)
    try:
        with Image.open(frame_path) as image:
            rgb = image.convert("RGB")
            return np.asarray(rgb, dtype=np.uint8).copy()
    except FileNotFoundError as exc:
        raise FrameReadError(f"Кадр не найден: {frame_path}") from exc
    except OSError as exc:
        raise FrameReadError(f"Не удалось прочитать кадр {frame_path}: {exc}") from exc


def _as_uint8(array: np.ndarray) -> np.ndarray:
    """Non-``uint8`` input is read as 0..255 intensity: rounded and clipped, never wrapped."""

    if array.dtype == np.uint8:
        return array
    rounded = np.rint(np.nan_to_num(array.astype(np.float64), nan=0.0))
    return np.clip(rounded, 0, 255).astype(np.uint8)


def to_gray(image: np.ndarray) -> np.ndarray:
    array = _as_uint8(np.asarray(image))
    if array.ndim == 2:
        return array
    return np.asarray(Image.fromarray(array).convert("L"), dtype=np.uint8)


def save_png(path: str | Path, array: np.ndarray) -> Path:
    """Write an ``(H, W)``, ``(H, W, 3)`` or ``(H, W, 4)`` ``uint8`` array as PNG."""

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(array, dtype=np.uint8)).save(target, format="PNG")
    return target
