"""Correspondence maps: frame pixel -> texture coordinate, ``float32`` pairs.

Layout (little-endian): 16-byte header ``b"CORR"``, ``uint32 width``,
``uint32 height``, ``uint32 version``, then ``height * width`` pairs
``(x, y)`` in row-major order.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

MAGIC = b"CORR"
VERSION = 1
HEADER_DTYPE = np.dtype([("magic", "S4"), ("width", "<u4"), ("height", "<u4"), ("version", "<u4")])


class CorrMapError(ValueError):
    """Повреждённый или несовместимый файл карты соответствий."""


def write_corrmap(path: str | Path, corr: np.ndarray) -> Path:
    corr = np.asarray(corr)
    if corr.ndim != 3 or corr.shape[2] != 2:
        raise CorrMapError(f"Ожидалась карта формы (H, W, 2), получено {corr.shape}")
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    header = np.array([(MAGIC, corr.shape[1], corr.shape[0], VERSION)], dtype=HEADER_DTYPE)
    with target.open("wb") as handle:
        handle.write(header.tobytes())
        handle.write(np.ascontiguousarray(corr, dtype="<f4").tobytes())
    return target


def read_corrmap(path: str | Path) -> np.ndarray:
    source = Path(path)
    try:
        raw = source.read_bytes()
    except FileNotFoundError as exc:
        raise CorrMapError(f"Файл карты соответствий не найден: {source}") from exc
    if len(raw) < HEADER_DTYPE.itemsize:
        raise CorrMapError(f"{source}: файл короче заголовка")
    header = np.frombuffer(raw[: HEADER_DTYPE.itemsize], dtype=HEADER_DTYPE)[0]
    if header["magic"] != MAGIC:
        raise CorrMapError(f"{source}: неверная сигнатура {header['magic']!r}")
    if int(header["version"]) != VERSION:
        raise CorrMapError(f"{source}: неподдерживаемая версия {int(header['version'])}")
    width, height = int(header["width"]), int(header["height"])
    payload = np.frombuffer(raw[HEADER_DTYPE.itemsize :], dtype="<f4")
    if payload.size != width * height * 2:
        raise CorrMapError(f"{source}: ожидалось {width * height * 2} чисел, получено {payload.size}")
    return payload.reshape(height, width, 2).astype(np.float32)
