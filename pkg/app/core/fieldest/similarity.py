"""Weighted least-squares similarity fits in complex form (``z -> A z + C``)."""
from __future__ import annotations

from typing import Tuple

import numpy as np

from app.core.dq import algebra


def _as_complex(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    return points[..., 0] + 1j * points[..., 1]


def fit_similarity(
    src: np.ndarray, dst: np.ndarray, weights: np.ndarray | None = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Batched fit of ``dst ≈ A src + C`` over the second-to-last axis.

    ``src``/``dst`` have shape ``(..., K, 2)``, ``weights`` ``(..., K)``.  Groups
    whose weights sum to zero fall back to uniform weights; groups without
    spread fall back to a pure translation (``A = 1``).
    """

    za = _as_complex(src)
    zb = _as_complex(dst)
    if weights is None:
        w = np.ones(za.shape, dtype=np.float64)
    else:
        w = np.broadcast_to(np.asarray(weights, dtype=np.float64), za.shape)
    total = w.sum(axis=-1, keepdims=True)
    w = np.where(total > 0.0, w, 1.0)
    total = w.sum(axis=-1, keepdims=True)

    mu_a = (w * za).sum(axis=-1, keepdims=True) / total
    mu_b = (w * zb).sum(axis=-1, keepdims=True) / total
    da = za - mu_a
    db = zb - mu_b
    denominator = (w * (da.real**2 + da.imag**2)).sum(axis=-1)
    numerator = (w * db * np.conj(da)).sum(axis=-1)
    spread = denominator > 1e-12 * np.maximum(total[..., 0], 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(spread, numerator / np.where(spread, denominator, 1.0), 1.0 + 0.0j)
    a = np.where(np.abs(a) > 0.0, a, 1.0 + 0.0j)
    c = mu_b[..., 0] - a * mu_a[..., 0]
    return a, c


def similarity_to_warp(a: np.ndarray, c: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Convert ``z -> A z + C`` into warp arrays ``(scales, dqs)`` with ``s (R x + t)``."""

    a = np.asarray(a, dtype=np.complex128)
    c = np.asarray(c, dtype=np.complex128)
    scales = np.abs(a)
    angles = np.angle(a)
    t = c / scales
    translation = np.stack([t.real, t.imag], axis=-1)
    return scales, algebra.from_rigid(angles, translation)


def apply_similarity(a: np.ndarray, c: np.ndarray, points: np.ndarray) -> np.ndarray:
    z = np.asarray(a)[..., None] * _as_complex(points) + np.asarray(c)[..., None]
    return np.stack([z.real, z.imag], axis=-1)
