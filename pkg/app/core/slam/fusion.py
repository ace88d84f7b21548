"""Merging the tracking and loop-closing estimates (two correlated sensors).

For variances ``a`` (tracking), ``b`` (loop) and correlation ``η`` the
covariance is ``[[a, η√ab], [η√ab, b]]``; the merged variance is
``1 / sum(A⁻¹)`` and the weights are ``σ²_merge A⁻¹ [1, 1]ᵀ``.  Closed forms::

    det      = a b (1 - η²)
    σ²_merge = det / (a + b - 2 η √ab)
    w        = (b - η √ab, a - η √ab) / (a + b - 2 η √ab)

A singular covariance or a negative weight falls back to the sensor with the
smaller variance, keeping its variance; ties go to tracking.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from app.core.dq import algebra
from app.core.dq.dualquat import WarpFunction
from app.core.slam.tracking import WarpEstimate

SINGULAR_TOLERANCE = 1e-12


@dataclass
class MergeOutcome:
    estimate: WarpEstimate
    weights: np.ndarray
    fallback: np.ndarray


def correlation(positions_now: np.ndarray, positions_keyframe: np.ndarray, gamma: float) -> np.ndarray:
    """``η = exp(-γ ||x_t - x_k||²)``; unknown keyframe positions give ``η = 0``."""

    diff = np.asarray(positions_now, dtype=np.float64) - np.asarray(positions_keyframe, dtype=np.float64)
    eta = np.exp(-gamma * np.sum(diff**2, axis=-1))
    return np.nan_to_num(eta, nan=0.0)


def merge_weights(
    var_track: np.ndarray, var_loop: np.ndarray, eta: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Weights ``(N, 2)``, merged variances ``(N,)`` and the fallback mask."""

    a = np.asarray(var_track, dtype=np.float64)
    b = np.asarray(var_loop, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    finite = np.isfinite(a) & np.isfinite(b)
    a_safe = np.where(finite, a, 1.0)
    b_safe = np.where(finite, b, 1.0)
    cross = eta * np.sqrt(a_safe * b_safe)
    det = a_safe * b_safe * (1.0 - eta**2)
    denominator = a_safe + b_safe - 2.0 * cross
    with np.errstate(invalid="ignore", divide="ignore"):
        w_track = (b_safe - cross) / denominator
        w_loop = (a_safe - cross) / denominator
        merged = det / denominator
    singular = (det <= SINGULAR_TOLERANCE * a_safe * b_safe) | ~(denominator > 0.0)
    negative = (w_track < 0.0) | (w_loop < 0.0)
    fallback = ~finite | singular | negative

    prefer_track = a <= b
    weights = np.stack([w_track, w_loop], axis=-1)
    weights[fallback] = np.where(prefer_track[fallback, None], [1.0, 0.0], [0.0, 1.0])
    merged = np.where(fallback, np.where(prefer_track, a, b), merged)
    return weights, merged, fallback


def ekf_merge_arrays(
    track: WarpEstimate,
    loop: WarpEstimate,
    positions_now: np.ndarray,
    positions_keyframe: np.ndarray,
    gamma: float,
) -> MergeOutcome:
    eta = correlation(positions_now, positions_keyframe, gamma)
    weights, merged, fallback = merge_weights(track.variances, loop.variances, eta)
    scales, dqs = algebra.warp_blend(weights[:, 0], track.scales, track.dqs, weights[:, 1], loop.scales, loop.dqs)
    return MergeOutcome(
        estimate=WarpEstimate(scales=scales, dqs=dqs, variances=merged), weights=weights, fallback=fallback
    )


def ekf_merge(
    W_track: WarpFunction,
    var_track: float,
    W_loop: WarpFunction,
    var_loop: float,
    node_position_now: Sequence[float],
    node_position_at_keyframe: Sequence[float],
    gamma: float,
) -> Tuple[WarpFunction, float]:
    track = WarpEstimate(np.array([W_track.scale]), W_track.dq.as_array()[None, :], np.array([float(var_track)]))
    loop = WarpEstimate(np.array([W_loop.scale]), W_loop.dq.as_array()[None, :], np.array([float(var_loop)]))
    outcome = ekf_merge_arrays(
        track,
        loop,
        np.asarray(node_position_now, dtype=np.float64)[None, :],
        np.asarray(node_position_at_keyframe, dtype=np.float64)[None, :],
        gamma,
    )
    merged = outcome.estimate
    return WarpFunction.from_arrays(merged.scales[0], merged.dqs[0]), float(merged.variances[0])
