"""As-rigid-as-possible smoothing of node warps.

Each node gets the similarity that best explains how its weighted
neighbourhood moved (SVD rotation, norm-ratio scale, weighted translation).
Warps are pulled towards that fit with ``λ = (1 + σ²) / (1 + σ²_ARAP)``, so
uncertain nodes follow their neighbours and confident nodes keep the
measurement.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from app.core.dq import algebra
from app.core.slam.graph import VARIANCE_CAP, NodeGraph
from app.system.logs.logger import get_logger

LOGGER = get_logger("slam.arap")


@dataclass(frozen=True)
class ArapParams:
    alpha: float = 2e-4
    max_iters: int = 5
    sigma2_arap: float = 100.0
    cutoff: float = 1e-3


@dataclass
class ArapResult:
    scales: np.ndarray
    dqs: np.ndarray
    costs: List[float] = field(default_factory=list)
    iterations: int = 0


@dataclass
class RigidFits:
    scales: np.ndarray
    dqs: np.ndarray
    valid: np.ndarray


def neighbour_weights(anchors: np.ndarray, alpha: float, cutoff: float) -> np.ndarray:
    """``w_ij = exp(-α ||x_i0 - x_j0||²)`` with the diagonal and weights below ``cutoff`` zeroed."""

    weights = np.exp(-alpha * algebra.squared_distances(anchors, anchors))
    np.fill_diagonal(weights, 0.0)
    weights[weights < cutoff] = 0.0
    return weights


def fit_neighbourhoods(anchors: np.ndarray, positions: np.ndarray, weights: np.ndarray) -> RigidFits:
    """Per-node similarity ``W_ARAP`` mapping the time-0 neighbourhood onto the current one."""

    n = anchors.shape[0]
    offsets_0 = anchors[None, :, :] - anchors[:, None, :]
    offsets_t = positions[None, :, :] - positions[:, None, :]
    c0 = weights[..., None] * offsets_0
    ct = weights[..., None] * offsets_t
    # C_t C_0^T summed over neighbour columns
    cross = np.einsum("ijk,ijl->ikl", ct, c0)
    norm_0 = np.sqrt(np.sum(c0**2, axis=(1, 2)))
    norm_t = np.sqrt(np.sum(ct**2, axis=(1, 2)))
    valid = (norm_0 > 1e-9) & (np.count_nonzero(weights, axis=1) > 0)

    u, _, vt = np.linalg.svd(cross)
    reflection = np.sign(np.linalg.det(u @ vt))
    reflection[reflection == 0.0] = 1.0
    u[:, :, 1] *= reflection[:, None]
    rotation = u @ vt
    angles = np.arctan2(rotation[:, 1, 0], rotation[:, 0, 0])
    with np.errstate(invalid="ignore", divide="ignore"):
        scales = np.where(valid, norm_t / np.where(valid, norm_0, 1.0), 1.0)

    # weighted translation average over the neighbours plus the node itself
    column_weights = weights + np.eye(n)
    rotated = np.einsum("ikl,jl->ijk", rotation, anchors)
    residual = positions[None, :, :] - scales[:, None, None] * rotated
    translation = np.einsum("ij,ijk->ik", column_weights, residual) / column_weights.sum(axis=1)[:, None]
    dqs = algebra.from_rigid(angles, translation / scales[:, None])
    return RigidFits(scales=scales, dqs=dqs, valid=valid)


def arap_cost(
    anchors: np.ndarray,
    merge_positions: np.ndarray,
    scales: np.ndarray,
    dqs: np.ndarray,
    lambdas: np.ndarray,
    weights: np.ndarray,
) -> float:
    positions = algebra.warp_apply(scales, dqs, anchors)
    fits = fit_neighbourhoods(anchors, positions, weights)
    arap_positions = algebra.warp_apply(fits.scales, fits.dqs, anchors)
    data = np.sum((merge_positions - positions) ** 2, axis=1)
    smooth = np.where(fits.valid, lambdas * np.sum((arap_positions - positions) ** 2, axis=1), 0.0)
    return float(np.sum(data + smooth))


def arap_smooth_arrays(
    anchors: np.ndarray, merge_scales: np.ndarray, merge_dqs: np.ndarray, variances: np.ndarray, params: ArapParams
) -> ArapResult:
    n = anchors.shape[0]
    if n < 2:
        return ArapResult(scales=merge_scales.copy(), dqs=merge_dqs.copy())
    weights = neighbour_weights(anchors, params.alpha, params.cutoff)
    lambdas = (1.0 + np.minimum(variances, VARIANCE_CAP)) / (1.0 + params.sigma2_arap)
    merge_positions = algebra.warp_apply(merge_scales, merge_dqs, anchors)

    scales, dqs = merge_scales.copy(), merge_dqs.copy()
    cost = arap_cost(anchors, merge_positions, scales, dqs, lambdas, weights)
    result = ArapResult(scales=scales, dqs=dqs, costs=[cost])
    for iteration in range(params.max_iters):
        positions = algebra.warp_apply(scales, dqs, anchors)
        fits = fit_neighbourhoods(anchors, positions, weights)
        pull = np.where(fits.valid, lambdas, 0.0)
        new_scales, new_dqs = algebra.warp_blend(
            np.ones(n), merge_scales, merge_dqs, pull, fits.scales, fits.dqs
        )
        new_cost = arap_cost(anchors, merge_positions, new_scales, new_dqs, lambdas, weights)
        if new_cost > cost:
            LOGGER.debug("ARAP: стоимость выросла на итерации %d (%.4g > %.4g)", iteration + 1, new_cost, cost)
            break
        scales, dqs, cost = new_scales, new_dqs, new_cost
        result = ArapResult(scales=scales, dqs=dqs, costs=result.costs + [cost], iterations=iteration + 1)
    return result


def arap_smooth(
    graph: NodeGraph,
    merge_scales: np.ndarray,
    merge_dqs: np.ndarray,
    node_variances: np.ndarray,
    alpha: float,
    max_iters: int = 5,
    sigma2_arap: float = 100.0,
    cutoff: float = 1e-3,
) -> ArapResult:
    params = ArapParams(alpha=alpha, max_iters=max_iters, sigma2_arap=sigma2_arap, cutoff=cutoff)
    return arap_smooth_arrays(graph.anchors, merge_scales, merge_dqs, node_variances, params)
