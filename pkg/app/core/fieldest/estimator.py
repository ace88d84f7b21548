"""Robust sparse-to-dense deformation field estimation.

The estimator separates inliers from mismatches and interpolates a smooth field:

1. seeding: for every match, similarity fits over random triples of its
   neighbours are scored by Gaussian consensus; the best fit gives the match
   an initial residual;
2. E-step: inlier probabilities from the leave-one-out residual of the blended
   field (a match never votes for itself);
3. M-step: every match gets a local similarity fitted over itself and its
   nearest inliers, weighted by the probabilities;
4. final labelling keeps residuals under the threshold, refits from inliers
   only and demotes matches until the inlier set is stable.

Node increments are dual quaternion blends of the inlier similarities with a
Gaussian kernel, so they depend on the inlier set alone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import expit

from app.core.dq import algebra
from app.core.dq.dualquat import NoSupportError, WarpFunction
from app.core.features.detector import MatchPair, matches_to_arrays
from app.core.fieldest.similarity import fit_similarity, similarity_to_warp
from app.system.logs.logger import get_logger

LOGGER = get_logger("fieldest")

# exp() argument cap: uncertainties saturate at about 1e100 instead of overflowing
MAX_LOG_UNCERTAINTY = math.log(1e100)
MIN_MATCHES = 4


class FieldEstimationError(RuntimeError):
    """Оценка поля невозможна: мало сопоставлений или вырожденная геометрия."""


@dataclass(frozen=True)
class EstimatorParams:
    inlier_threshold: float = 5.0
    field_alpha: float = 2e-3
    beta: float = 3e-3
    neighbors_k: int = 8
    seed_neighbors: int = 12
    seed_hypotheses: int = 16
    max_iters: int = 10
    tolerance: float = 1e-4
    seed: int = 0
    collinear_tolerance: float = 1.0


@dataclass
class FieldEstimate:
    """Per-node increments and uncertainties plus per-match labels.

    ``match_residuals`` holds the squared distance (px²) between each match's
    target point and the estimated field; only inlier entries enter feature
    uncertainty propagation.
    """

    node_scales: np.ndarray
    node_dqs: np.ndarray
    node_uncertainties: np.ndarray
    inlier_flags: np.ndarray
    match_residuals: np.ndarray
    ok: bool = True
    reason: str = ""
    inlier_positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    local_scales: np.ndarray = field(default_factory=lambda: np.zeros(0))
    local_dqs: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    field_alpha: float = 2e-3
    beta: float = 3e-3

    @classmethod
    def failure(cls, reason: str, num_nodes: int = 0, num_matches: int = 0) -> "FieldEstimate":
        return cls(
            node_scales=np.ones(num_nodes),
            node_dqs=np.tile(algebra.IDENTITY, (num_nodes, 1)),
            node_uncertainties=np.full(num_nodes, np.inf),
            inlier_flags=np.zeros(num_matches, dtype=bool),
            match_residuals=np.full(num_matches, np.inf),
            ok=False,
            reason=reason,
        )

    @property
    def node_increments(self) -> List[WarpFunction]:
        return [WarpFunction.from_arrays(s, q) for s, q in zip(self.node_scales, self.node_dqs)]

    @property
    def inlier_count(self) -> int:
        return int(np.count_nonzero(self.inlier_flags))

    def evaluate(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Field increment ``(scales, dqs)`` at arbitrary source-frame points."""

        if not self.ok:
            raise FieldEstimationError(f"Поле не оценено: {self.reason}")
        points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return blend_field(points, self.inlier_positions, self.local_scales, self.local_dqs, self.field_alpha)

    def uncertainty_at(self, points: np.ndarray) -> np.ndarray:
        if not self.ok:
            raise FieldEstimationError(f"Поле не оценено: {self.reason}")
        return node_uncertainties(points, self.inlier_positions, self.beta)


def blend_field(
    points: np.ndarray, support: np.ndarray, scales: np.ndarray, dqs: np.ndarray, alpha: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Gaussian-kernel blend of support warps at ``points``."""

    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if points.shape[0] == 0:
        return np.zeros(0), np.zeros((0, 4))
    weights = algebra.stable_kernel(algebra.squared_distances(points, support), alpha)
    return algebra.blend_scales(weights, scales), algebra.blend_rows(weights, dqs)


def node_uncertainty(node_anchor: Sequence[float], inlier_positions: Sequence[Sequence[float]], beta: float) -> float:
    """``min_j exp(beta * d_j^2)`` over the inliers; raises :class:`NoSupportError` without inliers."""

    return float(node_uncertainties(np.asarray(node_anchor, dtype=np.float64)[None, :], inlier_positions, beta)[0])


def node_uncertainties(anchors: np.ndarray, inlier_positions: Sequence[Sequence[float]], beta: float) -> np.ndarray:
    if beta <= 0:
        raise ValueError(f"beta должен быть > 0, получено {beta}")
    inliers = np.asarray(inlier_positions, dtype=np.float64).reshape(-1, 2)
    if inliers.shape[0] == 0:
        raise NoSupportError("Нет ни одного инлаера для оценки неопределённости")
    anchors = np.asarray(anchors, dtype=np.float64).reshape(-1, 2)
    if anchors.shape[0] == 0:
        return np.zeros(0)
    distances, _ = cKDTree(inliers).query(anchors, k=1)
    return np.exp(np.minimum(beta * distances**2, MAX_LOG_UNCERTAINTY))


def _is_degenerate(points: np.ndarray, tolerance: float) -> bool:
    centered = points - points.mean(axis=0)
    singular = np.linalg.svd(centered, compute_uv=False)
    return bool(singular[-1] / math.sqrt(points.shape[0]) < tolerance)


def _neighbour_table(points: np.ndarray, pool: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Indices of up to ``k`` nearest ``pool`` members of every point, the point itself excluded.

    Returns ``(indices, valid)``; invalid entries (the point itself, overflow) are masked out.
    """

    n = points.shape[0]
    if pool.size == 0 or k <= 0:
        return np.zeros((n, 0), dtype=np.int64), np.zeros((n, 0), dtype=bool)
    query_k = min(k + 1, pool.size)
    _, idx = cKDTree(points[pool]).query(points, k=query_k)
    idx = np.asarray(idx).reshape(n, query_k)
    neighbours = pool[idx]
    valid = neighbours != np.arange(n)[:, None]
    # rows that did not meet themselves keep only the nearest k
    overflow = valid.all(axis=1) & (query_k > k)
    valid[overflow, -1] = False
    return neighbours, valid


def _local_similarities(
    src: np.ndarray, dst: np.ndarray, probabilities: np.ndarray, inliers: np.ndarray, k: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Similarity of every match fitted over itself plus its ``k`` nearest inliers."""

    pool = np.flatnonzero(inliers)
    if pool.size < 3:
        pool = np.arange(src.shape[0])
    neighbours, valid = _neighbour_table(src, pool, k)
    members = np.concatenate([np.arange(src.shape[0])[:, None], neighbours], axis=1)
    weights = probabilities[members] * np.concatenate([np.ones((src.shape[0], 1), dtype=bool), valid], axis=1)
    return fit_similarity(src[members], dst[members], weights)


def _field_residuals(
    src: np.ndarray,
    dst: np.ndarray,
    scales: np.ndarray,
    dqs: np.ndarray,
    support_weights: np.ndarray,
    alpha: float,
    leave_one_out: bool,
) -> np.ndarray:
    sq = algebra.squared_distances(src, src)
    if leave_one_out:
        np.fill_diagonal(sq, np.inf)
    kernel = algebra.stable_kernel(sq, alpha) * support_weights[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        blended_scales = algebra.blend_scales(kernel, scales)
        blended_dqs = algebra.blend_rows(kernel, dqs)
        predicted = algebra.warp_apply(blended_scales, blended_dqs, src)
    residuals = np.linalg.norm(dst - predicted, axis=1)
    return np.where(np.isfinite(residuals), residuals, np.inf)


def _hypothesis_picks(n: int, hypotheses: int, k: int, seed: int) -> np.ndarray:
    """Neighbour picks ``(n, hypotheses, 3)``; match ``i`` draws from its own stream ``[seed, i]``.

    A match's triples depend on its position in the list and its neighbour
    table only, so appending matches leaves earlier draws untouched.
    """

    picks = np.empty((n, hypotheses, 3), dtype=np.int64)
    for i in range(n):
        keys = np.random.default_rng([seed, i]).random((hypotheses, k))
        picks[i] = keys.argsort(axis=-1)[:, :3]
    return picks


def _seed_residuals(src: np.ndarray, dst: np.ndarray, params: EstimatorParams) -> np.ndarray:
    n = src.shape[0]
    neighbours, valid = _neighbour_table(src, np.arange(n), params.seed_neighbors)
    # drop the overflow column so every row has exactly k neighbours
    k = min(params.seed_neighbors, n - 1)
    order = np.argsort(~valid, axis=1, kind="stable")[:, :k]
    neighbours = np.take_along_axis(neighbours, order, axis=1)

    picks = _hypothesis_picks(n, params.seed_hypotheses, k, params.seed)
    triples = np.take_along_axis(np.broadcast_to(neighbours[:, None, :], picks.shape[:2] + (k,)), picks, axis=-1)
    a, c = fit_similarity(src[triples], dst[triples])

    za = src[..., 0] + 1j * src[..., 1]
    zb = dst[..., 0] + 1j * dst[..., 1]
    hood = np.concatenate([np.arange(n)[:, None], neighbours], axis=1)
    predicted = a[:, :, None] * za[hood][:, None, :] + c[:, :, None]
    errors = np.abs(predicted - zb[hood][:, None, :])
    tau_seed = 0.5 * params.inlier_threshold
    scores = np.exp(-(errors**2) / (2.0 * tau_seed**2)).sum(axis=-1)
    best = np.argmax(scores, axis=1)
    return errors[np.arange(n), best, 0]


def _probabilities(residuals: np.ndarray, sigma2: float, tau: float) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        p = expit(-(residuals**2 - tau**2) / (2.0 * sigma2))
    return np.nan_to_num(p, nan=0.0)


def estimate_field(
    matches: Sequence[MatchPair], node_anchors: Sequence[Sequence[float]] | np.ndarray, params: EstimatorParams
) -> FieldEstimate:
    """Estimate node increments and inlier labels from noisy matches.

    Failures (too few matches, collinear geometry, fewer than four consistent
    inliers) come back as ``FieldEstimate.failure`` with ``ok == False``.
    """

    anchors = np.asarray(node_anchors, dtype=np.float64).reshape(-1, 2)
    src, dst = matches_to_arrays(matches)
    return estimate_field_arrays(src, dst, anchors, params)


def estimate_field_arrays(
    src: np.ndarray, dst: np.ndarray, anchors: np.ndarray, params: EstimatorParams
) -> FieldEstimate:
    num_matches = src.shape[0]
    num_nodes = anchors.shape[0]
    if num_nodes == 0:
        raise ValueError("Для оценки поля нужен хотя бы один узел")
    if num_matches < MIN_MATCHES:
        return FieldEstimate.failure(f"мало сопоставлений: {num_matches}", num_nodes, num_matches)
    if _is_degenerate(src, params.collinear_tolerance):
        return FieldEstimate.failure("точки сопоставлений коллинеарны", num_nodes, num_matches)

    tau = params.inlier_threshold
    residuals = _seed_residuals(src, dst, params)
    sigma2 = (0.5 * tau) ** 2
    probabilities = _probabilities(residuals, sigma2, tau)

    for iteration in range(params.max_iters):
        a, c = _local_similarities(src, dst, probabilities, probabilities >= 0.5, params.neighbors_k)
        scales, dqs = similarity_to_warp(a, c)
        residuals = _field_residuals(src, dst, scales, dqs, probabilities, params.field_alpha, leave_one_out=True)
        finite = np.isfinite(residuals)
        total = probabilities[finite].sum()
        if total > 0.0:
            sigma2 = float(np.sum(probabilities[finite] * residuals[finite] ** 2) / (2.0 * total))
        sigma2 = float(np.clip(sigma2, 0.25, tau**2))
        updated = _probabilities(residuals, sigma2, tau)
        change = np.linalg.norm(updated - probabilities) / max(np.linalg.norm(probabilities), 1e-12)
        probabilities = updated
        LOGGER.debug("EM итерация %d: изменение %.3g, sigma2 %.3g", iteration + 1, change, sigma2)
        if change < params.tolerance:
            break

    inliers = (probabilities >= 0.5) & (residuals < tau)
    while True:
        count = int(np.count_nonzero(inliers))
        if count < MIN_MATCHES:
            return FieldEstimate.failure(f"согласованных инлаеров: {count}", num_nodes, num_matches)
        inlier_src = src[inliers]
        if _is_degenerate(inlier_src, params.collinear_tolerance):
            return FieldEstimate.failure("инлаеры коллинеарны", num_nodes, num_matches)
        ones = np.ones(count)
        a, c = _local_similarities(inlier_src, dst[inliers], ones, ones.astype(bool), params.neighbors_k)
        local_scales, local_dqs = similarity_to_warp(a, c)
        inlier_residuals = _field_residuals(
            inlier_src, dst[inliers], local_scales, local_dqs, ones, params.field_alpha, leave_one_out=False
        )
        rejected = inlier_residuals >= tau
        if not rejected.any():
            break
        inliers[np.flatnonzero(inliers)[rejected]] = False

    field_scales, field_dqs = blend_field(src, inlier_src, local_scales, local_dqs, params.field_alpha)
    predicted = algebra.warp_apply(field_scales, field_dqs, src)
    match_residuals = np.sum((dst - predicted) ** 2, axis=1)
    node_scales, node_dqs = blend_field(anchors, inlier_src, local_scales, local_dqs, params.field_alpha)

    return FieldEstimate(
        node_scales=node_scales,
        node_dqs=node_dqs,
        node_uncertainties=node_uncertainties(anchors, inlier_src, params.beta),
        inlier_flags=inliers,
        match_residuals=match_residuals,
        inlier_positions=inlier_src,
        local_scales=local_scales,
        local_dqs=local_dqs,
        field_alpha=params.field_alpha,
        beta=params.beta,
    )

