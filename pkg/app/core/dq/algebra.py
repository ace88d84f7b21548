"""Batched kernels for the reduced 2D dual quaternion.

Layout of the last axis (fixed convention, see docs/Technical/decisions.md)::

    [c, s, d1, d2]

``c + s k`` is the real part (``c = cos(theta/2)``, ``s = sin(theta/2)``) and
``d1 i + d2 j`` is the dual part, ``d = 1/2 R(-theta/2) t``.  The other four
components of a full dual quaternion vanish for motions in the image plane.

Every function accepts arrays with arbitrary leading batch dimensions and never
mutates its inputs.
"""
from __future__ import annotations

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])

_EPS = 1e-300


def _as_float(array: np.ndarray) -> np.ndarray:
    return np.asarray(array, dtype=np.float64)


def from_rigid(angle: np.ndarray, translation: np.ndarray) -> np.ndarray:
    """Dual quaternion of ``x -> R(angle) x + translation``."""

    angle = _as_float(angle)
    translation = _as_float(translation)
    c = np.cos(0.5 * angle)
    s = np.sin(0.5 * angle)
    tx = translation[..., 0]
    ty = translation[..., 1]
    d1 = 0.5 * (c * tx + s * ty)
    d2 = 0.5 * (c * ty - s * tx)
    return np.stack(np.broadcast_arrays(c, s, d1, d2), axis=-1)


def from_translation(translation: np.ndarray) -> np.ndarray:
    translation = _as_float(translation)
    ones = np.ones(translation.shape[:-1])
    zeros = np.zeros(translation.shape[:-1])
    return np.stack([ones, zeros, 0.5 * translation[..., 0], 0.5 * translation[..., 1]], axis=-1)


def real_norm(q: np.ndarray) -> np.ndarray:
    q = _as_float(q)
    return np.hypot(q[..., 0], q[..., 1])


def normalize(q: np.ndarray) -> np.ndarray:
    """Scale so that the real part has unit norm; zero real parts give NaN."""

    q = _as_float(q)
    norm = real_norm(q)
    with np.errstate(invalid="ignore", divide="ignore"):
        return q / norm[..., None]


def conjugate(q: np.ndarray) -> np.ndarray:
    q = _as_float(q)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product ``a * b``; applying the result equals applying ``b`` then ``a``."""

    a = _as_float(a)
    b = _as_float(b)
    ac, as_, ad1, ad2 = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bc, bs, bd1, bd2 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    c = ac * bc - as_ * bs
    s = ac * bs + as_ * bc
    # a_r * b_d + a_d * b_r
    d1 = (ac * bd1 - as_ * bd2) + (ad1 * bc + ad2 * bs)
    d2 = (ac * bd2 + as_ * bd1) + (ad2 * bc - ad1 * bs)
    return np.stack([c, s, d1, d2], axis=-1)


def rotation_cos_sin(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q = _as_float(q)
    c, s = q[..., 0], q[..., 1]
    return c * c - s * s, 2.0 * c * s


def translation(q: np.ndarray) -> np.ndarray:
    q = _as_float(q)
    c, s, d1, d2 = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack([2.0 * (c * d1 - s * d2), 2.0 * (s * d1 + c * d2)], axis=-1)


def angle(q: np.ndarray) -> np.ndarray:
    q = _as_float(q)
    return 2.0 * np.arctan2(q[..., 1], q[..., 0])


def apply(q: np.ndarray, points: np.ndarray) -> np.ndarray:
    """``R x + t`` for normalized ``q``."""

    points = _as_float(points)
    cos_t, sin_t = rotation_cos_sin(q)
    t = translation(q)
    x = points[..., 0]
    y = points[..., 1]
    return np.stack([cos_t * x - sin_t * y + t[..., 0], sin_t * x + cos_t * y + t[..., 1]], axis=-1)


def apply_inverse(q: np.ndarray, points: np.ndarray) -> np.ndarray:
    """``R^T (y - t)`` for normalized ``q``."""

    points = _as_float(points)
    cos_t, sin_t = rotation_cos_sin(q)
    t = translation(q)
    x = points[..., 0] - t[..., 0]
    y = points[..., 1] - t[..., 1]
    return np.stack([cos_t * x + sin_t * y, -sin_t * x + cos_t * y], axis=-1)


def canonical(q: np.ndarray) -> np.ndarray:
    """Representative with ``c >= 0`` of the double cover ``{q, -q}``."""

    q = _as_float(q)
    sign = np.where(q[..., 0] < 0.0, -1.0, 1.0)
    sign = np.where((q[..., 0] == 0.0) & (q[..., 1] < 0.0), -1.0, sign)
    return q * sign[..., None]


def hemispherize(q: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Flip every ``q`` whose real part points away from ``reference``."""

    q = _as_float(q)
    reference = _as_float(reference)
    dot = q[..., 0] * reference[..., 0] + q[..., 1] * reference[..., 1]
    return np.where((dot < 0.0)[..., None], -q, q)


def blend_rows(weights: np.ndarray, dqs: np.ndarray) -> np.ndarray:
    """Linear dual quaternion blending for a weight matrix.

    ``weights`` has shape ``(Q, M)``, ``dqs`` shape ``(M, 4)``.  Each row is
    hemispherized against the row's first positively weighted dual quaternion,
    as in :func:`app.core.dq.dualquat.dq_blend`, before summation
    and the result is normalized.  Rows with no positive weight yield NaN.
    """

    weights = _as_float(weights)
    dqs = _as_float(dqs)
    reference = dqs[np.argmax(weights > 0.0, axis=1)]
    # sign[q, m] = +1 when dqs[m] lies in the hemisphere of row q's reference
    dots = reference[:, 0:1] * dqs[None, :, 0] + reference[:, 1:2] * dqs[None, :, 1]
    signed = np.where(dots < 0.0, -weights, weights)
    return normalize(signed @ dqs)


def blend_scales(weights: np.ndarray, scales: np.ndarray) -> np.ndarray:
    weights = _as_float(weights)
    total = weights.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return (weights @ _as_float(scales)) / total


def warp_apply(scales: np.ndarray, q: np.ndarray, points: np.ndarray) -> np.ndarray:
    return _as_float(scales)[..., None] * apply(q, points)


def warp_unapply(scales: np.ndarray, q: np.ndarray, points: np.ndarray) -> np.ndarray:
    return apply_inverse(q, _as_float(points) / _as_float(scales)[..., None])


def warp_update(
    scale_old: np.ndarray, q_old: np.ndarray, delta_scale: np.ndarray, delta_q: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Compose an increment onto a warp so that ``new(x0) == delta(old(x0))``.

    The update law multiplies left-operand-first (``a * b`` applies ``a``
    before ``b``); :func:`mul` applies its right operand first, hence the
    swapped argument order below.
    """

    scale_old = _as_float(scale_old)
    delta_t = translation(delta_q)
    q1 = from_translation(((1.0 - scale_old) / scale_old)[..., None] * delta_t)
    q2 = mul(q1, delta_q)
    q_new = normalize(mul(q2, q_old))
    return _as_float(delta_scale) * scale_old, q_new


def warp_blend(weights_a: np.ndarray, scale_a, q_a, weights_b: np.ndarray, scale_b, q_b):
    """Componentwise weighted average of two warp arrays (scale and hemispherized dq)."""

    weights_a = _as_float(weights_a)
    weights_b = _as_float(weights_b)
    total = weights_a + weights_b
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = (weights_a * _as_float(scale_a) + weights_b * _as_float(scale_b)) / total
    q_b = hemispherize(q_b, q_a)
    q = normalize(weights_a[..., None] * _as_float(q_a) + weights_b[..., None] * q_b)
    return scale, q


def stable_kernel(sq_dist: np.ndarray, alpha: float) -> np.ndarray:
    """Gaussian weights ``exp(-alpha d^2)`` rescaled so each row peaks at 1.

    Blending is invariant to a uniform rescaling of a row, so this keeps the
    blend defined far from every support point where plain ``exp`` underflows.
    """

    logits = -alpha * _as_float(sq_dist)
    return np.exp(logits - logits.max(axis=-1, keepdims=True))


def squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = _as_float(a)
    b = _as_float(b)
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)
