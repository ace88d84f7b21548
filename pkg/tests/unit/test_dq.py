"""Юнит-тесты алгебры дуальных кватернионов на плоскости."""
import math

import numpy as np
import pytest

from app.core.dq import (
    DualQuat2,
    InvalidWarpError,
    NoSupportError,
    WarpFunction,
    dq_blend,
    dq_from_rigid,
    dq_inverse,
    dq_mul,
    dq_normalize,
    dq_to_rigid,
    trans2dq,
    warp_apply,
    warp_identity,
    warp_inverse,
    warp_unapply,
    warp_update,
)
from app.core.dq import algebra


def _rotation(angle: np.ndarray) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.stack([np.stack([c, -s], axis=-1), np.stack([s, c], axis=-1)], axis=-2)


def _random_warps(rng: np.random.Generator, count: int, max_angle: float = math.pi):
    angles = rng.uniform(-max_angle, max_angle, count)
    translations = rng.uniform(-200.0, 200.0, (count, 2))
    scales = rng.uniform(0.5, 2.0, count)
    return angles, translations, scales, algebra.from_rigid(angles, translations)


def test_rigid_action_matches_rotation_matrix() -> None:
    rng = np.random.default_rng(1)
    angles, translations, _, dqs = _random_warps(rng, 10_000)
    points = rng.uniform(-500.0, 500.0, (10_000, 2))
    expected = np.einsum("nij,nj->ni", _rotation(angles), points) + translations
    assert np.max(np.abs(algebra.apply(dqs, points) - expected)) < 1e-9


def test_mul_applies_right_operand_first() -> None:
    rng = np.random.default_rng(2)
    _, _, _, a = _random_warps(rng, 10_000)
    _, _, _, b = _random_warps(rng, 10_000)
    points = rng.uniform(-500.0, 500.0, (10_000, 2))
    composed = algebra.apply(algebra.mul(a, b), points)
    sequential = algebra.apply(a, algebra.apply(b, points))
    assert np.max(np.abs(composed - sequential)) < 1e-9


def test_update_law_postcondition() -> None:
    """new(x0) == delta(old(x0)) для случайных пар деформаций."""
    rng = np.random.default_rng(3)
    _, _, old_scales, old_q = _random_warps(rng, 10_000)
    _, _, delta_scales, delta_q = _random_warps(rng, 10_000)
    points = rng.uniform(-300.0, 300.0, (10_000, 2))
    new_scales, new_q = algebra.warp_update(old_scales, old_q, delta_scales, delta_q)
    expected = algebra.warp_apply(delta_scales, delta_q, algebra.warp_apply(old_scales, old_q, points))
    assert np.max(np.abs(algebra.warp_apply(new_scales, new_q, points) - expected)) < 1e-9
    np.testing.assert_allclose(algebra.real_norm(new_q), 1.0, atol=1e-12)


def test_scalar_update_matches_batched_kernel() -> None:
    old = WarpFunction(scale=1.3, dq=dq_from_rigid(0.4, (10.0, -5.0)))
    delta = WarpFunction(scale=0.9, dq=dq_from_rigid(-0.1, (3.0, 7.0)))
    new = warp_update(old, delta)
    point = (12.0, 34.0)
    np.testing.assert_allclose(warp_apply(new, point), warp_apply(delta, warp_apply(old, point)), atol=1e-9)


def test_identity_warp() -> None:
    identity = warp_identity()
    assert identity.scale == 1.0
    np.testing.assert_allclose(identity((3.5, -2.0)), [3.5, -2.0])


def test_translation_only() -> None:
    q = trans2dq((4.0, -6.0))
    np.testing.assert_allclose(q.apply((1.0, 1.0)), [5.0, -5.0])


def test_inverse_round_trip() -> None:
    warp = WarpFunction(scale=1.7, dq=dq_from_rigid(1.1, (-40.0, 25.0)))
    point = np.array([17.0, -3.0])
    np.testing.assert_allclose(warp_unapply(warp, warp(point)), point, atol=1e-9)
    np.testing.assert_allclose(warp_inverse(warp)(warp(point)), point, atol=1e-9)
    q = dq_from_rigid(0.7, (2.0, 3.0))
    np.testing.assert_allclose(dq_mul(dq_inverse(q), q).apply(point), point, atol=1e-9)


def test_to_rigid_recovers_parameters() -> None:
    angle, translation = dq_to_rigid(dq_from_rigid(0.3, (5.0, 6.0)))
    assert angle == pytest.approx(0.3)
    np.testing.assert_allclose(translation, [5.0, 6.0], atol=1e-12)


def test_normalize_rejects_zero_real_part() -> None:
    with pytest.raises(InvalidWarpError):
        dq_normalize(DualQuat2(real=(0.0, 0.0), dual=(1.0, 1.0)))


def test_unapply_requires_positive_scale() -> None:
    with pytest.raises(InvalidWarpError):
        warp_unapply(WarpFunction(scale=0.0), (1.0, 1.0))


def test_blend_ignores_double_cover_sign() -> None:
    q = dq_from_rigid(0.5, (10.0, 0.0))
    blended = dq_blend([1.0, 1.0], [q, -q], [1.0, 1.0])
    np.testing.assert_allclose(blended((1.0, 2.0)), q.apply((1.0, 2.0)), atol=1e-12)


def test_blend_single_weight_returns_that_warp() -> None:
    a = dq_from_rigid(0.2, (1.0, 2.0))
    b = dq_from_rigid(-0.9, (30.0, -4.0))
    blended = dq_blend([0.0, 2.0], [a, b], [1.5, 0.8])
    assert blended.scale == pytest.approx(0.8)
    np.testing.assert_allclose(blended((5.0, 5.0)), 0.8 * b.apply((5.0, 5.0)), atol=1e-12)


def test_blend_without_support() -> None:
    q = dq_from_rigid(0.0, (0.0, 0.0))
    with pytest.raises(NoSupportError):
        dq_blend([0.0, 0.0], [q, q], [1.0, 1.0])
    with pytest.raises(ValueError):
        dq_blend([1.0, -1.0], [q, q], [1.0, 1.0])


def test_blend_rows_matches_scalar_blend() -> None:
    rng = np.random.default_rng(4)
    _, _, scales, dqs = _random_warps(rng, 6, max_angle=1.0)
    weights = rng.uniform(0.0, 1.0, (3, 6))
    rows = algebra.blend_rows(weights, dqs)
    for row, w in zip(rows, weights):
        expected = dq_blend(w, [DualQuat2.from_array(q) for q in dqs], scales)
        np.testing.assert_allclose(algebra.canonical(row), algebra.canonical(expected.dq.as_array()), atol=1e-12)


def test_stable_kernel_peaks_at_one() -> None:
    weights = algebra.stable_kernel(np.array([[1e8, 2e8, 3e8]]), 2e-4)
    assert weights[0, 0] == 1.0
    assert np.all(weights <= 1.0)


def test_mul_is_associative() -> None:
    rng = np.random.default_rng(7)
    angles, translations, _, _ = _random_warps(rng, 3)
    a, b, c = (dq_from_rigid(float(t), tuple(p)) for t, p in zip(angles, translations))
    left = dq_mul(dq_mul(a, b), c).as_array()
    right = dq_mul(a, dq_mul(b, c)).as_array()
    np.testing.assert_allclose(left, right, atol=1e-9)


def test_normalize_is_idempotent() -> None:
    once = dq_normalize(DualQuat2(real=(2.0, 1.0), dual=(3.0, -1.0)))
    twice = dq_normalize(once)
    np.testing.assert_allclose(twice.as_array(), once.as_array(), atol=1e-15)
    assert math.hypot(*once.real) == pytest.approx(1.0)


def test_blend_ignores_uniform_weight_rescaling() -> None:
    """Умножение всех весов на константу не меняет результат смешивания."""
    rng = np.random.default_rng(8)
    _, _, scales, dqs = _random_warps(rng, 5)
    warps = [DualQuat2.from_array(q) for q in dqs]
    weights = rng.uniform(0.1, 1.0, 5)
    base = dq_blend(weights, warps, scales)
    for factor in (1e-6, 0.37, 250.0):
        rescaled = dq_blend(factor * weights, warps, scales)
        assert rescaled.scale == pytest.approx(base.scale)
        np.testing.assert_allclose(rescaled.dq.as_array(), base.dq.as_array(), atol=1e-12)


def test_blend_rows_uses_first_weighted_reference_for_wide_rotations() -> None:
    """При разбросе углов до π и нулевых первых весах строки совпадают с dq_blend."""
    rng = np.random.default_rng(9)
    _, _, scales, dqs = _random_warps(rng, 8, max_angle=math.pi)
    weights = rng.uniform(0.0, 1.0, (6, 8))
    weights[:, :2] = 0.0
    weights[1, 7] = 50.0
    rows = algebra.blend_rows(weights, dqs)
    for row, w in zip(rows, weights):
        expected = dq_blend(w, [DualQuat2.from_array(q) for q in dqs], scales)
        np.testing.assert_allclose(row, expected.dq.as_array(), atol=1e-12)
