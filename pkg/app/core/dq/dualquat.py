"""Дуальный кватернион на плоскости и функция деформации узла ``x -> s (R x + t)``."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from app.core.dq import algebra


class InvalidWarpError(ValueError):
    """Функция деформации с неположительным масштабом или вырожденной вещественной частью."""


class NoSupportError(ValueError):
    """Смешивание без единого положительного веса."""


@dataclass(frozen=True)
class DualQuat2:
    """Reduced dual quaternion: ``real = (cos θ/2, sin θ/2)``, ``dual`` encodes the translation."""

    real: Tuple[float, float] = (1.0, 0.0)
    dual: Tuple[float, float] = (0.0, 0.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.real[0], self.real[1], self.dual[0], self.dual[1]], dtype=np.float64)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "DualQuat2":
        c, s, d1, d2 = (float(v) for v in values)
        return cls(real=(c, s), dual=(d1, d2))

    def normalized(self) -> "DualQuat2":
        return dq_normalize(self)

    def apply(self, point: Sequence[float]) -> np.ndarray:
        return algebra.apply(self.as_array(), np.asarray(point, dtype=np.float64))

    def __mul__(self, other: "DualQuat2") -> "DualQuat2":
        return dq_mul(self, other)

    def __neg__(self) -> "DualQuat2":
        return DualQuat2.from_array(-self.as_array())


@dataclass(frozen=True)
class WarpFunction:
    """Масштаб и дуальный кватернион узла (``W = s q``)."""

    scale: float = 1.0
    dq: DualQuat2 = field(default_factory=DualQuat2)

    def __post_init__(self) -> None:
        if not math.isfinite(self.scale):
            raise InvalidWarpError(f"Масштаб должен быть конечным, получено {self.scale}")

    @classmethod
    def identity(cls) -> "WarpFunction":
        return cls()

    @classmethod
    def from_arrays(cls, scale: float, q: Sequence[float]) -> "WarpFunction":
        return cls(scale=float(scale), dq=DualQuat2.from_array(q))

    @property
    def is_valid(self) -> bool:
        return self.scale > 0.0 and algebra.real_norm(self.dq.as_array()) > 0.0

    def __call__(self, point: Sequence[float]) -> np.ndarray:
        return warp_apply(self, point)


def dq_from_rigid(angle: float, translation: Sequence[float]) -> DualQuat2:
    return DualQuat2.from_array(algebra.from_rigid(np.float64(angle), np.asarray(translation, dtype=np.float64)))


def trans2dq(translation: Sequence[float]) -> DualQuat2:
    """Pure translation: identity real part, dual part ``t / 2``."""

    return DualQuat2.from_array(algebra.from_translation(np.asarray(translation, dtype=np.float64)))


def dq_normalize(q: DualQuat2) -> DualQuat2:
    if algebra.real_norm(q.as_array()) == 0.0:
        raise InvalidWarpError("Нулевая вещественная часть дуального кватерниона")
    return DualQuat2.from_array(algebra.normalize(q.as_array()))


def dq_mul(a: DualQuat2, b: DualQuat2) -> DualQuat2:
    """``apply(dq_mul(a, b), x) == apply(a, apply(b, x))``."""

    return DualQuat2.from_array(algebra.mul(a.as_array(), b.as_array()))


def dq_inverse(q: DualQuat2) -> DualQuat2:
    return DualQuat2.from_array(algebra.conjugate(dq_normalize(q).as_array()))


def dq_to_rigid(q: DualQuat2) -> Tuple[float, np.ndarray]:
    values = dq_normalize(q).as_array()
    return float(algebra.angle(values)), algebra.translation(values)


def warp_apply(warp: WarpFunction, point: Sequence[float]) -> np.ndarray:
    return algebra.warp_apply(np.float64(warp.scale), warp.dq.as_array(), np.asarray(point, dtype=np.float64))


def warp_unapply(warp: WarpFunction, point: Sequence[float]) -> np.ndarray:
    if not warp.scale > 0.0:
        raise InvalidWarpError(f"Обратная деформация требует масштаба > 0, получено {warp.scale}")
    return algebra.warp_unapply(np.float64(warp.scale), warp.dq.as_array(), np.asarray(point, dtype=np.float64))


def warp_inverse(warp: WarpFunction) -> WarpFunction:
    """Inverse as a warp: ``y -> (1/s) (R^T y - s R^T t)``."""

    if not warp.scale > 0.0:
        raise InvalidWarpError(f"Обратная деформация требует масштаба > 0, получено {warp.scale}")
    inv_q = algebra.conjugate(dq_normalize(warp.dq).as_array())
    # conjugate encodes -R^T t; the dual part is linear in t, so scale it by s
    inv_q[2:] *= warp.scale
    return WarpFunction(scale=1.0 / warp.scale, dq=DualQuat2.from_array(inv_q))


def dq_blend(weights: Sequence[float], dqs: Sequence[DualQuat2], scales: Sequence[float]) -> WarpFunction:
    """Weighted scale mean plus normalized sum of hemispherized dual quaternions."""

    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or len(w) != len(dqs) or len(w) != len(scales):
        raise ValueError("weights, dqs и scales должны иметь одинаковую длину")
    if np.any(w < 0.0):
        raise ValueError("Веса смешивания должны быть неотрицательными")
    positive = np.flatnonzero(w > 0.0)
    if positive.size == 0:
        raise NoSupportError("Все веса смешивания равны нулю")
    stacked = np.stack([q.as_array() for q in dqs])
    reference = stacked[positive[0]]
    stacked = algebra.hemispherize(stacked, reference)
    total = w.sum()
    scale = float(np.dot(w, np.asarray(scales, dtype=np.float64)) / total)
    q = algebra.normalize(w @ stacked)
    return WarpFunction(scale=scale, dq=DualQuat2.from_array(q))


def warp_update(old: WarpFunction, delta: WarpFunction) -> WarpFunction:
    """New warp with ``new(x0) == delta(old(x0))`` for every ``x0``."""

    scale, q = algebra.warp_update(
        np.float64(old.scale), old.dq.as_array(), np.float64(delta.scale), delta.dq.as_array()
    )
    return WarpFunction(scale=float(scale), dq=DualQuat2.from_array(q))


def warp_identity() -> WarpFunction:
    return WarpFunction.identity()
