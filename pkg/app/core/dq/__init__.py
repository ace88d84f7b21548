"""Алгебра 2D дуальных кватернионов и функций деформации."""
from app.core.dq.dualquat import (
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

__all__ = [
    "DualQuat2",
    "InvalidWarpError",
    "NoSupportError",
    "WarpFunction",
    "dq_blend",
    "dq_from_rigid",
    "dq_inverse",
    "dq_mul",
    "dq_normalize",
    "dq_to_rigid",
    "trans2dq",
    "warp_apply",
    "warp_identity",
    "warp_inverse",
    "warp_unapply",
    "warp_update",
]
