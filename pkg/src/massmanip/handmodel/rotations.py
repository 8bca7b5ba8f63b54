"""6D rotation representation and Euler-angle rotation assembly.

The 6D representation stores the first two columns of a rotation matrix;
Gram-Schmidt plus a cross product recovers the full matrix. Both a plain
numpy path (batched over leading axes) and an autodiff Tensor path are
provided; the fitting optimizer differentiates through the latter.
"""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateInputError
from ..numerics.tensor import Tensor, as_tensor, concat, stack

_EPS = 1e-12


def rot6d_to_matrix(r6: np.ndarray) -> np.ndarray:
    """(..., 6) -> (..., 3, 3) with orthonormal columns, det +1.

    Raises DegenerateInputError when the two input 3-vectors are parallel
    within 1e-6 rad (or either is near zero).
    """
    r6 = np.asarray(r6, dtype=np.float64)
    a, b = r6[..., :3], r6[..., 3:]
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    if np.any(na < _EPS) or np.any(nb < _EPS):
        raise DegenerateInputError("rot6d: zero-length column")
    sin_angle = np.linalg.norm(np.cross(a, b), axis=-1) / (na * nb)
    if np.any(sin_angle < 1e-6):
        raise DegenerateInputError("rot6d: columns parallel within 1e-6 rad")
    x = a / na[..., None]
    b_proj = b - np.sum(x * b, axis=-1, keepdims=True) * x
    y = b_proj / np.linalg.norm(b_proj, axis=-1, keepdims=True)
    z = np.cross(x, y)
    return np.stack([x, y, z], axis=-1)


def matrix_to_rot6d(mat: np.ndarray) -> np.ndarray:
    """(..., 3, 3) -> (..., 6): the first two columns, column-major."""
    mat = np.asarray(mat)
    return np.concatenate([mat[..., :, 0], mat[..., :, 1]], axis=-1)


def geodesic_angle(r1: np.ndarray, r2: np.ndarray) -> np.ndarray:
    """Angle (rad) between two rotation matrices (batched)."""
    tr = np.einsum("...ij,...ij->...", r1, r2)
    return np.arccos(np.clip((tr - 1.0) * 0.5, -1.0, 1.0))


def _cross_t(a: Tensor, b: Tensor) -> Tensor:
    """Cross product over the last axis (..., 3), autodiff path."""
    ax, ay, az = a[..., 0:1], a[..., 1:2], a[..., 2:3]
    bx, by, bz = b[..., 0:1], b[..., 1:2], b[..., 2:3]
    return concat([ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx], axis=-1)


def _normalize_t(v: Tensor, eps: float = 1e-9) -> Tensor:
    n = ((v * v).sum(axis=-1, keepdims=True) + eps).sqrt()
    return v / n


def rot6d_to_matrix_t(r6) -> Tensor:
    """Tensor version of rot6d_to_matrix: (..., 6) -> (..., 3, 3).

    No degeneracy guard (a small epsilon regularizes the norms instead);
    optimization steps must keep the columns independent themselves.
    """
    r6 = as_tensor(r6)
    a, b = r6[..., :3], r6[..., 3:]
    x = _normalize_t(a)
    y = _normalize_t(b - (x * b).sum(axis=-1, keepdims=True) * x)
    z = _cross_t(x, y)
    return stack([x, y, z], axis=-1)


def euler_to_matrix_t(angles) -> Tensor:
    """Euler xyz angles (..., 3) -> rotation matrices (..., 3, 3): Rx @ Ry @ Rz."""
    angles = as_tensor(angles)
    ax, ay, az = angles[..., 0], angles[..., 1], angles[..., 2]
    cx, sx = ax.cos(), ax.sin()
    cy, sy = ay.cos(), ay.sin()
    cz, sz = az.cos(), az.sin()
    one = Tensor(np.ones(ax.shape, dtype=angles.dtype))
    zero = Tensor(np.zeros(ax.shape, dtype=angles.dtype))
    rx = stack([stack([one, zero, zero], axis=-1),
                stack([zero, cx, -sx], axis=-1),
                stack([zero, sx, cx], axis=-1)], axis=-2)
    ry = stack([stack([cy, zero, sy], axis=-1),
                stack([zero, one, zero], axis=-1),
                stack([-sy, zero, cy], axis=-1)], axis=-2)
    rz = stack([stack([cz, -sz, zero], axis=-1),
                stack([sz, cz, zero], axis=-1),
                stack([zero, zero, one], axis=-1)], axis=-2)
    return rx @ ry @ rz


def euler_to_matrix(angles: np.ndarray) -> np.ndarray:
    """Plain numpy twin of euler_to_matrix_t."""
    from ..numerics.tensor import no_grad
    with no_grad():
        return euler_to_matrix_t(np.asarray(angles)).data
