"""Frames, pinhole projection and pose Jacobians.

World frame: runway-fixed, origin at the near-threshold center, x along the
centerline toward the far end, y to the left, z up. Camera frame: x right,
y down, z forward (boresight). A :class:`Pose` stores the camera center and
the camera-to-world rotation, so a world point maps into the camera as
``R.T @ (xi - p)``.

Pose perturbations are six-vectors ``[dp_x, dp_y, dp_z, dth_x, dth_y, dth_z]``
applied as ``p + dp`` and ``R @ expm(skew(dth))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import BehindCameraError, DomainError

MIN_DEPTH = 1e-6


class PixelPoint(NamedTuple):
    u: float
    v: float


@dataclass(frozen=True)
class CameraIntrinsics:
    """Distortion-free pinhole camera; all values in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise DomainError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise DomainError("image size must be at least 1x1")

    @classmethod
    def default(cls) -> "CameraIntrinsics":
        return cls(fx=1000.0, fy=1000.0, cx=112.0, cy=112.0, width=224, height=224)


@dataclass(frozen=True, eq=False)
class Pose:
    """Camera center ``position`` (m, world) and camera-to-world ``rotation``."""

    position: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        p = np.array(self.position, dtype=float).reshape(3)
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(p)) or not np.all(np.isfinite(R)):
            raise DomainError("pose contains non-finite values")
        if np.linalg.norm(R.T @ R - np.eye(3)) > 1e-9 or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise DomainError("rotation is not a proper orthonormal matrix")
        p.setflags(write=False)
        R.setflags(write=False)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "rotation", R)

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.position, other.position) and np.array_equal(
            self.rotation, other.rotation
        )

    def perturbed(self, delta) -> "Pose":
        """Return ``pose (+) delta`` for a six-vector increment."""
        delta = np.asarray(delta, dtype=float)
        return Pose(self.position + delta[:3], self.rotation @ so3_exp(delta[3:]))

    def to_camera(self, points) -> np.ndarray:
        """World points (N, 3) expressed in the camera frame."""
        return (np.asarray(points, dtype=float) - self.position) @ self.rotation


def skew(w) -> np.ndarray:
    wx, wy, wz = w
    return np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])


def so3_exp(w) -> np.ndarray:
    """Rodrigues' formula for the rotation matrix ``expm(skew(w))``."""
    w = np.asarray(w, dtype=float)
    theta = float(np.sqrt(w @ w))
    K = skew(w)
    if theta < 1e-8:
        # second-order Taylor; exact to double precision at this size
        return np.eye(3) + K + 0.5 * (K @ K)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def so3_log(R) -> np.ndarray:
    """Axis-angle vector of a rotation matrix (angle in [0, pi])."""
    R = np.asarray(R, dtype=float)
    cos_t = np.clip(0.5 * (np.trace(R) - 1.0), -1.0, 1.0)
    theta = float(np.arccos(cos_t))
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-6:
        return 0.5 * v
    if np.pi - theta < 1e-6:
        # axis from the symmetric part near a half-turn
        B = 0.5 * (R + np.eye(3))
        axis = B[np.argmax(np.diag(B))]
        axis = axis / np.linalg.norm(axis)
        if axis @ v < 0:
            axis = -axis
        return theta * axis
    return theta / (2.0 * np.sin(theta)) * v


def rotation_angle(R_a, R_b) -> float:
    """Geodesic angle (rad) between two rotations, accurate for tiny angles."""
    return float(np.linalg.norm(so3_log(np.asarray(R_a).T @ np.asarray(R_b))))


def orthonormalize(R) -> np.ndarray:
    """Nearest rotation matrix (polar decomposition via SVD)."""
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] *= -1
        Q = U @ Vt
    return Q


def _camera_points(points: np.ndarray, position: np.ndarray, rotation: np.ndarray) -> np.ndarray:
    q = (points - position) @ rotation
    if np.any(q[:, 2] <= MIN_DEPTH):
        raise BehindCameraError("world point at or behind the camera plane")
    return q


def project_points(points, pose: Pose, cam: CameraIntrinsics) -> np.ndarray:
    """Project world points of shape (N, 3) to pixels of shape (N, 2).

    Results are not clipped to the image.

    Raises:
        BehindCameraError: any camera-frame depth is <= 1e-6 m.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    q = _camera_points(pts, pose.position, pose.rotation)
    return _pinhole(q, cam)


def _pinhole(q: np.ndarray, cam: CameraIntrinsics) -> np.ndarray:
    inv_z = 1.0 / q[:, 2]
    return np.column_stack((cam.fx * q[:, 0] * inv_z + cam.cx, cam.fy * q[:, 1] * inv_z + cam.cy))


def project(xi, pose: Pose, cam: CameraIntrinsics) -> PixelPoint:
    """Project a single world point."""
    u, v = project_points(np.reshape(xi, (1, 3)), pose, cam)[0]
    return PixelPoint(float(u), float(v))


def _pinhole_jacobian(q: np.ndarray, cam: CameraIntrinsics) -> np.ndarray:
    """d(u, v)/d(pose) for camera-frame points; returns (N, 2, 6) before the -R.T factor.

    The translation block is returned as d(u,v)/dq so the caller can apply -R.T;
    the rotation block is already d(u,v)/dth since dq/dth = skew(q).
    """
    x, y, z = q[:, 0], q[:, 1], q[:, 2]
    iz = 1.0 / z
    xz, yz = x * iz, y * iz
    fx, fy = cam.fx, cam.fy
    n = q.shape[0]
    J = np.empty((n, 2, 6))
    # translation: d(u,v)/dq, post-multiplied by -R.T below
    J[:, 0, 0] = fx * iz
    J[:, 0, 1] = 0.0
    J[:, 0, 2] = -fx * xz * iz
    J[:, 1, 0] = 0.0
    J[:, 1, 1] = fy * iz
    J[:, 1, 2] = -fy * yz * iz
    # rotation: d(u,v)/dq @ skew(q)
    J[:, 0, 3] = fx * xz * yz
    J[:, 0, 4] = -fx * (1.0 + xz * xz)
    J[:, 0, 5] = fx * yz
    J[:, 1, 3] = fy * (1.0 + yz * yz)
    J[:, 1, 4] = -fy * xz * yz
    J[:, 1, 5] = -fy * xz
    return J


def projection_jacobians(points, pose: Pose, cam: CameraIntrinsics) -> np.ndarray:
    """Analytic Jacobians of the projections of N points, shape (N, 2, 6)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return _project_and_jacobian(pts, pose.position, pose.rotation, cam)[1]


def _project_and_jacobian(points, position, rotation, cam):
    q = _camera_points(points, position, rotation)
    J = _pinhole_jacobian(q, cam)
    J[:, :, :3] = -J[:, :, :3] @ rotation.T
    return _pinhole(q, cam), J


def projection_jacobian(xi, pose: Pose, cam: CameraIntrinsics) -> np.ndarray:
    """2x6 Jacobian of ``project(xi, pose, cam)`` w.r.t. the pose increment."""
    return projection_jacobians(np.reshape(xi, (1, 3)), pose, cam)[0]


def runway_corners(length: float, width: float) -> np.ndarray:
    """Corner points (4, 3) ordered near-left, near-right, far-left, far-right."""
    if not (length > 0 and width > 0):
        raise DomainError("runway length and width must be positive")
    h = 0.5 * width
    return np.array(
        [[0.0, h, 0.0], [0.0, -h, 0.0], [length, h, 0.0], [length, -h, 0.0]], dtype=float
    )


def look_at_rotation(position, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world rotation with boresight toward ``target`` and zero roll."""
    forward = np.asarray(target, dtype=float) - np.asarray(position, dtype=float)
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, up)
    nr = np.linalg.norm(right)
    if nr < 1e-12:
        raise DomainError("boresight parallel to the up vector")
    right /= nr
    down = np.cross(forward, right)
    return np.column_stack((right, down, forward))
