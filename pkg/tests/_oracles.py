"""Independent reference computations used as test oracles.

None of these call into the package's numerical routines; they are written
the slow, obvious way so that agreement is meaningful.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.spatial.transform import Rotation

from runway_integrity.geometry import CameraIntrinsics, Pose


def brute_force_soft_argmax(h: np.ndarray) -> tuple[float, float]:
    """Double-sum expectation of the normalized grid coordinates in long double."""
    h = np.asarray(h, dtype=np.longdouble)
    rows, cols = h.shape
    w = np.exp(h - h.max())
    total = np.longdouble(0)
    sx = np.longdouble(0)
    sy = np.longdouble(0)
    for i in range(rows):
        for j in range(cols):
            total += w[i, j]
            sx += w[i, j] * np.longdouble(j) / np.longdouble(cols - 1)
            sy += w[i, j] * np.longdouble(i) / np.longdouble(rows - 1)
    return float(sx / total), float(sy / total)


def brute_force_softmax(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=np.longdouble)
    w = np.exp(h - h.max())
    return (w / w.sum()).astype(float)


def homogeneous_projection(xi, pose: Pose, cam: CameraIntrinsics) -> np.ndarray:
    """K [R^T | -R^T p] applied to the homogeneous world point."""
    K = np.array([[cam.fx, 0.0, cam.cx], [0.0, cam.fy, cam.cy], [0.0, 0.0, 1.0]])
    Rt = pose.rotation.T
    P = K @ np.hstack([Rt, (-Rt @ pose.position)[:, None]])
    x = P @ np.append(np.asarray(xi, dtype=float), 1.0)
    return x[:2] / x[2]


def finite_difference_jacobian(xi, pose: Pose, cam: CameraIntrinsics, h: float = 1e-6) -> np.ndarray:
    """Central differences of the homogeneous projection over the right-perturbed pose."""
    J = np.zeros((2, 6))
    for k in range(6):
        d = np.zeros(6)
        d[k] = h
        plus = Pose(pose.position + d[:3], pose.rotation @ Rotation.from_rotvec(d[3:]).as_matrix())
        minus = Pose(pose.position - d[:3], pose.rotation @ Rotation.from_rotvec(-d[3:]).as_matrix())
        J[:, k] = (homogeneous_projection(xi, plus, cam) - homogeneous_projection(xi, minus, cam)) / (2 * h)
    return J


def random_valid_configuration(rng: np.random.Generator):
    """A camera on a plausible approach looking at a random point on a runway."""
    glide = math.radians(rng.uniform(1.0, 10.0))
    dist = rng.uniform(300.0, 6000.0)
    pos = np.array([-dist * math.cos(glide), rng.uniform(-100, 100), dist * math.sin(glide)])
    target = np.array([rng.uniform(0, 3000), rng.uniform(-30, 30), 0.0])
    fwd = target - pos
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, [0.0, 0.0, 1.0])
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    R = np.column_stack([right, down, fwd])
    R = R @ Rotation.from_rotvec(rng.uniform(-0.08, 0.08, 3)).as_matrix()
    pose = Pose(pos, R)
    xi = np.array([rng.uniform(0, 3000), rng.uniform(-30, 30), rng.uniform(0, 5)])
    return xi, pose


def golden_minimize(f, lo: float, hi: float) -> float:
    res = minimize_scalar(f, bracket=(lo, hi), method="golden", tol=1e-12)
    return float(res.x)


def stationary_point(f, lo: float, hi: float) -> float:
    """Root of a central-difference derivative, bracketed by brentq; resolves far below sqrt(eps)."""

    def slope(s):
        h = 1e-5 * s
        return (f(s + h) - f(s - h)) / (2 * h)

    return float(brentq(slope, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))
