"""Uncertainty-weighted pose from N points by Levenberg-Marquardt.

The cost is ``sum_k || (project(xi_k, pose) - mu_k) / sigma_k ||^2``: each
pixel residual is divided by its predicted standard deviation, so the same
whitened residual feeds both the solver and the integrity test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, ConfigurationError, DomainError
from .geometry import (
    CameraIntrinsics,
    Pose,
    _project_and_jacobian,
    look_at_rotation,
    orthonormalize,
    so3_exp,
)
from .uncertainty import PredictionSet

_ROUNDOFF = 64 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class PnpProblem:
    world_points: np.ndarray
    predictions: PredictionSet
    camera: CameraIntrinsics

    def __post_init__(self):
        pts = np.array(self.world_points, dtype=float).reshape(-1, 3)
        if pts.shape[0] != len(self.predictions):
            raise ConfigurationError(
                f"{pts.shape[0]} world points but {len(self.predictions)} predictions"
            )
        if pts.shape[0] < 3:
            raise ConfigurationError("pose estimation needs at least 3 keypoints")
        if not np.all(np.isfinite(pts)):
            raise DomainError("world points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "world_points", pts)

    @property
    def n_keypoints(self) -> int:
        return self.world_points.shape[0]


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    gtol: float = 1e-8
    max_iterations: int = 100
    lambda0: float = 1e-3
    lambda_up: float = 10.0
    lambda_down: float = 10.0
    lambda_max: float = 1e16
    reorthonormalize_every: int = 20
    # condition number of the diagonally scaled normal matrix above which
    # the pose is considered unidentifiable
    max_condition: float = 1e12


@dataclass(frozen=True, eq=False)
class PnpSolution:
    pose: Pose
    cost: float
    iterations: int
    converged: bool
    condition_flag: bool
    gradient_norm: float = math.nan
    condition_number: float = math.nan
    rejected_steps: int = 0
    message: str = ""


def whitened_residuals(problem: PnpProblem, position, rotation):
    """Whitened residual vector (2K,) and Jacobian (2K, 6) at a pose."""
    y, J = _project_and_jacobian(problem.world_points, position, rotation, problem.camera)
    inv_sigma = 1.0 / problem.predictions.sigma
    r = ((y - problem.predictions.mu) * inv_sigma).ravel()
    Jw = (J * inv_sigma[:, :, None]).reshape(-1, 6)
    return r, Jw


def _scaled_condition(A: np.ndarray) -> float:
    d = np.sqrt(np.diag(A))
    if np.any(d == 0):
        return math.inf
    s = np.linalg.svd(A / np.outer(d, d), compute_uv=False)
    return math.inf if s[-1] <= 0 else float(s[0] / s[-1])


def solve_weighted_pnp(
    problem: PnpProblem, init: Pose, opts: SolverOptions | None = None
) -> PnpSolution:
    """Minimize the sigma-weighted reprojection error starting from ``init``.

    Levenberg-Marquardt with Marquardt scaling ``(A + lam * diag(A)) dx = -g``.
    Steps that move a point behind the camera or do not lower the cost are
    rejected and the damping is increased. Once the cost change falls below
    its own rounding error a step is instead accepted if it lowers the
    gradient norm; this lets flat directions (along-track range at long
    distance) finish converging. The run is declared converged
    when the gradient infinity-norm drops below ``gtol``, or when both the
    relative cost change and the step norm of an accepted step are below
    ``tol``. A scaled normal matrix with condition number above
    ``max_condition`` sets ``condition_flag`` and the solution is reported
    as not converged, since the minimizer is then not unique.
    """
    opts = opts or SolverOptions()
    p = np.array(init.position, dtype=float)
    R = np.array(init.rotation, dtype=float)
    try:
        r, J = whitened_residuals(problem, p, R)
    except BehindCameraError:
        raise BehindCameraError("initial pose places a keypoint behind the camera") from None

    cost = float(r @ r)
    g = J.T @ r
    # magnitude of whitened pixel coordinates, for the cost's rounding error
    pixel_scale = (2.0 * np.abs(problem.predictions.mu) / problem.predictions.sigma).ravel()
    lam = opts.lambda0
    converged = False
    message = "maximum iterations reached"
    rejected = 0
    accepted = 0
    it = 0

    while it < opts.max_iterations:
        if not np.isfinite(cost):
            message = "non-finite cost"
            break
        if np.max(np.abs(g)) < opts.gtol or cost == 0.0:
            converged = True
            message = "gradient below tolerance"
            break
        it += 1
        A = J.T @ J
        diag = np.maximum(np.diag(A), 1e-300)
        try:
            step = np.linalg.solve(A + lam * np.diag(diag), -g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(A + lam * np.diag(diag), -g, rcond=None)[0]

        p_new = p + step[:3]
        R_new = R @ so3_exp(step[3:])
        try:
            r_new, J_new = whitened_residuals(problem, p_new, R_new)
            cost_new = float(r_new @ r_new)
        except BehindCameraError:
            cost_new = math.inf

        g_new = None
        if cost_new < cost:
            accept = True
        elif cost_new - cost <= _ROUNDOFF * (cost + float(np.abs(r) @ pixel_scale)):
            # cost change is below floating-point resolution: judge by the gradient
            g_new = J_new.T @ r_new
            accept = np.max(np.abs(g_new)) < np.max(np.abs(g))
        else:
            accept = False

        if accept:
            rel = abs(cost - cost_new) / cost
            p, R, r, J, cost = p_new, R_new, r_new, J_new, cost_new
            g = J.T @ r if g_new is None else g_new
            lam = max(lam / opts.lambda_down, 1e-15)
            accepted += 1
            if accepted % opts.reorthonormalize_every == 0:
                R = orthonormalize(R)
            if rel < opts.tol and float(np.linalg.norm(step)) < opts.tol:
                converged = True
                message = "relative cost change and step below tolerance"
                break
        else:
            rejected += 1
            lam *= opts.lambda_up
            if lam > opts.lambda_max:
                converged = bool(np.max(np.abs(g)) < opts.gtol)
                message = "damping exceeded maximum"
                break

    cond = _scaled_condition(J.T @ J)
    condition_flag = not cond <= opts.max_condition
    if condition_flag:
        converged = False
        message = "normal equations near-singular: " + message
    R = orthonormalize(R)
    return PnpSolution(
        pose=Pose(p, R),
        cost=cost,
        iterations=it,
        converged=converged,
        condition_flag=condition_flag,
        gradient_norm=float(np.max(np.abs(g))),
        condition_number=cond,
        rejected_steps=rejected,
        message=message,
    )


def initial_pose_from_prior(glide_deg: float, distance: float, lateral_offset: float = 0.0) -> Pose:
    """Camera on the extended centerline aimed at the near-threshold center.

    The camera sits at slant range ``distance`` (m) from the near-threshold
    center on a glide path of ``glide_deg`` degrees, displaced
    ``lateral_offset`` m along world y (left positive), with zero roll.
    """
    if not 0.5 < glide_deg < 15.0:
        raise DomainError("glide angle must lie in (0.5, 15) degrees")
    if not distance > 0:
        raise DomainError("distance must be positive")
    if not math.isfinite(lateral_offset):
        raise DomainError("lateral offset must be finite")
    g = math.radians(glide_deg)
    position = np.array([-distance * math.cos(g), lateral_offset, distance * math.sin(g)])
    return Pose(position, look_at_rotation(position, np.zeros(3)))
