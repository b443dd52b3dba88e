"""Residual-based integrity check of a keypoint prediction set.

After a weighted pose fit, the whitened innovation ``(y_reproj - mu) / sigma``
is projected onto the orthogonal complement of the whitened measurement
Jacobian. Its squared norm is chi-squared with ``2K - 6`` degrees of freedom
when the keypoint errors follow their predicted Gaussians, so an unusually
large value flags predictions that no pose can reconcile with the known
world geometry.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, DomainError
from .geometry import Pose, projection_jacobians, project_points
from .numerics import chi2_pdf, chi2_sf
from .pnp import PnpProblem, PnpSolution, SolverOptions, solve_weighted_pnp

N_POSE_PARAMS = 6


class Decision(str, enum.Enum):
    ACCEPT = "ACCEPT"
    REJECT = "REJECT"


@dataclass(frozen=True)
class IntegrityConfig:
    """Decision rule for :func:`check_rejection`.

    ``cdf_test`` rejects when the upper-tail probability of the statistic
    falls below ``alpha``. ``paper_literal`` evaluates the chi-squared
    density at the statistic and rejects when it exceeds ``tau``.
    ``whitening`` picks whether residuals are whitened before (``pre``) or
    after (``post``) the projection; the two agree only for uniform sigma.
    """

    alpha: float = 1e-3
    mode: Literal["cdf_test", "paper_literal"] = "cdf_test"
    tau: float = 0.5
    whitening: Literal["pre", "post"] = "pre"
    solver: SolverOptions = SolverOptions()

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError("alpha must lie in (0, 1)")
        if self.mode not in ("cdf_test", "paper_literal"):
            raise DomainError(f"unknown mode {self.mode!r}")
        if self.whitening not in ("pre", "post"):
            raise DomainError(f"unknown whitening order {self.whitening!r}")
        if not math.isfinite(self.tau):
            raise DomainError("tau must be finite")


@dataclass(frozen=True, eq=False)
class IntegrityResult:
    stat: float
    dof: int
    p_value: float
    decision: Decision
    pose: PnpSolution
    residuals: np.ndarray  # (K, 2) whitened residuals after projection
    rank: int = N_POSE_PARAMS
    density: float = math.nan
    condition_flag: bool = False
    solver_failed: bool = False

    @property
    def accepted(self) -> bool:
        return self.decision is Decision.ACCEPT


def _rank_revealing_qr(H: np.ndarray):
    Q, Rq, _ = scipy.linalg.qr(H, mode="economic", pivoting=True)
    diag = np.abs(np.diag(Rq))
    norm = np.linalg.norm(H, 2) if H.size else 0.0
    rank = int(np.sum(diag > 1e-10 * norm)) if norm > 0 else 0
    return Q[:, :rank], rank


def residual_projector(H_w, return_rank: bool = False):
    """Orthogonal projector ``I - H H^+`` onto the left null space of ``H_w``.

    The range of ``H_w`` is taken from a column-pivoted QR factorization;
    columns whose pivot is below ``1e-10 * ||H_w||`` are treated as rank
    deficient and the projector keeps the corresponding extra dimensions.
    """
    H = np.asarray(H_w, dtype=float)
    if H.ndim != 2 or not np.all(np.isfinite(H)):
        raise DomainError("H_w must be a finite 2-D matrix")
    Q, rank = _rank_revealing_qr(H)
    S = np.eye(H.shape[0]) - Q @ Q.T
    return (S, rank) if return_rank else S


def measurement_dof(n_keypoints: int) -> int:
    dof = 2 * n_keypoints - N_POSE_PARAMS
    if dof < 1:
        raise ConfigurationError(
            f"integrity test needs at least 4 keypoints (got {n_keypoints}, dof {dof})"
        )
    return dof


def residual_statistic(problem: PnpProblem, pose: Pose, whitening: str = "pre"):
    """Projected residual statistic at a given pose.

    Returns ``(stat, residuals (K, 2), rank)``.
    """
    preds = problem.predictions
    y_reproj = project_points(problem.world_points, pose, problem.camera)
    H = projection_jacobians(problem.world_points, pose, problem.camera)
    sigma = preds.sigma
    if whitening == "pre":
        H_w = (H / sigma[:, :, None]).reshape(-1, N_POSE_PARAMS)
        delta = ((y_reproj - preds.mu) / sigma).ravel()
        S, rank = residual_projector(H_w, return_rank=True)
        r_w = S @ delta
    else:
        S, rank = residual_projector(H.reshape(-1, N_POSE_PARAMS), return_rank=True)
        r = S @ (y_reproj - preds.mu).ravel()
        r_w = r / sigma.ravel()
    return float(r_w @ r_w), r_w.reshape(-1, 2), rank


def check_rejection(
    problem: PnpProblem, init: Pose, cfg: IntegrityConfig | None = None
) -> IntegrityResult:
    """Fit the pose, then accept or reject the prediction set as a whole.

    A solver that fails to converge (or reports near-singular normal
    equations) forces ``REJECT``.

    Raises:
        ConfigurationError: fewer than 4 keypoints.
    """
    cfg = cfg or IntegrityConfig()
    measurement_dof(problem.n_keypoints)
    sol = solve_weighted_pnp(problem, init, cfg.solver)
    stat, residuals, rank = residual_statistic(problem, sol.pose, cfg.whitening)
    rank_deficient = rank < N_POSE_PARAMS
    dof_eff = 2 * problem.n_keypoints - rank

    p_value = chi2_sf(dof_eff, stat)
    density = chi2_pdf(dof_eff, stat)
    if cfg.mode == "cdf_test":
        reject = p_value < cfg.alpha
    else:
        reject = density > cfg.tau

    solver_failed = not sol.converged
    if solver_failed:
        reject = True
    return IntegrityResult(
        stat=stat,
        dof=dof_eff,
        p_value=p_value,
        decision=Decision.REJECT if reject else Decision.ACCEPT,
        pose=sol,
        residuals=residuals,
        rank=rank,
        density=density,
        condition_flag=rank_deficient or sol.condition_flag,
        solver_failed=solver_failed,
    )
