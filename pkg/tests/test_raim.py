from __future__ import annotations

import numpy as np
import pytest

from runway_integrity.errors import ConfigurationError, DomainError
from runway_integrity.geometry import Pose, project_points, projection_jacobians, runway_corners
from runway_integrity.numerics import chi2_pdf, chi2_sf
from runway_integrity.pnp import PnpProblem, SolverOptions, initial_pose_from_prior, solve_weighted_pnp
from runway_integrity.raim import (
    Decision,
    IntegrityConfig,
    check_rejection,
    measurement_dof,
    residual_projector,
    residual_statistic,
)
from runway_integrity.uncertainty import PredictionSet

SIX_POINTS = np.vstack([runway_corners(3000, 45), [[1500, 22.5, 0], [1500, -22.5, 0]]])


def _noisy(camera, rng, world=SIX_POINTS, sigma=None, pose=None):
    pose = pose or initial_pose_from_prior(3.0, 2000.0)
    sigma = rng.uniform(0.5, 2.0, (len(world), 2)) if sigma is None else sigma
    err = rng.standard_normal((len(world), 2)) * sigma
    return PnpProblem(world, PredictionSet(project_points(world, pose, camera) + err, sigma), camera), pose


def _pinv_statistic(problem: PnpProblem, pose: Pose) -> float:
    """Whitened residual through numpy's SVD pseudo-inverse."""
    s = problem.predictions.sigma
    H = (projection_jacobians(problem.world_points, pose, problem.camera) / s[:, :, None]).reshape(-1, 6)
    d = ((project_points(problem.world_points, pose, problem.camera) - problem.predictions.mu) / s).ravel()
    r = d - H @ (np.linalg.pinv(H) @ d)
    return float(r @ r)


class TestProjector:
    def test_canonical(self):
        S = residual_projector(np.eye(8)[:, :6])
        assert np.allclose(S, np.diag([0, 0, 0, 0, 0, 0, 1, 1]), atol=1e-15)

    def test_identities_random(self, rng):
        for _ in range(20):
            H = rng.normal(size=(8, 6))
            S, rank = residual_projector(H, return_rank=True)
            assert rank == 6
            assert np.max(np.abs(S @ S - S)) <= 1e-9
            assert np.max(np.abs(S @ H)) <= 1e-9
            assert np.max(np.abs(S - S.T)) <= 1e-12
            assert np.trace(S) == pytest.approx(2.0, abs=1e-9)

    def test_rank_deficient(self, rng):
        H = rng.normal(size=(8, 6))
        H[:, 5] = H[:, 0] + 2 * H[:, 1]
        S, rank = residual_projector(H, return_rank=True)
        assert rank == 5
        assert np.trace(S) == pytest.approx(3.0, abs=1e-9)
        assert np.max(np.abs(S @ H)) <= 1e-9

    def test_zero_matrix(self):
        S, rank = residual_projector(np.zeros((8, 6)), return_rank=True)
        assert rank == 0 and np.array_equal(S, np.eye(8))

    def test_non_finite(self):
        H = np.eye(8)[:, :6]
        H[0, 0] = np.nan
        with pytest.raises(DomainError):
            residual_projector(H)


class TestDof:
    @pytest.mark.parametrize("k,dof", [(4, 2), (5, 4), (6, 6)])
    def test_bookkeeping(self, k, dof):
        assert measurement_dof(k) == dof

    def test_three_keypoints_rejected(self, camera, corners, true_pose):
        problem = PnpProblem(corners[:3], PredictionSet(project_points(corners[:3], true_pose, camera), 1.0),
                             camera)
        with pytest.raises(ConfigurationError):
            check_rejection(problem, true_pose)

    def test_result_dof(self, camera, rng):
        problem, truth = _noisy(camera, rng)
        assert check_rejection(problem, truth).dof == 6


class TestStatistic:
    def test_zero_noise(self, exact_problem, true_pose):
        res = check_rejection(exact_problem, true_pose, IntegrityConfig(alpha=0.999))
        assert res.stat <= 1e-12
        assert res.decision is Decision.ACCEPT
        assert res.accepted

    def test_matches_pseudo_inverse_oracle(self, camera, rng):
        for _ in range(20):
            problem, truth = _noisy(camera, rng)
            res = check_rejection(problem, truth)
            assert res.stat == pytest.approx(_pinv_statistic(problem, res.pose.pose), rel=1e-9)

    def test_equals_solver_cost_at_optimum(self, camera, rng):
        # at a stationary point the innovation already lies in the left null space
        problem, truth = _noisy(camera, rng)
        res = check_rejection(problem, truth)
        assert res.stat == pytest.approx(res.pose.cost, rel=1e-9)

    def test_p_value_and_density(self, camera, rng):
        problem, truth = _noisy(camera, rng)
        res = check_rejection(problem, truth)
        assert res.p_value == chi2_sf(res.dof, res.stat)
        assert res.density == chi2_pdf(res.dof, res.stat)
        assert res.residuals.shape == (6, 2)
        assert float(np.sum(res.residuals**2)) == pytest.approx(res.stat, rel=1e-12)

    def test_whitening_scale_invariance(self, camera, rng):
        truth = initial_pose_from_prior(3.0, 2000.0)
        y = project_points(SIX_POINTS, truth, camera)
        sigma = rng.uniform(0.5, 2.0, (6, 2))
        err = rng.standard_normal((6, 2)) * sigma
        c = 3.7
        pa = PnpProblem(SIX_POINTS, PredictionSet(y + err, sigma), camera)
        pb = PnpProblem(SIX_POINTS, PredictionSet(y + c * err, c * sigma), camera)
        # exact at a common linearization pose
        sa, _, _ = residual_statistic(pa, truth)
        sb, _, _ = residual_statistic(pb, truth)
        assert sb == pytest.approx(sa, rel=1e-8)
        # through the refit only up to the nonlinearity of the projection
        a, b = check_rejection(pa, truth), check_rejection(pb, truth)
        assert b.stat == pytest.approx(a.stat, rel=0.05)

    def test_pre_and_post_agree_for_uniform_sigma(self, camera, rng):
        problem, truth = _noisy(camera, rng, sigma=np.full((6, 2), 1.3))
        pose = solve_weighted_pnp(problem, truth).pose
        pre, _, _ = residual_statistic(problem, pose, "pre")
        post, _, _ = residual_statistic(problem, pose, "post")
        assert post == pytest.approx(pre, rel=1e-10)

    def test_pre_and_post_differ_for_mixed_sigma(self, camera, rng):
        sigma = np.ones((6, 2))
        sigma[2:4] = 5.0
        problem, truth = _noisy(camera, rng, sigma=sigma)
        pose = solve_weighted_pnp(problem, truth).pose
        pre, _, _ = residual_statistic(problem, pose, "pre")
        post, _, _ = residual_statistic(problem, pose, "post")
        assert abs(pre - post) > 1e-6 * pre


class TestDecision:
    def test_cdf_mode_threshold(self, camera, rng):
        problem, truth = _noisy(camera, rng)
        res = check_rejection(problem, truth)
        just_below = IntegrityConfig(alpha=min(res.p_value * 0.999, 0.999))
        just_above = IntegrityConfig(alpha=min(res.p_value * 1.001, 0.999))
        assert check_rejection(problem, truth, just_below).decision is Decision.ACCEPT
        assert check_rejection(problem, truth, just_above).decision is Decision.REJECT

    def test_paper_literal_compares_density(self, camera, rng):
        problem, truth = _noisy(camera, rng, world=runway_corners(3000, 45), sigma=np.ones((4, 2)))
        base = check_rejection(problem, truth)
        lit_lo = check_rejection(problem, truth, IntegrityConfig(mode="paper_literal", tau=base.density * 0.99))
        lit_hi = check_rejection(problem, truth, IntegrityConfig(mode="paper_literal", tau=base.density * 1.01))
        assert lit_lo.decision is Decision.REJECT
        assert lit_hi.decision is Decision.ACCEPT

    def test_solver_failure_forces_reject(self, exact_problem, true_pose):
        cfg = IntegrityConfig(alpha=1e-9, solver=SolverOptions(max_iterations=1))
        res = check_rejection(exact_problem, true_pose.perturbed([300.0, 60.0, 30.0, 0.02, 0.0, 0.01]), cfg)
        assert res.solver_failed and res.decision is Decision.REJECT

    def test_degenerate_geometry_rejects(self, camera, true_pose):
        world = np.array([[0.0, 0, 0], [500.0, 0, 0], [1500.0, 0, 0], [3000.0, 0, 0]])
        problem = PnpProblem(world, PredictionSet(project_points(world, true_pose, camera), 1.0), camera)
        res = check_rejection(problem, true_pose)
        assert res.condition_flag and res.decision is Decision.REJECT

    @pytest.mark.parametrize(
        "kwargs", [dict(alpha=0.0), dict(alpha=1.0), dict(mode="pdf"), dict(whitening="mid"), dict(tau=np.nan)]
    )
    def test_config_validation(self, kwargs):
        with pytest.raises(DomainError):
            IntegrityConfig(**kwargs)
