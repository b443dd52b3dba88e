"""Synthetic approach scenarios, fault injection and Monte Carlo harnesses.

Each trial draws its pixel noise from a Philox generator keyed by a
per-trial 64-bit seed derived from the master seed, so any trial can be
replayed on its own and trials can run in any order or in parallel.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, ScenarioInfeasibleError
from .geometry import (
    CameraIntrinsics,
    Pose,
    project_points,
    rotation_angle,
    runway_corners,
)
from .numerics import ChiSquared, chi2_cdf, chi2_quantile
from .pnp import PnpProblem, initial_pose_from_prior
from .raim import Decision, IntegrityConfig, IntegrityResult, check_rejection
from .uncertainty import PredictionSet

FaultKind = Literal[
    "far_threshold_shift", "near_threshold_shift", "single_keypoint_offset", "correlated_shift"
]
FAULT_KINDS = (
    "far_threshold_shift",
    "near_threshold_shift",
    "single_keypoint_offset",
    "correlated_shift",
)

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class ScenarioConfig:
    """Approach geometry; lengths in meters, angles in degrees, sigma in pixels.

    ``sigma_px`` is a scalar, one value per keypoint, or a (K, 2) array.
    """

    runway_length: float = 3000.0
    runway_width: float = 45.0
    glide_deg: float = 3.0
    distance: float = 2000.0
    lateral_offset: float = 0.0
    camera: CameraIntrinsics = field(default_factory=CameraIntrinsics.default)
    sigma_px: float | tuple = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.glide_deg >= 1.0:
            raise DomainError("glide angle must be at least 1 degree")
        if not self.distance > 0:
            raise DomainError("distance must be positive")
        if not (self.runway_length > 0 and self.runway_width > 0):
            raise DomainError("runway dimensions must be positive")
        s = np.asarray(self.sigma_px, dtype=float)
        if not (np.all(s > 0) and np.all(np.isfinite(s))):
            raise DomainError("sigma_px must be positive")

    def sigma_array(self, n_keypoints: int) -> np.ndarray:
        s = np.asarray(self.sigma_px, dtype=float)
        if s.ndim == 0:
            return np.full((n_keypoints, 2), float(s))
        if s.shape == (n_keypoints,):
            return np.repeat(s[:, None], 2, axis=1)
        if s.shape == (n_keypoints, 2):
            return s.copy()
        raise ConfigurationError(f"sigma_px shape {s.shape} does not fit {n_keypoints} keypoints")

    def prior_pose(self) -> Pose:
        return initial_pose_from_prior(self.glide_deg, self.distance, self.lateral_offset)


@dataclass(frozen=True, eq=False)
class Scenario:
    config: ScenarioConfig
    true_pose: Pose
    world_points: np.ndarray
    true_pixels: np.ndarray
    noise: np.ndarray
    predictions: PredictionSet

    def __iter__(self):
        # unpacks as (true pose, world points, true pixels, noisy predictions)
        return iter((self.true_pose, self.world_points, self.true_pixels, self.predictions))

    def problem(self, predictions: PredictionSet | None = None) -> PnpProblem:
        return PnpProblem(self.world_points, predictions or self.predictions, self.config.camera)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & _SEED_MASK))


def trial_seed(master_seed: int, index: int) -> int:
    """64-bit seed of trial ``index`` under ``master_seed``."""
    ss = np.random.SeedSequence([int(master_seed) & _SEED_MASK, int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def _check_in_image(pixels: np.ndarray, cam: CameraIntrinsics) -> None:
    u, v = pixels[:, 0], pixels[:, 1]
    if np.any(u < 0) or np.any(u > cam.width) or np.any(v < 0) or np.any(v > cam.height):
        raise ScenarioInfeasibleError("a runway corner projects outside the image")


def generate_scenario(cfg: ScenarioConfig) -> Scenario:
    """True pose, corners, exact pixels and noisy Gaussian predictions.

    The predicted sigma equals the sigma used to draw the noise, i.e. the
    predictions are calibrated by construction.

    Raises:
        ScenarioInfeasibleError: a corner is behind the camera or off-image.
    """
    pose = cfg.prior_pose()
    world = runway_corners(cfg.runway_length, cfg.runway_width)
    try:
        true_px = project_points(world, pose, cfg.camera)
    except DomainError as exc:
        raise ScenarioInfeasibleError(str(exc)) from exc
    _check_in_image(true_px, cfg.camera)
    sigma = cfg.sigma_array(world.shape[0])
    noise = make_rng(cfg.seed).standard_normal(true_px.shape) * sigma
    return Scenario(cfg, pose, world, true_px, noise, PredictionSet(true_px + noise, sigma))


@dataclass(frozen=True)
class FaultSpec:
    """A misprediction to inject into a scenario.

    Threshold shifts are geometric: ``magnitude`` meters along the
    centerline, applied to the affected corners before reprojection (far
    corners move toward the aircraft, near corners away from it). Offset
    kinds are in pixels along ``direction``.
    """

    kind: FaultKind
    magnitude: float
    affected: Optional[tuple[int, ...]] = None
    direction: tuple[float, float] = (1.0, 0.0)

    def __post_init__(self):
        if self.kind not in FAULT_KINDS:
            raise DomainError(f"unknown fault kind {self.kind!r}")
        if not self.magnitude >= 0:
            raise DomainError("fault magnitude must be nonnegative")
        if self.affected is not None:
            object.__setattr__(self, "affected", tuple(int(i) for i in self.affected))
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (2,) or not np.linalg.norm(d) > 0:
            raise DomainError("direction must be a nonzero 2-vector")

    def indices(self, n_keypoints: int) -> tuple[int, ...]:
        if self.affected is not None:
            idx = self.affected
        elif self.kind == "far_threshold_shift":
            idx = (2, 3)
        elif self.kind == "near_threshold_shift":
            idx = (0, 1)
        elif self.kind == "single_keypoint_offset":
            idx = (0,)
        else:
            idx = tuple(range(n_keypoints))
        if not idx or any(i < 0 or i >= n_keypoints for i in idx) or len(set(idx)) != len(idx):
            raise ConfigurationError(f"fault indices {idx} invalid for {n_keypoints} keypoints")
        return idx

    def describe(self) -> str:
        return f"{self.kind}:{self.magnitude:g}"


def inject_fault(scenario: Scenario, fault: FaultSpec | None) -> PredictionSet:
    """Predictions of ``scenario`` with ``fault`` applied.

    The scenario's own noise draw is added back on top of the faulted
    clean pixels, so nominal and faulted predictions share their noise.
    Sigma is left unchanged.
    """
    if fault is None or fault.magnitude == 0.0:
        return scenario.predictions
    k = scenario.world_points.shape[0]
    idx = list(fault.indices(k))
    clean = scenario.true_pixels.copy()
    if fault.kind in ("far_threshold_shift", "near_threshold_shift"):
        moved = scenario.world_points[idx].copy()
        sign = -1.0 if fault.kind == "far_threshold_shift" else 1.0
        moved[:, 0] += sign * fault.magnitude
        clean[idx] = project_points(moved, scenario.true_pose, scenario.config.camera)
    else:
        d = np.asarray(fault.direction, dtype=float)
        clean[idx] += fault.magnitude * d / np.linalg.norm(d)
    return PredictionSet(clean + scenario.noise, scenario.predictions.sigma)


@dataclass(frozen=True, eq=False)
class TrialRecord:
    index: int
    seed: int
    true_pose: Optional[Pose]
    predictions: Optional[PredictionSet]
    fault: Optional[FaultSpec]
    result: Optional[IntegrityResult]
    pos_err_m: float = math.nan
    rot_err_rad: float = math.nan
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.result is not None


def run_trial(
    cfg: ScenarioConfig,
    fault: FaultSpec | None = None,
    integrity: IntegrityConfig | None = None,
    index: int = 0,
) -> TrialRecord:
    """One scenario draw, optional fault, one integrity check."""
    integrity = integrity or IntegrityConfig()
    try:
        sc = generate_scenario(cfg)
    except ScenarioInfeasibleError as exc:
        return TrialRecord(index, cfg.seed, None, None, fault, None, error=str(exc))
    preds = inject_fault(sc, fault)
    res = check_rejection(sc.problem(preds), cfg.prior_pose(), integrity)
    est = res.pose.pose
    return TrialRecord(
        index=index,
        seed=cfg.seed,
        true_pose=sc.true_pose,
        predictions=preds,
        fault=fault,
        result=res,
        pos_err_m=float(np.linalg.norm(est.position - sc.true_pose.position)),
        rot_err_rad=rotation_angle(est.rotation, sc.true_pose.rotation),
    )


def _run_chunk(args):
    cfg, fault, integrity, indices = args
    return [
        run_trial(replace(cfg, seed=trial_seed(cfg.seed, i)), fault, integrity, index=i)
        for i in indices
    ]


def ks_distance(sample, dof: int) -> float:
    """Kolmogorov-Smirnov distance between a sample and the chi-squared CDF."""
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    if n == 0:
        raise DomainError("empty sample")
    dist = ChiSquared(dof)
    F = np.array([chi2_cdf(dist, v) for v in x])
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def ks_critical_value(n: int, significance: float = 0.01) -> float:
    """Asymptotic one-sample KS critical value (1.63 / sqrt(n) at 1%)."""
    coeff = {0.01: 1.63, 0.05: 1.36, 0.1: 1.22}[significance]
    return coeff / math.sqrt(n)


STAT_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95, 0.99)


def summarize(records: Sequence[TrialRecord], alpha: float) -> dict:
    """Aggregate trial records; independent of record order."""
    done = sorted((r for r in records if r.ok), key=lambda r: r.index)
    summary: dict = {
        "n_trials": len(records),
        "n_completed": len(done),
        "n_infeasible": len(records) - len(done),
        "alpha": alpha,
    }
    if not done:
        return summary
    stats = np.sort([r.result.stat for r in done])
    dof = done[0].result.dof
    n = stats.size
    rejects = sum(r.result.decision is Decision.REJECT for r in done)
    levels = [round(0.05 * i, 2) for i in range(1, 20)]
    xs = [chi2_quantile(dof, q) for q in levels]
    summary.update(
        {
            "dof": dof,
            "rejection_rate": rejects / n,
            "n_rejected": rejects,
            "n_solver_failed": sum(r.result.solver_failed for r in done),
            "stat_mean": float(np.mean(stats)),
            "stat_quantiles": {str(q): float(np.quantile(stats, q)) for q in STAT_QUANTILES},
            "ks_distance": ks_distance(stats, dof),
            "ks_critical_1pct": ks_critical_value(n),
            "ecdf": [
                {
                    "x": x,
                    "empirical": float(np.searchsorted(stats, x, side="right") / n),
                    "theoretical": q,
                }
                for x, q in zip(xs, levels)
            ],
            "pos_err_m_median": float(np.median([r.pos_err_m for r in done])),
            "rot_err_rad_median": float(np.median([r.rot_err_rad for r in done])),
        }
    )
    return summary


@dataclass(frozen=True, eq=False)
class MonteCarloResult:
    records: list[TrialRecord]
    summary: dict

    @property
    def stats(self) -> np.ndarray:
        return np.array([r.result.stat for r in self.records if r.ok])

    def ecdf(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.sort(self.stats)
        return x, np.arange(1, x.size + 1) / x.size


def run_monte_carlo(
    cfg: ScenarioConfig,
    n_trials: int,
    fault: FaultSpec | None = None,
    integrity: IntegrityConfig | None = None,
    jobs: int = 1,
) -> MonteCarloResult:
    """Independent seeded trials; trial ``i`` uses ``trial_seed(cfg.seed, i)``.

    Infeasible scenarios are recorded (``error`` set) and counted, not raised.
    """
    if n_trials < 1:
        raise DomainError("n_trials must be at least 1")
    integrity = integrity or IntegrityConfig()
    if jobs > 1 and n_trials > 1:
        chunks = np.array_split(np.arange(n_trials), min(jobs * 4, n_trials))
        tasks = [(cfg, fault, integrity, c.tolist()) for c in chunks]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = [r for part in pool.map(_run_chunk, tasks) for r in part]
    else:
        records = _run_chunk((cfg, fault, integrity, range(n_trials)))
    return MonteCarloResult(records, summarize(records, integrity.alpha))
