"""Integrity monitoring for vision-based runway-relative pose estimation."""

from .errors import (
    BehindCameraError,
    ConfigurationError,
    DomainError,
    FileFormatError,
    PoseIntegrityError,
    ScenarioInfeasibleError,
)
from .geometry import (
    CameraIntrinsics,
    PixelPoint,
    Pose,
    project,
    project_points,
    projection_jacobian,
    projection_jacobians,
    runway_corners,
)
from .numerics import ChiSquared, chi2_cdf, chi2_pdf, chi2_quantile, chi2_sf
from .pnp import (
    PnpProblem,
    PnpSolution,
    SolverOptions,
    initial_pose_from_prior,
    solve_weighted_pnp,
)
from .raim import (
    Decision,
    IntegrityConfig,
    IntegrityResult,
    check_rejection,
    residual_projector,
)
from .sim import (
    FaultSpec,
    MonteCarloResult,
    ScenarioConfig,
    generate_scenario,
    inject_fault,
    run_monte_carlo,
)
from .softargmax import NormalizedKeypoint, scale_to_pixels, soft_argmax, spatial_softmax
from .uncertainty import (
    CalibrationCurve,
    GaussianKeypoint,
    PredictionSet,
    calibration_curve,
    nll_loss,
    recalibrate,
    sharpness_histogram,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
