from __future__ import annotations

import numpy as np
import pytest

from runway_integrity.geometry import CameraIntrinsics, Pose, project_points, runway_corners
from runway_integrity.pnp import PnpProblem, initial_pose_from_prior
from runway_integrity.sim import ScenarioConfig
from runway_integrity.uncertainty import PredictionSet

_ACCEPTANCE: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label, title): acceptance gate item")


def pytest_runtest_logreport(report):
    label = getattr(report, "_acceptance", None)
    if label is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE[label[0]] = (label[1], report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        outcome.get_result()._acceptance = marker.args


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_ACCEPTANCE, key=lambda s: int(s.lstrip("A"))):
        title, outcome = _ACCEPTANCE[label]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{label:>4} {verdict}  {title}")


@pytest.fixture
def camera() -> CameraIntrinsics:
    return CameraIntrinsics.default()


@pytest.fixture
def corners() -> np.ndarray:
    return runway_corners(3000.0, 45.0)


@pytest.fixture
def true_pose() -> Pose:
    return initial_pose_from_prior(3.0, 2000.0, 0.0)


@pytest.fixture
def exact_problem(corners, true_pose, camera) -> PnpProblem:
    mu = project_points(corners, true_pose, camera)
    return PnpProblem(corners, PredictionSet(mu, 1.0), camera)


@pytest.fixture
def default_config() -> ScenarioConfig:
    return ScenarioConfig()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


NOMINAL_TRIALS = 10_000
MASTER_SEED = 20240611


@pytest.fixture(scope="session")
def nominal_mc():
    """Ten thousand nominal trials of the default scenario, shared across modules."""
    import time

    from runway_integrity.raim import IntegrityConfig
    from runway_integrity.sim import run_monte_carlo

    t0 = time.perf_counter()
    mc = run_monte_carlo(ScenarioConfig(seed=MASTER_SEED), NOMINAL_TRIALS, None, IntegrityConfig(alpha=0.01))
    return mc, time.perf_counter() - t0
