"""Gaussian keypoint predictions, the NLL objective, calibration and sharpness."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np

from .errors import DomainError
from .geometry import PixelPoint
from .numerics import std_normal_cdf

NllForm = Literal["paper", "standard"]

DEFAULT_LEVELS = tuple(round(0.05 * i, 2) for i in range(1, 20))


@dataclass(frozen=True)
class GaussianKeypoint:
    """Pixel-space mean and per-axis standard deviation of one keypoint."""

    mu: PixelPoint
    sigma: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "mu", PixelPoint(float(self.mu[0]), float(self.mu[1])))
        sx, sy = (float(s) for s in self.sigma)
        if not (sx > 0 and sy > 0) or not (math.isfinite(sx) and math.isfinite(sy)):
            raise DomainError("sigma must be positive and finite")
        if not all(math.isfinite(c) for c in self.mu):
            raise DomainError("mu must be finite")
        object.__setattr__(self, "sigma", (sx, sy))


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """K Gaussian keypoints stored as (K, 2) arrays of means and standard deviations.

    Row order must match the world-point list (near-left, near-right,
    far-left, far-right for runway corners).
    """

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float).reshape(-1, 2)
        sigma = np.array(self.sigma, dtype=float)
        if sigma.ndim == 0:
            sigma = np.full_like(mu, float(sigma))
        sigma = sigma.reshape(mu.shape)
        if mu.shape[0] < 1:
            raise DomainError("a prediction set needs at least one keypoint")
        if not np.all(np.isfinite(mu)):
            raise DomainError("mu must be finite")
        if not (np.all(sigma > 0) and np.all(np.isfinite(sigma))):
            raise DomainError("sigma must be positive and finite")
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def from_keypoints(cls, keypoints: Iterable[GaussianKeypoint]) -> "PredictionSet":
        kps = list(keypoints)
        return cls(np.array([k.mu for k in kps]), np.array([k.sigma for k in kps]))

    @property
    def keypoints(self) -> list[GaussianKeypoint]:
        return [GaussianKeypoint(PixelPoint(*m), tuple(s)) for m, s in zip(self.mu, self.sigma)]

    def __len__(self) -> int:
        return self.mu.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PredictionSet):
            return NotImplemented
        return np.array_equal(self.mu, other.mu) and np.array_equal(self.sigma, other.sigma)


def nll_loss(preds: PredictionSet, truths, form: NllForm = "paper") -> float:
    """Mean per-keypoint Gaussian negative log-likelihood.

    ``paper`` weights the log-determinant by 1; ``standard`` is the exact
    bivariate normal NLL, 0.5 * log|Sigma| + log(2 pi).
    """
    truths = np.asarray(truths, dtype=float).reshape(-1, 2)
    if truths.shape != preds.mu.shape:
        raise DomainError(f"{len(preds)} predictions but {truths.shape[0]} truths")
    z = (truths - preds.mu) / preds.sigma
    quad = 0.5 * np.sum(z * z, axis=1)
    logdet = np.sum(2.0 * np.log(preds.sigma), axis=1)
    if form == "paper":
        per_kp = quad + logdet
    elif form == "standard":
        per_kp = quad + 0.5 * logdet + math.log(2.0 * math.pi)
    else:
        raise DomainError(f"unknown NLL form {form!r}")
    return float(np.mean(per_kp))


def optimal_sigma(error, form: NllForm = "paper"):
    """Closed-form per-coordinate minimizer of :func:`nll_loss` for a fixed error.

    Form ``paper`` is minimized at sigma = |e| / sqrt(2), form ``standard`` at |e|.
    """
    e = np.abs(np.asarray(error, dtype=float))
    if form == "paper":
        return e / math.sqrt(2.0)
    if form == "standard":
        return e
    raise DomainError(f"unknown NLL form {form!r}")


@dataclass(frozen=True)
class CalibrationCurve:
    levels: np.ndarray
    coverage: np.ndarray
    per_keypoint: np.ndarray | None = None  # (K, n_levels), when K is constant
    n_coordinates: int = 0

    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.coverage - self.levels)))

    def rows(self) -> list[tuple[float, float]]:
        return list(zip(self.levels.tolist(), self.coverage.tolist()))


def _stack(preds: Sequence[PredictionSet], truths):
    if isinstance(preds, PredictionSet):
        preds, truths = [preds], [truths]
    preds = list(preds)
    truths = [np.asarray(t, dtype=float).reshape(-1, 2) for t in truths]
    if not preds:
        raise DomainError("no predictions given")
    if len(preds) != len(truths):
        raise DomainError("predictions and truths differ in length")
    for p, t in zip(preds, truths):
        if p.mu.shape != t.shape:
            raise DomainError("prediction/truth keypoint counts differ")
    return preds, truths


def _pit(preds, truths) -> list[np.ndarray]:
    return [std_normal_cdf((t - p.mu) / p.sigma) for p, t in zip(preds, truths)]


def calibration_curve(preds, truths, levels=DEFAULT_LEVELS) -> CalibrationCurve:
    """Empirical coverage of the marginal predictive quantiles.

    Every coordinate of every keypoint in every frame counts as one scalar
    prediction; coverage at level rho is the fraction with
    ``truth <= mu + sigma * Phi^-1(rho)``, evaluated through the
    probability integral transform ``Phi((truth - mu) / sigma) <= rho``.
    """
    preds, truths = _stack(preds, truths)
    levels = np.asarray(levels, dtype=float)
    if levels.ndim != 1 or levels.size == 0:
        raise DomainError("levels must be a nonempty 1-D sequence")
    if np.any((levels <= 0) | (levels >= 1)) or np.any(np.diff(levels) <= 0):
        raise DomainError("levels must be strictly increasing inside (0, 1)")

    pits = _pit(preds, truths)
    flat = np.sort(np.concatenate([p.ravel() for p in pits]))
    coverage = np.searchsorted(flat, levels, side="right") / flat.size

    per_kp = None
    if len({p.shape[0] for p in pits}) == 1:
        stacked = np.stack(pits)  # (frames, K, 2)
        per_kp = (stacked[..., None] <= levels).mean(axis=(0, 2))
    return CalibrationCurve(levels, coverage, per_kp, int(flat.size))


@dataclass(frozen=True)
class SharpnessHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    mean: float
    median: float
    n_values: int
    n_outside: int = 0


def _sigmas(preds) -> np.ndarray:
    if isinstance(preds, PredictionSet):
        preds = [preds]
    preds = list(preds)
    if not preds:
        raise DomainError("no predictions given")
    return np.concatenate([p.sigma.ravel() for p in preds])


def sharpness_histogram(preds, bin_edges) -> SharpnessHistogram:
    """Histogram of all predicted sigma_x and sigma_y values (pixels)."""
    s = _sigmas(preds)
    edges = np.asarray(bin_edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise DomainError("bin edges must be strictly increasing with at least two entries")
    counts, _ = np.histogram(s, bins=edges)
    return SharpnessHistogram(
        bin_edges=edges,
        counts=counts,
        mean=float(np.mean(s)),
        median=float(np.median(s)),
        n_values=int(s.size),
        n_outside=int(s.size - counts.sum()),
    )


def recalibrate(preds: PredictionSet, factor: float) -> PredictionSet:
    """Scale every predicted standard deviation by ``factor``; means are untouched."""
    if not factor > 0:
        raise DomainError("recalibration factor must be positive")
    return PredictionSet(preds.mu, preds.sigma * factor)
