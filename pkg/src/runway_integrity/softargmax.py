"""Spatial soft argmax over keypoint activation heatmaps.

A heatmap of shape (H, W) is turned into a probability grid by a softmax
over all cells; the keypoint is the expected normalized grid coordinate,
columns giving x and rows giving y, each in [0, 1]. Functions accept a
single (H, W) grid or a stack (K, H, W).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DomainError
from .geometry import PixelPoint


class NormalizedKeypoint(NamedTuple):
    x: float
    y: float


def validate_heatmap(h) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.ndim not in (2, 3):
        raise DomainError(f"heatmap must be 2-D (or a 3-D stack), got shape {h.shape}")
    if h.shape[-2] < 2 or h.shape[-1] < 2:
        raise DomainError(f"heatmap needs at least 2 rows and 2 columns, got {h.shape[-2:]}")
    if not np.all(np.isfinite(h)):
        raise DomainError("heatmap contains non-finite logits")
    return h


def spatial_softmax(h) -> np.ndarray:
    """Softmax over the last two axes; the max is subtracted before exponentiating."""
    h = validate_heatmap(h)
    z = h - h.max(axis=(-2, -1), keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=(-2, -1), keepdims=True)


def _grids(rows: int, cols: int):
    return np.arange(rows) / (rows - 1), np.arange(cols) / (cols - 1)


def _centered_mean(marginal: np.ndarray) -> np.ndarray:
    """Expected normalized coordinate of a marginal over the last axis.

    Offsets from the grid center are exactly antisymmetric and mirrored
    cells are differenced before summing, so a symmetric marginal (e.g. a
    uniform heatmap) yields exactly 0.5.
    """
    n = marginal.shape[-1]
    half = n // 2
    offset = (2.0 * np.arange(half) - (n - 1)) / (2.0 * (n - 1))
    diff = marginal[..., :half] - marginal[..., : n - half - 1 : -1]
    return 0.5 + (diff * offset).sum(axis=-1)


def soft_argmax_many(h) -> np.ndarray:
    """Normalized (x, y) for a stack of heatmaps; returns shape (..., 2)."""
    P = spatial_softmax(h)
    x = _centered_mean(P.sum(axis=-2))
    y = _centered_mean(P.sum(axis=-1))
    return np.clip(np.stack((x, y), axis=-1), 0.0, 1.0)


def soft_argmax(h) -> NormalizedKeypoint:
    """Expected normalized keypoint of a single (H, W) heatmap."""
    h = validate_heatmap(h)
    if h.ndim != 2:
        raise DomainError("soft_argmax takes a single 2-D heatmap; use soft_argmax_many")
    x, y = soft_argmax_many(h)
    return NormalizedKeypoint(float(x), float(y))


def soft_argmax_gradient(h) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of x and y w.r.t. every logit, each with the heatmap's shape.

    d x / d h[i, j] = P[i, j] * (j / (W - 1) - x), and likewise for y with rows.
    """
    h = validate_heatmap(h)
    P = spatial_softmax(h)
    gy, gx = _grids(*P.shape[-2:])
    x = (P * gx).sum(axis=(-2, -1), keepdims=True)
    y = (P * gy[:, None]).sum(axis=(-2, -1), keepdims=True)
    return P * (gx - x), P * (gy[:, None] - y)


def scale_to_pixels(k: NormalizedKeypoint, crop_w: float, crop_h: float) -> PixelPoint:
    """Map normalized coordinates onto a crop with the (size - 1) endpoint convention."""
    if not (crop_w >= 1 and crop_h >= 1):
        raise DomainError("crop size must be at least 1x1 pixels")
    return PixelPoint(float(k[0]) * (crop_w - 1), float(k[1]) * (crop_h - 1))


def sigma_to_pixels(sigma_norm, crop_w: float, crop_h: float) -> np.ndarray:
    """Convert a (sx, sy) standard deviation from normalized to pixel units."""
    s = np.asarray(sigma_norm, dtype=float)
    return s * np.array([crop_w - 1.0, crop_h - 1.0])
