"""Training criteria.

The primary criterion is a cross-entropy against a discretized Laplace
distribution centered at the sub-pixel ground-truth disparity, which keeps
a meaningful gradient even when the truth falls between grid points.  The
baseline criterion is mean absolute error of the posterior expectation.
Both average over valid pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimators import DisparityMap, PosteriorTensor
from .tensor import Tensor


@dataclass
class LaplaceTarget:
    """Normalized exp(-|d - center| / b) over a disparity grid."""

    probs: np.ndarray
    center: float
    diversity: float


@dataclass
class LossValue:
    """Graph-connected scalar loss plus the pixel count it averaged over."""

    value: Tensor
    pixel_count: int

    def item(self) -> float:
        return self.value.item()


def laplace_target(d_gt: float, grid: np.ndarray, b: float) -> LaplaceTarget:
    """Discretized Laplace distribution centered at ``d_gt``.

    The normalizer is the direct sum over the grid, so the result sums to 1
    exactly (up to machine rounding) for any grid, center and diversity.
    """
    if b <= 0:
        raise ValueError(f"diversity b must be positive, got {b}")
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    weights = np.exp(-np.abs(grid - d_gt) / b)
    return LaplaceTarget(weights / weights.sum(), float(d_gt), float(b))


def _target_volume(grid: np.ndarray, gt: DisparityMap, mask: np.ndarray,
                   b: float) -> tuple[np.ndarray, np.ndarray, int]:
    """Per-pixel Laplace targets and the effective validity mask."""
    grid = np.asarray(grid, dtype=np.float64)
    gtv = np.asarray(gt.values, dtype=np.float64)
    valid = np.asarray(mask, dtype=bool) & np.asarray(gt.mask, dtype=bool)
    # disparities outside the grid cannot be represented; drop them
    valid &= (gtv >= grid[0]) & (gtv <= grid[-1]) & np.isfinite(gtv)
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ValueError("no valid ground-truth pixels for the loss")
    gridcol = grid.reshape((-1, 1, 1))
    weights = np.exp(-np.abs(gridcol - gtv[None]) / b)
    q = weights / weights.sum(axis=0, keepdims=True)
    return q, valid, n_valid


def subpixel_cross_entropy(posterior: PosteriorTensor, gt: DisparityMap,
                           mask: np.ndarray, b: float = 2.0) -> LossValue:
    """Mean over valid pixels of -sum_d Q_gt(d) * log P(d)."""
    q, valid, n_valid = _target_volume(posterior.grid, gt, mask, b)
    q = q * valid[None]  # masked-out pixels contribute nothing
    per_slice = posterior.log_probs * q.astype(posterior.log_probs.dtype)
    total = -(per_slice.sum())
    return LossValue(total * (1.0 / n_valid), n_valid)


def l1_softargmin_loss(posterior: PosteriorTensor, gt: DisparityMap,
                       mask: np.ndarray) -> LossValue:
    """Mean absolute error of the posterior expectation over valid pixels."""
    gtv = np.asarray(gt.values, dtype=np.float64)
    valid = np.asarray(mask, dtype=bool) & np.asarray(gt.mask, dtype=bool)
    valid &= np.isfinite(gtv)
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ValueError("no valid ground-truth pixels for the loss")
    probs = posterior.probs
    gridcol = posterior.grid.reshape((-1, 1, 1)).astype(probs.dtype)
    expectation = (probs * gridcol).sum(axis=0)
    residual = (expectation - gtv.astype(probs.dtype)).abs()
    masked = residual * valid.astype(probs.dtype)
    return LossValue(masked.sum() * (1.0 / n_valid), n_valid)


def target_entropy(grid: np.ndarray, gt: DisparityMap, mask: np.ndarray,
                   b: float = 2.0) -> float:
    """Mean entropy of the per-pixel Laplace targets (the loss floor)."""
    q, valid, n_valid = _target_volume(grid, gt, mask, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(q > 0, q * np.log(q), 0.0)
    return float(-(plogp.sum(axis=0) * valid).sum() / n_valid)
