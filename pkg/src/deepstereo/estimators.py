"""Disparity estimators over the posterior volume.

``cost_to_posterior`` converts a cost volume into per-pixel probabilities
over the disparity grid (softmax of negated costs).  ``soft_argmin`` reads
out the expectation; ``subpixel_map`` reads out a normalized weighted mean
restricted to a window around the most probable disparity, which ignores
spurious secondary modes.  Estimator arithmetic runs in float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import ops
from .model import CostTensor, PdsNetwork
from .tensor import Tensor


@dataclass
class PosteriorTensor:
    """Per-pixel distribution over disparity-grid values.

    ``probs`` and ``log_probs`` are graph-connected when built from a
    graph-connected cost volume, so losses can differentiate through them.
    ``grid[k]`` is the disparity (full-resolution pixels) of slice k.
    """

    probs: Tensor       # (D', H, W)
    log_probs: Tensor   # (D', H, W)
    grid: np.ndarray    # (D',)

    def __post_init__(self):
        if len(self.grid) != self.probs.shape[0]:
            raise ValueError(
                f"grid has {len(self.grid)} entries for "
                f"{self.probs.shape[0]} slices")

    @property
    def grid_step(self) -> float:
        if len(self.grid) < 2:
            return 1.0
        return float(self.grid[1] - self.grid[0])


@dataclass
class DisparityMap:
    """Dense full-resolution disparity field with a validity mask."""

    values: np.ndarray  # (H, W) float
    mask: Optional[np.ndarray] = None  # (H, W) bool; None means all valid

    def __post_init__(self):
        if self.mask is None:
            self.mask = np.ones(self.values.shape, dtype=bool)

    @property
    def shape(self):
        return self.values.shape


def posterior_from_probs(probs: np.ndarray, grid=None) -> PosteriorTensor:
    """Wrap a plain probability volume (test fixtures, unit grids)."""
    probs = np.asarray(probs, dtype=np.float64)
    if grid is None:
        grid = np.arange(probs.shape[0], dtype=np.float64)
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
    return PosteriorTensor(Tensor(probs, dtype=np.float64),
                           Tensor(logp, dtype=np.float64),
                           np.asarray(grid, dtype=np.float64))


def cost_to_posterior(cost: CostTensor) -> PosteriorTensor:
    """softmax(-C) over the disparity axis, per pixel."""
    if not np.isfinite(cost.values.data).all():
        raise FloatingPointError("cost volume contains NaN or Inf")
    log_probs = ops.log_softmax(-cost.values, axis=0)
    return PosteriorTensor(log_probs.exp(), log_probs, cost.grid)


def soft_argmin(posterior: PosteriorTensor) -> DisparityMap:
    """Expectation of the posterior: sum_d d * P(d)."""
    probs = posterior.probs.data.astype(np.float64)
    grid = posterior.grid.reshape((-1,) + (1,) * (probs.ndim - 1))
    return DisparityMap((probs * grid).sum(axis=0))


def subpixel_map(posterior: PosteriorTensor, delta: float = 4.0) -> DisparityMap:
    """Normalized weighted mean within +-delta of the argmax disparity.

    Ties at the maximum go to the lowest disparity.  ``delta`` is in
    full-resolution pixels, so on the even-disparity network grid the
    default window spans the argmax slice plus two slices per side.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    probs = posterior.probs.data.astype(np.float64)
    grid = posterior.grid
    best = np.argmax(probs, axis=0)  # first occurrence = lowest disparity
    center = grid[best]  # (H, W)
    window = np.abs(grid.reshape((-1,) + (1,) * center.ndim) - center) <= delta
    weighted = np.where(window, probs, 0.0)
    mass = weighted.sum(axis=0)
    gridcol = grid.reshape((-1,) + (1,) * center.ndim)
    values = (weighted * gridcol).sum(axis=0) / mass
    return DisparityMap(values)


def infer_disparity(left: Tensor, right: Tensor, net: PdsNetwork,
                    d_run: Optional[int] = None,
                    estimator_kind: str = "subpixel_map",
                    delta: float = 4.0) -> DisparityMap:
    """Forward pass, posterior conversion, then the chosen estimator."""
    cost = net.forward(left, right, d_run=d_run)
    posterior = cost_to_posterior(cost)
    if estimator_kind == "soft_argmin":
        return soft_argmin(posterior)
    if estimator_kind == "subpixel_map":
        return subpixel_map(posterior, delta)
    raise ValueError(f"unknown estimator kind {estimator_kind!r}")
