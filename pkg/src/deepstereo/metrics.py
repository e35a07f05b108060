"""Error metrics and batch evaluation.

3PE is the percentage of evaluated pixels whose prediction is off by
strictly more than 3 pixels; MAE is the mean absolute error.  Aggregation
over samples is pixel-weighted (one global pool of evaluated pixels).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .data import StereoSample, normalize, pad_to_multiple_of_four, sample_tensors
from .estimators import DisparityMap, infer_disparity
from .model import PdsNetwork


class MetricError(RuntimeError):
    pass


def three_pixel_error(pred: DisparityMap, gt: DisparityMap,
                      mask: Optional[np.ndarray] = None) -> float:
    """100 * |{valid pixels with |pred - gt| > 3}| / |valid pixels|."""
    valid = gt.mask if mask is None else (np.asarray(mask, bool) & gt.mask)
    n = int(valid.sum())
    if n == 0:
        raise MetricError("no valid pixels to evaluate")
    err = np.abs(pred.values - gt.values)[valid]
    return 100.0 * float((err > 3.0).sum()) / n


def mean_absolute_error(pred: DisparityMap, gt: DisparityMap,
                        mask: Optional[np.ndarray] = None) -> float:
    valid = gt.mask if mask is None else (np.asarray(mask, bool) & gt.mask)
    n = int(valid.sum())
    if n == 0:
        raise MetricError("no valid pixels to evaluate")
    return float(np.abs(pred.values - gt.values)[valid].mean())


def apply_protocol_mask(gt: DisparityMap, mask: np.ndarray,
                        max_eval_disp: float) -> np.ndarray:
    """Intersect validity with ``gt < max_eval_disp``."""
    return np.asarray(mask, bool) & gt.mask & (gt.values < max_eval_disp)


@dataclass
class SampleResult:
    name: str
    three_pixel_error: float
    mean_absolute_error: float
    pixels: int


@dataclass
class EvalResult:
    """Pixel-weighted aggregate metrics plus the per-sample breakdown."""

    three_pixel_error: float
    mean_absolute_error: float
    pixels: int
    per_sample: List[SampleResult] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("sample,3pe,mae,pixels\n")
        for row in self.per_sample:
            buf.write(f"{row.name},{row.three_pixel_error:.6f},"
                      f"{row.mean_absolute_error:.6f},{row.pixels}\n")
        buf.write(f"TOTAL,{self.three_pixel_error:.6f},"
                  f"{self.mean_absolute_error:.6f},{self.pixels}\n")
        return buf.getvalue()


def evaluate_sample(sample: StereoSample, net: PdsNetwork,
                    d_run: Optional[int] = None,
                    estimator_kind: str = "subpixel_map", delta: float = 4.0,
                    max_eval_disp: Optional[float] = None) -> SampleResult:
    padded, (h, w) = pad_to_multiple_of_four(normalize(sample))
    left, right = sample_tensors(padded)
    pred_full = infer_disparity(left, right, net, d_run=d_run,
                                estimator_kind=estimator_kind, delta=delta)
    pred = DisparityMap(pred_full.values[:h, :w])
    mask = np.ones((h, w), dtype=bool)
    if max_eval_disp is not None:
        mask = apply_protocol_mask(sample.gt, mask, max_eval_disp)
    return SampleResult(sample.name,
                        three_pixel_error(pred, sample.gt, mask),
                        mean_absolute_error(pred, sample.gt, mask),
                        int((mask & sample.gt.mask).sum()))


def evaluate_samples(samples: Sequence[StereoSample], net: PdsNetwork,
                     d_run: Optional[int] = None,
                     estimator_kind: str = "subpixel_map", delta: float = 4.0,
                     max_eval_disp: Optional[float] = None) -> EvalResult:
    """Per-sample inference, then pixel-weighted aggregation in fixed order."""
    if not samples:
        raise MetricError("empty evaluation set")
    rows = [evaluate_sample(s, net, d_run, estimator_kind, delta,
                            max_eval_disp) for s in samples]
    total_px = sum(r.pixels for r in rows)
    agg_3pe = sum(r.three_pixel_error * r.pixels for r in rows) / total_px
    agg_mae = sum(r.mean_absolute_error * r.pixels for r in rows) / total_px
    return EvalResult(agg_3pe, agg_mae, total_px, rows)
