"""Trend experiments: training-size context and estimator behavior.

Both experiments train small networks on synthetic stereograms and emit
CSV reports.  The L1 runs use a lower learning rate than the cross-entropy
default; at this scale the expectation-based loss diverges occasionally at
0.01 but is stable at 0.005.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .config import NetConfig, TrainConfig, desk_config
from .data import StereoSample, crop_at
from .metrics import EvalResult, evaluate_samples
from .model import PdsNetwork
from .train import SyntheticSpec, TrainResult, train


def desk_data_spec(seed: int = 0) -> SyntheticSpec:
    """The default desk-scale dataset used by experiments and acceptance."""
    return SyntheticSpec(n_train=32, n_val=6, height=32, width=64,
                         max_disp=10, n_layers=2, seed=seed)


def l1_train_config(seed: int = 1, iterations: int = 1200,
                    crop: Optional[Tuple[int, int]] = None) -> TrainConfig:
    return TrainConfig(loss="l1_softargmin", learning_rate=0.005,
                       iterations=iterations, val_interval=100,
                       lr_halve_start=max(200, (2 * iterations) // 3),
                       lr_halve_period=200, seed=seed,
                       crop_height=None if crop is None else crop[0],
                       crop_width=None if crop is None else crop[1])


def ce_train_config(seed: int = 1, iterations: int = 1200) -> TrainConfig:
    return TrainConfig(loss="subpixel_ce", learning_rate=0.005,
                       iterations=iterations, val_interval=100,
                       lr_halve_start=max(200, (2 * iterations) // 3),
                       lr_halve_period=200, seed=seed)


def small_test_crops(samples: List[StereoSample], crop_h: int, crop_w: int,
                     seed: int = 77) -> List[StereoSample]:
    rng = np.random.default_rng(seed)
    out = []
    for s in samples:
        top = int(rng.integers(0, s.height - crop_h + 1))
        left = int(rng.integers(0, s.width - crop_w + 1))
        out.append(crop_at(s, top, left, crop_h, crop_w))
    return out


@dataclass
class FullsizeRow:
    train_size: str
    test_size: str
    three_pixel_error: float
    mean_absolute_error: float


@dataclass
class FullsizeReport:
    rows: List[FullsizeRow] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["train_size,test_size,3pe,mae"]
        for r in self.rows:
            lines.append(f"{r.train_size},{r.test_size},"
                         f"{r.three_pixel_error:.6f},"
                         f"{r.mean_absolute_error:.6f}")
        return "\n".join(lines) + "\n"


def run_experiment_fullsize(out_dir=None, data: Optional[SyntheticSpec] = None,
                            net_cfg: Optional[NetConfig] = None,
                            seed: int = 5, iterations: int = 800,
                            n_test: int = 24,
                            quiet: bool = True) -> FullsizeReport:
    """Patch-trained vs full-size-trained comparison (L1 + expectation).

    Emits three rows: patch model on the patch-size test split, patch model
    on the full-size split, and full-size model on the full-size split.
    """
    data = data or desk_data_spec()
    net_cfg = net_cfg or desk_config()
    crop_h, crop_w = data.height // 2, data.width // 2
    patch_cfg = l1_train_config(seed=seed, iterations=iterations,
                                crop=(crop_h, crop_w))
    full_cfg = l1_train_config(seed=seed, iterations=iterations)

    patch_net = train(patch_cfg, net_cfg, data, estimator_kind="soft_argmin",
                      quiet=quiet).best_net(net_cfg)
    full_net = train(full_cfg, net_cfg, data, estimator_kind="soft_argmin",
                     quiet=quiet).best_net(net_cfg)

    test_full = data.test_samples(n_test)
    test_small = small_test_crops(test_full, crop_h, crop_w)
    small_label = f"{crop_w}x{crop_h}"
    full_label = f"{data.width}x{data.height}"

    def row(net, samples, train_label, test_label):
        result = evaluate_samples(samples, net, estimator_kind="soft_argmin")
        return FullsizeRow(train_label, test_label,
                           result.three_pixel_error,
                           result.mean_absolute_error)

    report = FullsizeReport([
        row(patch_net, test_small, small_label, small_label),
        row(patch_net, test_full, small_label, full_label),
        row(full_net, test_full, full_label, full_label),
    ])
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "fullsize.csv").write_text(report.to_csv())
    return report


@dataclass
class EstimatorRow:
    loss: str
    estimator: str
    d_run: int
    three_pixel_error: float
    mean_absolute_error: float


@dataclass
class EstimatorReport:
    rows: List[EstimatorRow] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["loss,estimator,d_run,3pe,mae"]
        for r in self.rows:
            lines.append(f"{r.loss},{r.estimator},{r.d_run},"
                         f"{r.three_pixel_error:.6f},"
                         f"{r.mean_absolute_error:.6f}")
        return "\n".join(lines) + "\n"

    def find(self, loss: str, estimator: str, d_run: int) -> EstimatorRow:
        for r in self.rows:
            if (r.loss, r.estimator, r.d_run) == (loss, estimator, d_run):
                return r
        raise KeyError((loss, estimator, d_run))


def run_experiment_estimators(out_dir=None,
                              data: Optional[SyntheticSpec] = None,
                              net_cfg: Optional[NetConfig] = None,
                              seed: int = 1, iterations: int = 1200,
                              n_test: int = 24, delta: float = 4.0,
                              l1_net: Optional[PdsNetwork] = None,
                              ce_net: Optional[PdsNetwork] = None,
                              quiet: bool = True) -> EstimatorReport:
    """Estimator swap and disparity-range extension on trained models.

    Five rows: the L1 model under both estimators at the standard range,
    the cross-entropy model under the windowed MAP estimator, and the L1
    model under both estimators at the doubled range.  Convergence logs of
    both training runs are written alongside the table.
    """
    data = data or desk_data_spec()
    net_cfg = net_cfg or desk_config()
    d_std = net_cfg.max_disparity
    d_ext = 2 * d_std
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)

    if l1_net is None:
        l1_result = train(l1_train_config(seed=seed, iterations=iterations),
                          net_cfg, data, estimator_kind="soft_argmin",
                          quiet=quiet)
        l1_net = l1_result.best_net(net_cfg)
        if out is not None:
            l1_result.log.save(out / "convergence_l1.csv")
    if ce_net is None:
        ce_result = train(ce_train_config(seed=seed, iterations=iterations),
                          net_cfg, data, estimator_kind="subpixel_map",
                          quiet=quiet)
        ce_net = ce_result.best_net(net_cfg)
        if out is not None:
            ce_result.log.save(out / "convergence_ce.csv")

    test = data.test_samples(n_test)

    def row(loss, net, estimator, d_run):
        result = evaluate_samples(test, net, d_run=d_run,
                                  estimator_kind=estimator, delta=delta)
        return EstimatorRow(loss, estimator, d_run,
                            result.three_pixel_error,
                            result.mean_absolute_error)

    report = EstimatorReport([
        row("l1_softargmin", l1_net, "soft_argmin", d_std),
        row("l1_softargmin", l1_net, "subpixel_map", d_std),
        row("subpixel_ce", ce_net, "subpixel_map", d_std),
        row("l1_softargmin", l1_net, "soft_argmin", d_ext),
        row("l1_softargmin", l1_net, "subpixel_map", d_ext),
    ])
    if out is not None:
        (out / "estimators.csv").write_text(report.to_csv())
    return report
