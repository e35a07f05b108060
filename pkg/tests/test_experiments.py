"""Experiment runner structure at reduced scale (trends tested in acceptance)."""

import csv
import io

import numpy as np

from deepstereo.config import NetConfig
from deepstereo.experiments import (run_experiment_estimators,
                                    run_experiment_fullsize)
from deepstereo.train import SyntheticSpec


def tiny_setup():
    net_cfg = NetConfig(max_disparity=16, embed_channels=4,
                        signature_channels=2, hourglass_base_channels=4,
                        hourglass_levels=1, matching_hidden_channels=4)
    data = SyntheticSpec(n_train=4, n_val=2, height=16, width=32,
                         max_disp=6, n_layers=1, seed=0)
    return net_cfg, data


class TestFullsizeExperiment:
    def test_three_rows_and_finite_metrics(self, tmp_path):
        net_cfg, data = tiny_setup()
        report = run_experiment_fullsize(out_dir=tmp_path, data=data,
                                         net_cfg=net_cfg, seed=1,
                                         iterations=40, n_test=3)
        assert len(report.rows) == 3
        sizes = [(r.train_size, r.test_size) for r in report.rows]
        assert sizes == [("16x8", "16x8"), ("16x8", "32x16"),
                         ("32x16", "32x16")]
        for r in report.rows:
            assert np.isfinite(r.three_pixel_error)
            assert np.isfinite(r.mean_absolute_error)
        text = (tmp_path / "fullsize.csv").read_text()
        rows = list(csv.DictReader(io.StringIO(text)))
        assert len(rows) == 3
        assert float(rows[0]["3pe"]) == report.rows[0].three_pixel_error


class TestEstimatorExperiment:
    def test_five_rows_and_convergence_logs(self, tmp_path):
        net_cfg, data = tiny_setup()
        report = run_experiment_estimators(out_dir=tmp_path, data=data,
                                           net_cfg=net_cfg, seed=1,
                                           iterations=40, n_test=3)
        combos = [(r.loss, r.estimator, r.d_run) for r in report.rows]
        assert combos == [
            ("l1_softargmin", "soft_argmin", 16),
            ("l1_softargmin", "subpixel_map", 16),
            ("subpixel_ce", "subpixel_map", 16),
            ("l1_softargmin", "soft_argmin", 32),
            ("l1_softargmin", "subpixel_map", 32),
        ]
        for r in report.rows:
            assert np.isfinite(r.three_pixel_error)
        for name in ("estimators.csv", "convergence_l1.csv",
                     "convergence_ce.csv"):
            assert (tmp_path / name).exists(), name
        log = (tmp_path / "convergence_ce.csv").read_text()
        assert log.startswith("iteration,train_loss,val_3pe")
