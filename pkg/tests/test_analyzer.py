"""Analyzer exactness against the instantiated network, plus report I/O."""

import csv
import io

import numpy as np
import pytest

from deepstereo.analyzer import analyze, compare
from deepstereo.config import NetConfig, desk_config, paper_config
from deepstereo.layers import LayerSpec, conv_spec
from deepstereo.model import PdsNetwork
from deepstereo.tensor import Tensor


class TestParameterCounting:
    def test_single_conv_formula(self):
        spec = conv_spec("x", 3, 8, 3, 1, 1, "conv2d")
        assert spec.param_count == 3 * 8 * 9 + 8 == 224

    def test_instance_norm_two_per_channel(self):
        from deepstereo.layers import norm_spec
        assert norm_spec("n", 16).param_count == 32

    def test_desk_total_matches_instantiated_network(self):
        report = analyze(desk_config(), 32, 64)
        net = PdsNetwork(desk_config(), seed=0)
        assert report.total_params == net.parameter_count()

    @pytest.mark.parametrize("seed", range(5))
    def test_random_configs_match_instantiated_network(self, seed):
        rng = np.random.default_rng(seed)
        embed = int(rng.choice([4, 8, 16]))
        cfg = NetConfig(
            max_disparity=int(rng.choice([16, 32, 48])),
            embed_channels=embed,
            signature_channels=int(rng.choice([2, 4, 8])),
            hourglass_base_channels=int(rng.choice([4, 8])),
            hourglass_levels=int(rng.choice([1, 2])),
            matching_hidden_channels=int(rng.integers(2, 2 * embed)),
        )
        report = analyze(cfg, 16, 32)
        net = PdsNetwork(cfg, seed=seed)
        assert report.total_params == net.parameter_count()


class TestShapePropagation:
    def test_rows_match_live_forward_shapes(self):
        cfg = desk_config()
        report = analyze(cfg, 32, 64)
        net = PdsNetwork(cfg, seed=1)
        rng = np.random.default_rng(0)
        trace = []
        net.forward(Tensor(rng.normal(size=(3, 32, 64))),
                    Tensor(rng.normal(size=(3, 32, 64))), trace=trace)
        traced = {}
        for name, shape in trace:
            traced.setdefault(name, set()).add(shape)
        for row in report.rows:
            assert row.name in traced, f"analyzer row {row.name} never ran"
            shapes = traced[row.name]
            assert shapes == {row.output_shape}, \
                f"{row.name}: analyzer {row.output_shape}, live {shapes}"
        assert set(traced) == {r.name for r in report.rows}

    def test_paper_config_embedding_descriptor(self):
        report = analyze(paper_config(), 540, 960)
        assert report.row("embedding.res2.act_out").output_shape == \
            (32, 135, 240)

    def test_paper_config_cost_volume(self):
        report = analyze(paper_config(), 540, 960)
        assert report.row("matching.signature_volume").output_shape == \
            (8, 48, 135, 240)
        assert report.row("regularization.final.conv").output_shape == \
            (1, 96, 540, 960)

    def test_invalid_geometry_rejected(self):
        with pytest.raises(ValueError, match="multiples of 4"):
            analyze(desk_config(), 30, 64)
        with pytest.raises(ValueError, match="d_run"):
            analyze(desk_config(), 32, 64, d_run=10)


class TestMemoryModel:
    def test_signature_volume_bytes_paper_scale(self):
        report = analyze(paper_config(), 540, 960)
        row = report.row("matching.signature_volume")
        assert row.activation_bytes == 8 * 48 * 135 * 240 * 4  # ~49.8 MB

    def test_paper_scale_peak_is_sub_gigabyte(self):
        # soft consistency with the published footprint estimate
        report = analyze(paper_config(), 540, 960)
        assert report.peak_activation_bytes < 2 ** 30

    def test_peak_at_least_largest_single_row(self):
        report = analyze(desk_config(), 32, 64)
        assert report.peak_activation_bytes >= \
            max(r.activation_bytes for r in report.rows)

    def test_peak_scales_linearly_in_d_run(self):
        peaks = [analyze(desk_config(), 32, 64, d_run=d).peak_activation_bytes
                 for d in (32, 64, 96)]
        assert peaks[1] - peaks[0] == peaks[2] - peaks[1]
        assert peaks[1] > peaks[0]


class TestCompare:
    def test_single_report_single_row(self):
        table = compare([analyze(desk_config(), 32, 64, label="desk")])
        lines = table.strip().splitlines()
        assert len(lines) == 2
        assert lines[1].startswith("desk")

    def test_sorted_by_params_ascending(self):
        small = analyze(desk_config(), 32, 64, label="small")
        big = analyze(paper_config(), 540, 960, label="big")
        table = compare([big, small], sort_by="params")
        lines = table.strip().splitlines()
        assert lines[1].startswith("small") and lines[2].startswith("big")

    def test_csv_round_trip(self):
        reports = [analyze(desk_config(), 32, 64, label="desk"),
                   analyze(paper_config(), 540, 960, label="paper")]
        text = compare(reports, sort_by="params", fmt="csv")
        rows = list(csv.DictReader(io.StringIO(text)))
        by_label = {r.label: r for r in reports}
        assert len(rows) == 2
        for parsed in rows:
            report = by_label[parsed["label"]]
            assert int(parsed["params"]) == report.total_params
            assert int(parsed["peak_activation_bytes"]) == \
                report.peak_activation_bytes
            assert int(parsed["d_run"]) == report.d_run

    def test_unknown_sort_column(self):
        with pytest.raises(ValueError, match="sort"):
            compare([analyze(desk_config(), 32, 64)], sort_by="flops")
