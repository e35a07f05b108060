"""CLI subcommand behavior and exit codes."""

import numpy as np
import pytest

from deepstereo.checkpoint import save_checkpoint
from deepstereo.cli import main
from deepstereo.config import NetConfig, TrainConfig
from deepstereo.data import DatasetManifest, read_pfm
from deepstereo.metrics import evaluate_samples
from deepstereo.model import PdsNetwork


def small_cfg_json(tmp_path):
    cfg = NetConfig(max_disparity=16, embed_channels=4, signature_channels=2,
                    hourglass_base_channels=4, hourglass_levels=1,
                    matching_hidden_channels=4)
    path = tmp_path / "net.json"
    cfg.to_json(path)
    return cfg, str(path)


def write_net(tmp_path, cfg):
    net = PdsNetwork(cfg, seed=3)
    ckpt = tmp_path / "net.pdsw"
    save_checkpoint(ckpt, net.named_parameters())
    return net, str(ckpt)


class TestSynth:
    def test_deterministic_files(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        args = ["synth", "--count", "2", "--seed", "9", "--height", "16",
                "--width", "32", "--max-disp", "6", "--layers", "1"]
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        for name in ("0000_left.png", "0000_right.png", "0000_gt.pfm",
                     "0001_left.png", "manifest.tsv"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_different_seed_differs(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        base = ["synth", "--count", "1", "--height", "16", "--width", "32",
                "--max-disp", "6", "--layers", "1"]
        main(base + ["--seed", "1", "--out", str(a)])
        main(base + ["--seed", "2", "--out", str(b)])
        assert (a / "0000_left.png").read_bytes() != \
            (b / "0000_left.png").read_bytes()


class TestInferAndEval:
    def test_infer_pfm_round_trip(self, tmp_path):
        cfg, cfg_path = small_cfg_json(tmp_path)
        net, ckpt = write_net(tmp_path, cfg)
        main(["synth", "--out", str(tmp_path / "data"), "--count", "1",
              "--height", "16", "--width", "32", "--max-disp", "6",
              "--layers", "1"])
        out_pfm = tmp_path / "disp.pfm"
        out_png = tmp_path / "disp.png"
        code = main(["infer",
                     "--left", str(tmp_path / "data" / "0000_left.png"),
                     "--right", str(tmp_path / "data" / "0000_right.png"),
                     "--checkpoint", ckpt, "--net-config", cfg_path,
                     "--out", str(out_pfm), "--png", str(out_png)])
        assert code == 0
        disp = read_pfm(out_pfm)
        assert disp.shape == (16, 32)
        # writing again round-trips bit-exactly
        second = tmp_path / "again.pfm"
        main(["infer", "--left", str(tmp_path / "data" / "0000_left.png"),
              "--right", str(tmp_path / "data" / "0000_right.png"),
              "--checkpoint", ckpt, "--net-config", cfg_path,
              "--out", str(second)])
        np.testing.assert_array_equal(read_pfm(second), disp)
        assert out_png.exists()

    def test_eval_single_sample_matches_direct(self, tmp_path, capsys):
        cfg, cfg_path = small_cfg_json(tmp_path)
        net, ckpt = write_net(tmp_path, cfg)
        main(["synth", "--out", str(tmp_path / "data"), "--count", "1",
              "--height", "16", "--width", "32", "--max-disp", "6",
              "--layers", "1"])
        out_csv = tmp_path / "eval.csv"
        code = main(["eval", "--manifest",
                     str(tmp_path / "data" / "manifest.tsv"),
                     "--checkpoint", ckpt, "--net-config", cfg_path,
                     "--out", str(out_csv)])
        assert code == 0
        manifest = DatasetManifest.load(tmp_path / "data" / "manifest.tsv")
        direct = evaluate_samples(manifest.samples(), net)
        assert out_csv.read_text() == direct.to_csv()


class TestAnalyze:
    def test_text_report(self, capsys):
        assert main(["analyze", "--config", "desk", "--height", "32",
                     "--width", "64"]) == 0
        out = capsys.readouterr().out
        assert "total parameters" in out and "embedding.conv1" in out

    def test_csv_compare(self, capsys):
        assert main(["analyze", "--config", "desk", "--config", "paper",
                     "--height", "32", "--width", "64",
                     "--format", "csv"]) == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0] == \
            "label,height,width,d_run,params,peak_activation_bytes"
        assert len(out.strip().splitlines()) == 3


class TestTrainCommand:
    def test_short_synthetic_training_run(self, tmp_path, capsys):
        cfg, cfg_path = small_cfg_json(tmp_path)
        tc = TrainConfig(loss="subpixel_ce", iterations=10, val_interval=5,
                         lr_halve_start=100, seed=1)
        tc_path = tmp_path / "train.json"
        tc.to_json(tc_path)
        code = main(["train", "--net-config", cfg_path, "--train-config",
                     str(tc_path), "--out", str(tmp_path / "run"),
                     "--height", "16", "--width", "32", "--max-disp", "6",
                     "--layers", "1", "--train-count", "2",
                     "--val-count", "1"])
        assert code == 0
        assert (tmp_path / "run" / "last.pdsw").exists()
        assert (tmp_path / "run" / "best.pdsw").exists()
        assert (tmp_path / "run" / "train_log.csv").exists()
        assert (tmp_path / "run" / "net_config.json").exists()


class TestExitCodes:
    def test_usage_error_is_one(self, capsys):
        assert main(["eval"]) == 1  # missing required flags
        assert main(["nonsense"]) == 1

    def test_runtime_error_is_two(self, tmp_path, capsys):
        cfg, cfg_path = small_cfg_json(tmp_path)
        code = main(["eval", "--manifest", str(tmp_path / "absent.tsv"),
                     "--checkpoint", str(tmp_path / "absent.pdsw"),
                     "--net-config", cfg_path])
        assert code == 2

    def test_success_is_zero(self, capsys):
        assert main(["analyze", "--config", "desk", "--height", "32",
                     "--width", "64"]) == 0
