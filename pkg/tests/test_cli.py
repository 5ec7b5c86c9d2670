import json

import numpy as np

from noisylab.cli import cli
from noisylab.data import load_csv


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


BASE_CFG = {
    "seed": 3,
    "dataset": {"kind": "blobs", "k": 2, "n_per_class": 80, "d": 2,
                "separation": 8.0},
    "test_fraction": 0.25,
    "method": {"loss": {"kind": "ce"}},
    "train": {"epochs": 5},
}


class TestGen:
    def test_blobs_roundtrip(self, tmp_path):
        out = str(tmp_path / "ds.csv")
        assert cli(["gen", "--blobs", "--out", out,
                    "k=3", "n=50", "d=2", "sep=8", "seed=1"]) == 0
        ds = load_csv(out)
        assert ds.n == 150 and ds.num_classes == 3 and ds.dim == 2

    def test_rings(self, tmp_path):
        out = str(tmp_path / "rings.csv")
        assert cli(["gen", "--rings", "--out", out, "k=2", "n=40"]) == 0
        assert load_csv(out).n == 80

    def test_bad_param_is_usage_error(self, tmp_path):
        out = str(tmp_path / "x.csv")
        assert cli(["gen", "--blobs", "--out", out, "bogus"]) == 1

    def test_unknown_flag(self):
        assert cli(["gen", "--frobnicate"]) == 1


class TestNoise:
    def test_symmetric_flips_labels(self, tmp_path):
        clean = str(tmp_path / "clean.csv")
        noisy = str(tmp_path / "noisy.csv")
        cli(["gen", "--blobs", "--out", clean, "k=2", "n=100", "seed=2"])
        assert cli(["noise", "--in", clean, "--kind", "symmetric",
                    "--out", noisy, "rho=0.3", "seed=5"]) == 0
        ds = load_csv(noisy)
        assert ds.true_labels is not None
        flip = np.mean(ds.labels != ds.true_labels)
        assert 0.2 < flip < 0.4

    def test_annotator_columns(self, tmp_path):
        clean = str(tmp_path / "clean.csv")
        noisy = str(tmp_path / "ann.csv")
        cli(["gen", "--blobs", "--out", clean, "k=2", "n=50", "seed=2"])
        assert cli(["noise", "--in", clean, "--kind", "annotators",
                    "--out", noisy, "rhos=0.1:0.2:0.3", "seed=6"]) == 0
        ds = load_csv(noisy)
        assert ds.annotator_labels.shape == (100, 3)

    def test_missing_input(self, tmp_path):
        assert cli(["noise", "--in", str(tmp_path / "nope.csv"),
                    "--kind", "symmetric", "--out",
                    str(tmp_path / "o.csv"), "rho=0.1"]) == 1


class TestTrain:
    def test_deterministic_reports(self, tmp_path):
        cfg = write_config(tmp_path, BASE_CFG)
        a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        assert cli(["train", "--config", cfg, "--out", a]) == 0
        assert cli(["train", "--config", cfg, "--out", b]) == 0
        ra = json.loads(open(a).read())
        rb = json.loads(open(b).read())
        ra.pop("wall_time_s", None)
        rb.pop("wall_time_s", None)
        assert ra == rb

    def test_invalid_config(self, tmp_path):
        cfg = dict(BASE_CFG)
        del cfg["seed"]
        path = write_config(tmp_path, cfg)
        assert cli(["train", "--config", path]) == 1


class TestFuse:
    def test_staple_outputs(self, tmp_path):
        clean = str(tmp_path / "clean.csv")
        noisy = str(tmp_path / "ann.csv")
        cli(["gen", "--blobs", "--out", clean, "k=2", "n=100", "seed=7"])
        cli(["noise", "--in", clean, "--kind", "annotators",
             "--out", noisy, "rhos=0.1:0.1:0.2", "seed=8"])
        model_out = str(tmp_path / "model.json")
        assert cli(["fuse", "--in", noisy, "--method", "staple",
                    "--out", model_out]) == 0
        model = json.loads(open(model_out).read())
        assert len(model["confusions"]) == 3
        fused = load_csv(str(tmp_path / "model_fused.csv"))
        assert np.mean(fused.labels == fused.true_labels) > 0.9

    def test_fuse_without_annotators(self, tmp_path):
        clean = str(tmp_path / "clean.csv")
        cli(["gen", "--blobs", "--out", clean, "k=2", "n=20", "seed=1"])
        assert cli(["fuse", "--in", clean, "--out",
                    str(tmp_path / "m.json")]) == 1


class TestSweepAndReport:
    def test_sweep_csv(self, tmp_path):
        cfg = {"seed": 9,
               "dataset": {"kind": "blobs", "k": 2, "n_per_class": 80,
                           "d": 2, "separation": 8.0},
               "test_fraction": 0.25,
               "train": {"epochs": 5, "learning_rate": 0.1,
                         "batch_size": 32},
               "rhos": [0.0, 0.2]}
        path = write_config(tmp_path, cfg)
        out = str(tmp_path / "sweep.csv")
        assert cli(["sweep", "--config", path, "--out", out]) == 0
        lines = open(out).read().splitlines()
        assert len(lines) == 3

    def test_report_prints_summary(self, tmp_path, capsys):
        cfg = write_config(tmp_path, BASE_CFG)
        rep = str(tmp_path / "r.json")
        cli(["train", "--config", cfg, "--out", rep])
        assert cli(["report", "--in", rep]) == 0
        out = capsys.readouterr().out
        assert "accuracy" in out
