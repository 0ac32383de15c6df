"""Command-line surface: subcommand wiring, config files, exit codes."""

import numpy as np
import pytest

from cake.cli import main
from cake.data import load_feature_file
from cake.model import load_checkpoint
from cake.vizmap import read_ppm_classes

EPOCHS = "3"


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Tiny corpus plus one trained checkpoint, shared by the module."""
    d = tmp_path_factory.mktemp("cli")
    paths = {
        "train": str(d / "train.cakefeat"),
        "test": str(d / "test.cakefeat"),
        "train_noav": str(d / "train_noav.cakefeat"),
        "test_noav": str(d / "test_noav.cakefeat"),
        "model": str(d / "model.cakeckpt"),
        "dir": d,
    }
    rc = main([
        "synth", "--seed", "11", "--domains", "2", "--dim", "16",
        "--train-counts", "60,40", "--test-counts", "25,20",
        "--out", paths["train"], "--out-test", paths["test"],
    ])
    assert rc == 0
    rc = main([
        "synth", "--seed", "11", "--domains", "2", "--dim", "16",
        "--train-counts", "60,40", "--test-counts", "25,20", "--no-av",
        "--out", paths["train_noav"], "--out-test", paths["test_noav"],
    ])
    assert rc == 0
    rc = main([
        "train", "--data", paths["train"], "--test", paths["test"],
        "--seed", "7", "--variant", "cake", "--k", "2",
        "--epochs", EPOCHS, "--dropout", "0.1", "--lr", "0.005",
        "--quiet", "--out", paths["model"],
    ])
    assert rc == 0
    return paths


class TestSynth:
    def test_writes_loadable_files(self, workdir):
        tr = load_feature_file(workdir["train"])
        te = load_feature_file(workdir["test"])
        assert len(tr.records) == 100 and len(te.records) == 45
        assert tr.dim == 16 and tr.n_domains == 2

    def test_deterministic(self, workdir, tmp_path):
        args = ["synth", "--seed", "11", "--domains", "2", "--dim", "16",
                "--train-counts", "60,40", "--test-counts", "25,20"]
        a = str(tmp_path / "a.bin")
        at = str(tmp_path / "at.bin")
        assert main(args + ["--out", a, "--out-test", at]) == 0
        assert open(a, "rb").read() == open(workdir["train"], "rb").read()
        assert open(at, "rb").read() == open(workdir["test"], "rb").read()

    def test_requires_counts_without_preset(self, workdir, tmp_path, capsys):
        rc = main(["synth", "--seed", "1", "--out", str(tmp_path / "x"),
                   "--out-test", str(tmp_path / "y")])
        assert rc == 2
        assert "train-counts" in capsys.readouterr().err

    def test_benchmark_preset(self, tmp_path):
        out, out_t = str(tmp_path / "b.bin"), str(tmp_path / "bt.bin")
        rc = main(["synth", "--preset", "benchmark", "--seed", "2030",
                   "--train-counts", "30,20,10", "--test-counts", "9,6,6",
                   "--out", out, "--out-test", out_t])
        assert rc == 0
        tr = load_feature_file(out)
        assert tr.n_domains == 3 and tr.dim == 64
        assert [m.name for m in tr.domains] == ["synthA", "synthB", "synthC"]

    def test_unknown_preset(self, tmp_path, capsys):
        rc = main(["synth", "--preset", "galaxy", "--seed", "1",
                   "--train-counts", "5", "--test-counts", "5", "--domains", "1",
                   "--out", str(tmp_path / "x"), "--out-test", str(tmp_path / "y")])
        assert rc == 2
        assert "preset" in capsys.readouterr().err


class TestTrain:
    def test_checkpoint_byte_determinism(self, workdir, tmp_path):
        args = ["train", "--data", workdir["train"], "--test", workdir["test"],
                "--seed", "7", "--variant", "cake", "--k", "2",
                "--epochs", EPOCHS, "--dropout", "0.1", "--lr", "0.005",
                "--quiet"]
        p1, p2 = str(tmp_path / "m1.ckpt"), str(tmp_path / "m2.ckpt")
        assert main(args + ["--out", p1]) == 0
        assert main(args + ["--out", p2]) == 0
        blob = open(p1, "rb").read()
        assert blob == open(p2, "rb").read()
        assert blob == open(workdir["model"], "rb").read()

    def test_history_csv(self, workdir, tmp_path):
        hist = str(tmp_path / "h.csv")
        rc = main(["train", "--data", workdir["train"], "--test", workdir["test"],
                   "--seed", "3", "--k", "2", "--epochs", "2", "--quiet",
                   "--history", hist])
        assert rc == 0
        lines = open(hist).read().strip().split("\n")
        assert lines[0] == "epoch,loss,f1_dom0,f1_dom1,f1_weighted"
        assert len(lines) == 3

    def test_avk_missing_av_exit_2(self, workdir, capsys):
        rc = main(["train", "--data", workdir["train_noav"],
                   "--test", workdir["test_noav"], "--seed", "1",
                   "--variant", "avk", "--k", "2", "--epochs", "1", "--quiet"])
        assert rc == 2
        assert "arousal-valence" in capsys.readouterr().err

    def test_inputs_not_mutated(self, workdir, tmp_path):
        before = open(workdir["train"], "rb").read()
        before_t = open(workdir["test"], "rb").read()
        assert main(["train", "--data", workdir["train"], "--test",
                     workdir["test"], "--seed", "9", "--k", "2",
                     "--epochs", "1", "--quiet"]) == 0
        assert open(workdir["train"], "rb").read() == before
        assert open(workdir["test"], "rb").read() == before_t

    def test_save_optimizer_resumes_state(self, workdir, tmp_path):
        path = str(tmp_path / "opt.ckpt")
        rc = main(["train", "--data", workdir["train"], "--test", workdir["test"],
                   "--seed", "7", "--k", "2", "--epochs", "2", "--quiet",
                   "--save-optimizer", "--out", path])
        assert rc == 0
        _, _, adam = load_checkpoint(path)
        assert adam is not None and adam.t > 0

    def test_bad_hyperparameter_exit_2(self, workdir, capsys):
        rc = main(["train", "--data", workdir["train"], "--test", workdir["test"],
                   "--seed", "1", "--batch-size", "0", "--quiet"])
        assert rc == 2
        assert "batch_size" in capsys.readouterr().err


class TestEval:
    def test_report_and_diagonal_equality(self, workdir, tmp_path, capsys):
        eval_csv = str(tmp_path / "eval.csv")
        cross_csv = str(tmp_path / "cross.csv")
        assert main(["eval", "--model", workdir["model"], "--data",
                     workdir["test"], "--out", eval_csv]) == 0
        assert main(["cross-eval", "--model", workdir["model"], "--data",
                     workdir["test"], "--out", cross_csv]) == 0
        capsys.readouterr()
        eval_rows = [ln.split(",") for ln in open(eval_csv).read().strip().split("\n")]
        cross_rows = [ln.split(",") for ln in open(cross_csv).read().strip().split("\n")]
        assert eval_rows[0] == ["domain", "n", "macro_f1", "accuracy",
                                "mean_class_recall"]
        # printed macro F1 strings agree exactly between the two reports
        for j in range(2):
            assert eval_rows[1 + j][2] == cross_rows[1 + j][1 + j]

    def test_eval_stdout(self, workdir, capsys):
        assert main(["eval", "--model", workdir["model"],
                     "--data", workdir["test"]]) == 0
        out = capsys.readouterr().out
        assert "domain domain0" in out and "weighted macro_f1" in out

    def test_missing_checkpoint_exit_2(self, workdir, capsys):
        rc = main(["eval", "--model", str(workdir["dir"] / "nope.ckpt"),
                   "--data", workdir["test"]])
        assert rc == 2
        assert "checkpoint" in capsys.readouterr().err

    def test_corrupt_checkpoint_exit_2(self, workdir, tmp_path, capsys):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"JUNKJUNK" + b"\0" * 32)
        rc = main(["eval", "--model", str(bad), "--data", workdir["test"]])
        assert rc == 2
        assert "magic" in capsys.readouterr().err


class TestVizmapScatter:
    def test_raster_map(self, workdir, tmp_path):
        out = str(tmp_path / "map.ppm")
        rc = main(["vizmap", "--model", workdir["model"], "--out", out,
                   "--resolution", "24", "--test", workdir["test"]])
        assert rc == 0
        classes = read_ppm_classes(out)
        assert classes.shape == (24, 24)

    def test_vector_map_with_overlay(self, workdir, tmp_path):
        out = str(tmp_path / "map.svg")
        rc = main(["vizmap", "--model", workdir["model"], "--out", out,
                   "--format", "vector", "--resolution", "24",
                   "--test", workdir["test"]])
        assert rc == 0
        svg = open(out).read()
        assert "<rect" in svg and "<text" in svg

    def test_byte_determinism(self, workdir, tmp_path):
        p1, p2 = str(tmp_path / "a.ppm"), str(tmp_path / "b.ppm")
        args = ["vizmap", "--model", workdir["model"], "--resolution", "16"]
        assert main(args + ["--out", p1]) == 0
        assert main(args + ["--out", p2]) == 0
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_unsupported_model_exit_2(self, workdir, tmp_path, capsys):
        ckpt = str(tmp_path / "k3.ckpt")
        assert main(["train", "--data", workdir["train"], "--test",
                     workdir["test"], "--seed", "5", "--k", "3",
                     "--epochs", "1", "--quiet", "--out", ckpt]) == 0
        rc = main(["vizmap", "--model", ckpt, "--out", str(tmp_path / "m.ppm")])
        assert rc == 2
        assert "visualization" in capsys.readouterr().err

    def test_scatter(self, workdir, tmp_path):
        out = str(tmp_path / "s.svg")
        assert main(["scatter", "--data", workdir["test"], "--out", out]) == 0
        assert open(out).read().count("<circle") == 45

    def test_scatter_missing_av_exit_2(self, workdir, tmp_path, capsys):
        rc = main(["scatter", "--data", workdir["test_noav"],
                   "--out", str(tmp_path / "s.svg")])
        assert rc == 2
        assert "arousal-valence" in capsys.readouterr().err


class TestSweepGradcheck:
    def test_sweep_csv(self, workdir, tmp_path, capsys):
        out = str(tmp_path / "sweep.csv")
        rc = main(["sweep", "--data", workdir["train"], "--test", workdir["test"],
                   "--seed", "7", "--ks", "2,3", "--epochs", "2",
                   "--dropout", "0.1", "--quiet", "--out", out])
        assert rc == 0
        lines = open(out).read().strip().split("\n")
        assert lines[0] == "variant,k,f1_weighted"
        assert [ln.split(",")[:2] for ln in lines[1:]] == [["cake", "2"],
                                                           ["cake", "3"]]
        assert "f1_weighted" in capsys.readouterr().out

    def test_gradcheck(self, capsys):
        assert main(["gradcheck", "--seed", "0"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") >= 20
        assert "FAIL" not in out


class TestUsageErrors:
    def check_usage(self, argv, capsys, needle=None):
        rc = main(argv)
        err = capsys.readouterr().err
        assert rc == 1
        assert "usage" in err
        if needle:
            assert needle in err

    def test_no_command(self, capsys):
        self.check_usage([], capsys, "command is required")

    def test_unknown_command(self, capsys):
        self.check_usage(["flyme"], capsys)

    def test_missing_required_flag(self, workdir, capsys):
        self.check_usage(["train", "--data", workdir["train"],
                          "--test", workdir["test"]], capsys, "--seed")

    def test_unknown_flag(self, capsys):
        self.check_usage(["gradcheck", "--bogus", "1"], capsys)

    def test_bad_flag_value(self, capsys):
        self.check_usage(["gradcheck", "--seed", "oops"], capsys)

    def test_bad_config_key(self, workdir, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("warp_drive=1\n")
        self.check_usage(["gradcheck", "--config", str(cfg)], capsys,
                         "warp_drive")

    def test_missing_config_file(self, capsys):
        self.check_usage(["gradcheck", "--config", "/nonexistent/x.cfg"], capsys)


class TestConfigFile:
    def test_config_supplies_and_flags_override(self, tmp_path):
        cfg = tmp_path / "synth.cfg"
        cfg.write_text(
            "seed=11\ndomains=2\ndim=16\n"
            "train-counts=60,40\ntest_counts=25,20\n"  # both key spellings work
        )
        a, at = str(tmp_path / "a.bin"), str(tmp_path / "at.bin")
        b, bt = str(tmp_path / "b.bin"), str(tmp_path / "bt.bin")
        assert main(["synth", "--config", str(cfg), "--out", a,
                     "--out-test", at]) == 0
        assert load_feature_file(a).dim == 16
        # explicit flag beats the file value
        assert main(["synth", "--config", str(cfg), "--dim", "8", "--out", b,
                     "--out-test", bt]) == 0
        assert load_feature_file(b).dim == 8

    def test_config_comments_and_blanks(self, tmp_path, capsys):
        cfg = tmp_path / "g.cfg"
        cfg.write_text("# gradient battery\n\nseed=4\n")
        assert main(["gradcheck", "--config", str(cfg)]) == 0
        capsys.readouterr()

    def test_boolean_config_flag(self, tmp_path):
        cfg = tmp_path / "s.cfg"
        cfg.write_text("seed=11\ndomains=1\ndim=8\ntrain_counts=10\n"
                       "test_counts=5\nno_av=true\n")
        out, out_t = str(tmp_path / "n.bin"), str(tmp_path / "nt.bin")
        assert main(["synth", "--config", str(cfg), "--out", out,
                     "--out-test", out_t]) == 0
        bundle = load_feature_file(out)
        assert all(rec.av is None for rec in bundle.records)
