import csv
import json

import pytest

from intrinsic_dim.cli import build_parser, main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_train_toy_subspace_prints_performance(tmp_path, capsys):
    ckpt = tmp_path / "toy.subt"
    code, out, _ = run(capsys, "train", "--task", "toy", "--proj", "dense", "--d", 10,
                       "--out", tmp_path, "--checkpoint", ckpt)
    assert code == 0
    perf = float(out.split("performance=")[1].split()[0])
    assert perf >= 0.9
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    lines = (tmp_path / "history.csv").read_text().splitlines()
    assert lines[0] == f"# manifest={manifest['digest']}"
    assert str(ckpt) in manifest["outputs"]

    code, out, _ = run(capsys, "eval-checkpoint", ckpt)
    assert code == 0 and json.loads(out)["performance"] >= 0.9
    code, out, _ = run(capsys, "compress", ckpt, "--output", tmp_path / "copy.subt")
    info = json.loads(out)
    assert code == 0 and info["written_bytes"] == info["checkpoint_bytes"] == ckpt.stat().st_size


def test_train_direct_toy(tmp_path, capsys):
    code, out, _ = run(capsys, "train", "--task", "toy", "--direct", "--out", tmp_path)
    assert code == 0 and "performance=1.000000" in out


def test_missing_mnist_is_usage_error(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("INTRINSIC_DIM_MNIST", raising=False)
    code, _, err = run(capsys, "train", "--task", "mnist", "--direct", "--mnist-dir",
                       tmp_path / "nope", "--out", tmp_path)
    assert code == 2 and "MNIST" in err
    code, _, err = run(capsys, "train", "--task", "mnist", "--direct", "--out", tmp_path)
    assert code == 2


@pytest.mark.parametrize("argv", [["train", "--task", "toy"],
                                  ["train", "--task", "toy", "--d", "3", "--direct"],
                                  ["sweep", "--task", "toy"],
                                  ["train", "--bogus-flag"],
                                  ["sweep", "--d-list", "1,x"],
                                  ["frobnicate"],
                                  ["train", "--task", "toy", "--d", "5000"]])
def test_usage_errors(argv, capsys, tmp_path):
    assert main(argv + ["--out", str(tmp_path)] if argv[0] in ("train", "sweep") else argv) == 2


def test_divergence_exits_1(tmp_path, capsys):
    code, _, err = run(capsys, "train", "--task", "toy", "--direct", "--lr", 1.0,
                       "--out", tmp_path)
    assert code == 1 and "diverged" in err


def test_corrupt_checkpoint_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.subt"
    bad.write_bytes(b"SUBT" + bytes(60))
    assert run(capsys, "eval-checkpoint", bad)[0] == 1
    assert run(capsys, "compress", tmp_path / "missing.subt")[0] == 1


def test_toy_sweep_end_to_end(tmp_path, capsys):
    code, out, _ = run(capsys, "sweep", "--task", "toy", "--d-list", "8,9,10,11,12",
                       "--runs", 3, "--bootstrap", 50, "--out", tmp_path, "--quiet")
    assert code == 0 and "d_int90=10" in out
    report = json.loads((tmp_path / "report.json").read_text())
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert report["manifest_digest"] == manifest["digest"]
    assert report["bootstrap"]["samples"] == 50
    assert manifest["config"]["runs"] == 3
    rows = list(csv.DictReader((tmp_path / "runs.csv").read_text().splitlines()[1:]))
    assert {int(r["d"]) for r in rows} >= {8, 9, 10, 11, 12}


def test_unreachable_threshold_is_not_an_error(tmp_path, capsys):
    code, out, _ = run(capsys, "sweep", "--task", "toy", "--d-list", "2,3", "--runs", 1,
                       "--no-refine", "--out", tmp_path, "--quiet")
    assert code == 0 and "d_int90=not reached" in out
    assert json.loads((tmp_path / "report.json").read_text())["d_int90"] == "not reached"


def test_sweep_reproducible_from_manifest(tmp_path, capsys):
    args = ["sweep", "--task", "linear", "--codim", 3, "--d-auto", "1:6:1.5", "--runs", 2,
            "--seed", 4, "--quiet"]
    run(capsys, *args, "--out", tmp_path / "a")
    run(capsys, *args, "--out", tmp_path / "b")
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    assert a["points"] == b["points"] and a["d_int90"] == b["d_int90"] == 3


def test_cartpole_sweep_requires_global_baseline(tmp_path, capsys):
    code, _, err = run(capsys, "sweep", "--task", "cartpole", "--d-list", 2, "--out", tmp_path)
    assert code == 2 and "global" in err


def test_es_command(tmp_path, capsys):
    code, out, _ = run(capsys, "es", "--d", 4, "--iterations", 2, "--population", 8,
                       "--eval-episodes", 3, "--out", tmp_path)
    assert code == 0 and "best_reward=" in out
    assert (tmp_path / "es_history.csv").read_text().startswith("# manifest=")


def test_bench_proj_command(tmp_path, capsys):
    code, out, _ = run(capsys, "bench-proj", "--D", "4096", "--reps", 5, "--out", tmp_path)
    assert code == 0
    for kind in ("dense", "sparse", "fastfood"):
        assert kind in out
    assert (tmp_path / "bench.csv").read_text().startswith("# manifest=")


def test_help_lists_every_flag(capsys):
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices
    assert set(sub) == {"train", "sweep", "compress", "eval-checkpoint", "es", "bench-proj"}
    for name, p in sub.items():
        text = p.format_help()
        for action in p._actions:
            for opt in action.option_strings:
                assert opt in text, (name, opt)
    assert main(["--help"]) == 0
