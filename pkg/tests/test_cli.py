import json
import math
import subprocess
import sys

import pytest

from eamri.config import ReconConfig
from eamri.harness import read_pnm
from eamri.harness.cli import main

TINY = dict(N=1, M=1, C=4, heads=2, image_size=16, n_coils=2, center_fraction=0.15,
            batch=2, steps=2, eval_every=1, val_fraction=0.25)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    ReconConfig(**TINY).save(root / "cfg.json")
    assert main(["simulate", "--config", str(root / "cfg.json"), "--n", "8",
                 "--out", str(root / "data.eamri")]) == 0
    assert main(["train", "--config", str(root / "cfg.json"), "--dataset",
                 str(root / "data.eamri"), "--out", str(root / "run")]) == 0
    return root


def test_simulate_and_train_outputs(workspace):
    run = workspace / "run"
    assert (run / "checkpoint.eamri").exists()
    saved = json.loads((run / "config.json").read_text())
    assert saved["steps"] == 2 and saved["C"] == 4
    lines = (run / "metrics.jsonl").read_text().splitlines()
    assert [json.loads(l)["step"] for l in lines] == [0, 1, 2]


def test_recon_writes_images_and_table(workspace, capsys):
    out = workspace / "recon"
    assert main(["recon", "--checkpoint", str(workspace / "run" / "checkpoint.eamri"),
                 "--dataset", str(workspace / "data.eamri"), "--out", str(out),
                 "--index", "2"]) == 0
    table = capsys.readouterr().out
    assert "psnr" in table and table.splitlines()[2].split()[0] == "2"
    assert read_pnm(out / "recon_002.pgm").shape == (16, 16)
    assert read_pnm(out / "error_002.ppm").shape == (16, 16, 3)
    assert read_pnm(out / "edges_002_c0.pgm").shape == (16, 16)


def test_recon_output_is_reproducible(workspace):
    args = ["--checkpoint", str(workspace / "run" / "checkpoint.eamri"),
            "--dataset", str(workspace / "data.eamri"), "--index", "0"]
    main(["recon", *args, "--out", str(workspace / "r1")])
    main(["recon", *args, "--out", str(workspace / "r2")])
    for name in ("recon_000.pgm", "error_000.ppm", "edges_000_c0.pgm"):
        assert (workspace / "r1" / name).read_bytes() == (workspace / "r2" / name).read_bytes()


def test_recon_index_out_of_range(workspace):
    assert main(["recon", "--checkpoint", str(workspace / "run" / "checkpoint.eamri"),
                 "--dataset", str(workspace / "data.eamri"), "--out", str(workspace / "x"),
                 "--index", "99"]) == 1


def test_eval_prints_baseline_and_model(workspace, capsys):
    assert main(["eval", "--checkpoint", str(workspace / "run" / "checkpoint.eamri"),
                 "--dataset", str(workspace / "data.eamri"), "--split", "val"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("2 samples")
    assert "zero-filled" in out and "model (full)" in out


def test_train_resumes_from_checkpoint(workspace, tmp_path):
    cfg = ReconConfig(**{**TINY, "steps": 3})
    cfg.save(tmp_path / "cfg.json")
    assert main(["train", "--config", str(tmp_path / "cfg.json"), "--dataset",
                 str(workspace / "data.eamri"), "--checkpoint",
                 str(workspace / "run" / "checkpoint.eamri"), "--out", str(tmp_path / "run")]) == 0
    steps = [json.loads(l)["step"] for l in (tmp_path / "run" / "metrics.jsonl").read_text().splitlines()]
    assert steps == [3]


def test_fully_sampled_recon_is_exact(tmp_path, capsys):
    cfg = ReconConfig(**{**TINY, "af": 1, "n_coils": 1, "steps": 1})
    cfg.save(tmp_path / "cfg.json")
    assert main(["simulate", "--config", str(tmp_path / "cfg.json"), "--n", "4",
                 "--out", str(tmp_path / "d")]) == 0
    assert main(["train", "--config", str(tmp_path / "cfg.json"), "--dataset",
                 str(tmp_path / "d"), "--out", str(tmp_path / "run")]) == 0
    capsys.readouterr()
    assert main(["recon", "--checkpoint", str(tmp_path / "run" / "checkpoint.eamri"),
                 "--dataset", str(tmp_path / "d"), "--out", str(tmp_path / "r"),
                 "--index", "0"]) == 0
    row = capsys.readouterr().out.splitlines()[2].split()
    assert row[1] == "inf"


def test_gradcheck_passes(capsys):
    assert main(["gradcheck", "--seed", "0"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_gradcheck_failure_exit_code(monkeypatch):
    from eamri.harness import checks
    from eamri.tensor import GradCheckResult

    def broken(seed=0):
        ok = GradCheckResult("fine", 1.0, 1.0)
        return checks.SuiteReport([ok], [GradCheckResult("model.w", 1.0, 1.1)])

    monkeypatch.setattr(checks, "run_suite", broken)
    assert main(["gradcheck"]) == 2


def test_ablate_tiny(workspace, tmp_path, capsys):
    # two cascades, so a shared attention block is smaller than one per cascade
    ReconConfig(**{**TINY, "N": 2}).save(tmp_path / "cfg.json")
    assert main(["ablate", "--config", str(tmp_path / "cfg.json"), "--dataset",
                 str(workspace / "data.eamri"), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    for label in ("zero-filled", "M1", "M2", "M3", "FULL", "canny"):
        assert label in out
    assert "holds" in out
    report = json.loads((tmp_path / "ablation.json").read_text())
    assert len(report["runs"]) == 5
    assert all(math.isfinite(r["psnr"]) for r in report["runs"])


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["train", "--dataset", "x", "--out", "y"],
    ["simulate"],
    ["train", "--config", "/nonexistent.json", "--dataset", "x", "--out", "y"],
    ["simulate", "--n", "many", "--out", "x"],
])
def test_usage_errors_exit_one(argv, capsys):
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == 1


def test_unknown_config_field(tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps({"N": 1, "depth": 2}))
    assert main(["simulate", "--config", str(tmp_path / "cfg.json"), "--out",
                 str(tmp_path / "d")]) == 1


def test_bad_magic(tmp_path, workspace):
    (tmp_path / "junk").write_bytes(b"not a container at all")
    assert main(["eval", "--checkpoint", str(tmp_path / "junk"), "--dataset",
                 str(workspace / "data.eamri")]) == 1


def test_thread_variable(tmp_path, monkeypatch):
    monkeypatch.setenv("EAMRI_THREADS", "1")
    assert main(["simulate", "--n", "1", "--out", str(tmp_path / "a")]) == 0
    monkeypatch.setenv("EAMRI_THREADS", "zero")
    assert main(["simulate", "--n", "1", "--out", str(tmp_path / "b")]) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "eamri", "simulate", "--n", "2", "--out",
                           str(tmp_path / "d")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "wrote 2 samples" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "eamri", "nope"], capture_output=True)
    assert proc.returncode == 1
