import json
import subprocess
import sys
import time

import numpy as np
import pytest

from i2sb.cli import main

CONFIG = """
[task]
kind = "gauss_shift"

[train]
steps = 40
batch_size = 64
mode = "{mode}"
seed = 1

[network]
hidden = [32]

[schedule]
n_steps = 100

[sample]
nfe = [2, 10]

[sweep]
n_eval = 200
n_projections = 16
"""


def _config(tmp_path, mode="i2sb", extra=""):
    p = tmp_path / f"{mode}.toml"
    p.write_text(CONFIG.format(mode=mode) + extra)
    return p


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("train")
    cfg = _config(d)
    assert main(["train", "--config", str(cfg), "--out", str(d / "run")]) == 0
    return d / "run"


def test_train_outputs(trained_dir):
    assert {p.name for p in trained_dir.iterdir()} == {"checkpoint.bin", "metrics.csv", "resolved_config.json"}
    resolved = json.loads((trained_dir / "resolved_config.json").read_text())
    assert resolved["train"]["learning_rate"] > 0 and resolved["schedule"]["beta_profile"] == "symmetric"
    assert (trained_dir / "metrics.csv").read_text().startswith("step,loss,grad_norm,wallclock_ms")


def test_train_is_byte_reproducible(tmp_path, trained_dir):
    cfg = _config(tmp_path)
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "again")]) == 0
    assert (tmp_path / "again" / "checkpoint.bin").read_bytes() == (trained_dir / "checkpoint.bin").read_bytes()


def test_missing_field_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text(CONFIG.format(mode="i2sb").replace('mode = "i2sb"\n', ""))
    assert main(["train", "--config", str(p), "--out", str(tmp_path / "x")]) == 2
    assert "train.mode" in capsys.readouterr().err


def test_missing_config_file_exit_2(tmp_path):
    assert main(["train", "--config", str(tmp_path / "nope.toml")]) == 2


def test_sample_zero_count_header_only(tmp_path, trained_dir):
    out = tmp_path / "s"
    assert main(["sample", "--checkpoint", str(trained_dir / "checkpoint.bin"), "--count", "0", "--out", str(out)]) == 0
    assert (out / "samples.csv").read_text().splitlines() == ["sample_index,x_0,x_1"]


def test_sample_timing_and_metadata(tmp_path, trained_dir):
    out = tmp_path / "s"
    start = time.perf_counter()
    rc = main(["sample", "--checkpoint", str(trained_dir / "checkpoint.bin"), "--nfe", "10", "--count", "1000", "--out", str(out), "--seed", "4"])
    assert rc == 0 and time.perf_counter() - start < 5.0
    meta = json.loads((out / "samples_meta.json").read_text())
    assert meta["mode"] == "i2sb" and meta["nfe"] == 10 and meta["count"] == 1000 and "wallclock_ms" in meta
    data = np.loadtxt(out / "samples.csv", delimiter=",", skiprows=1)
    assert data.shape == (1000, 3) and np.all(np.isfinite(data))


def test_sample_reproducible_and_trajectory(tmp_path, trained_dir):
    ck = str(trained_dir / "checkpoint.bin")
    for name in ("a", "b"):
        assert main(["sample", "--checkpoint", ck, "--nfe", "5", "--count", "20", "--trajectory", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "samples.csv").read_bytes() == (tmp_path / "b" / "samples.csv").read_bytes()
    lines = (tmp_path / "a" / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "sample_index,time,x_0,x_1" and len(lines) == 1 + 20 * 6


def test_sample_from_input(tmp_path, trained_dir):
    pts = tmp_path / "in.csv"
    pts.write_text("index,a,b\n0,1.0,2.0\n1,-1.0,0.5\n")
    assert main(["sample", "--checkpoint", str(trained_dir / "checkpoint.bin"), "--input", str(pts), "--mode", "posterior_mean", "--out", str(tmp_path / "o")]) == 0
    assert len((tmp_path / "o" / "samples.csv").read_text().splitlines()) == 3


def test_ot_ode_singular_start(tmp_path, trained_dir, capsys):
    rc = main(["sample", "--checkpoint", str(trained_dir / "checkpoint.bin"), "--mode", "ot_ode", "--t-start", "0", "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "t_start > 0" in capsys.readouterr().err


def test_ot_ode_default_start(tmp_path, trained_dir):
    rc = main(["sample", "--checkpoint", str(trained_dir / "checkpoint.bin"), "--mode", "ot_ode", "--nfe", "10", "--count", "5", "--out", str(tmp_path / "o")])
    assert rc == 0


def test_csgm_mode_mismatch(tmp_path, trained_dir):
    assert main(["sample", "--checkpoint", str(trained_dir / "checkpoint.bin"), "--mode", "csgm", "--out", str(tmp_path / "o")]) == 2


def test_corrupt_checkpoint_exit_1(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"garbage-bytes-here")
    assert main(["sample", "--checkpoint", str(bad), "--out", str(tmp_path / "o")]) == 1


def test_sweep_reproducible_and_contained(tmp_path):
    cfg = _config(tmp_path)
    for name in ("a", "b"):
        assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    assert {p.name for p in a.iterdir()} == {"sweep_gauss_shift.csv", "timings_gauss_shift.csv"}
    assert (a / "sweep_gauss_shift.csv").read_bytes() == (b / "sweep_gauss_shift.csv").read_bytes()
    rows = (a / "sweep_gauss_shift.csv").read_text().splitlines()
    assert rows[0] == "task,mode,nfe,seed,sliced_w2,energy" and len(rows) == 1 + 2 * 2


def test_single_cell_sweep(tmp_path):
    cfg = _config(tmp_path)
    assert main(["sweep", "--config", str(cfg), "--mode", "i2sb", "--nfe", "2", "--seed", "0", "--out", str(tmp_path / "o")]) == 0
    assert len((tmp_path / "o" / "sweep_gauss_shift.csv").read_text().splitlines()) == 2


def test_parallel_sweep_matches_serial(tmp_path):
    serial = _config(tmp_path)
    par = tmp_path / "par.toml"
    par.write_text(serial.read_text().replace("n_projections = 16", "n_projections = 16\nworkers = 2"))
    assert main(["sweep", "--config", str(serial), "--out", str(tmp_path / "s")]) == 0
    assert main(["sweep", "--config", str(par), "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "s" / "sweep_gauss_shift.csv").read_bytes() == (tmp_path / "p" / "sweep_gauss_shift.csv").read_bytes()


def test_verify_in_process(tmp_path, capsys):
    assert main(["verify", "--json", str(tmp_path / "v.json")]) == 0
    report = json.loads((tmp_path / "v.json").read_text())
    assert report["passed"] and all(c["passed"] for c in report["checks"])
    out = capsys.readouterr().out
    assert "seconds" in out and "PASS" in out


def test_verify_mutation_subprocess():
    proc = subprocess.run([sys.executable, "-m", "i2sb.cli", "verify", "--mutate", "ddpm_w1"], capture_output=True, text=True, timeout=120)
    assert proc.returncode == 1
    assert "FAIL" in proc.stdout
