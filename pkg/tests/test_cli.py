import csv
import json
import os
import subprocess
import sys

import pytest

from preytaxis.cli import main

MINIMAL = """\
[basis]
n_modes = 4
[step]
dt = 1e-3
t_end = 0.01
record_every = 5
[ensemble]
n_traj = 2
"""


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text(MINIMAL)
    return p


def test_simulate_writes_trajectories(tmp_path, config, capsys):
    out = tmp_path / "a"
    assert main(["simulate", "--config", str(config), "--out", str(out)]) == 0
    names = sorted(os.listdir(out))
    assert "traj_00000.bin" in names and "traj_00001.bin" in names
    assert {"energy.csv", "positivity.csv", "manifest.json", "simulate_summary.txt"} <= set(names)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["master_seed"] == 0 and manifest["command"] == "simulate"
    assert "traj_00000.bin" in manifest["files"]
    assert "2 trajectories" in capsys.readouterr().out


def test_rerun_is_byte_identical(tmp_path, config):
    for d in ("a", "b"):
        assert main(["simulate", "--config", str(config), "--out", str(tmp_path / d),
                     "--format", "csv"]) == 0
    for name in ("traj_00000.csv", "traj_00001.csv", "energy.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_dt_above_ceiling_refused(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("[step]\ndt = 0.005\nt_end = 0.01\nrecord_every = 1\n")
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "ceiling 0.00225158" in err
    assert not (tmp_path / "o").exists()


def test_m1_below_um_rejected(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("[model]\nM1 = 1.0\n")
    assert main(["verify", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "bad.ini:2 [model.M1]" in capsys.readouterr().err


def test_broken_noise_fails_verify(tmp_path, capsys):
    p = tmp_path / "gamma.ini"
    p.write_text("[noise]\ngamma = 0.25\n")
    code = main(["verify", "--config", str(p), "--out", str(tmp_path / "o"), "--only", "9"])
    assert code == 1
    out = capsys.readouterr().out
    assert "criterion  9 [FAIL]" in out
    with open(tmp_path / "o" / "verify.csv") as fh:
        assert "passed" in fh.read()


def test_verify_single_check_passes(tmp_path, capsys):
    assert main(["verify", "--out", str(tmp_path / "o"), "--only", "10"]) == 0
    assert "criterion 10 [PASS]" in capsys.readouterr().out


def test_verify_bad_selection(tmp_path):
    assert main(["verify", "--out", str(tmp_path / "o"), "--only", "11"]) == 2


def test_stability_and_translate(tmp_path, config):
    out = tmp_path / "s"
    assert main(["stability", "--config", str(config), "--out", str(out)]) == 0
    with open(out / "stability.csv") as fh:
        body = [l for l in fh if not l.startswith("#")]
    assert len(body) == 1 + 3 * 3
    p = tmp_path / "t.ini"
    p.write_text(MINIMAL.replace("record_every = 5", "record_every = 1")
                 + "[reports]\ntranslation_lags = 1, 2, 4\n")
    assert main(["translate", "--config", str(p), "--out", str(tmp_path / "t")]) == 0
    assert (tmp_path / "t" / "translation.csv").exists()


def test_ensemble_command(tmp_path, config):
    out = tmp_path / "e"
    assert main(["ensemble", "--config", str(config), "--out", str(out), "--jobs", "2"]) == 0
    assert not any(n.startswith("traj_") for n in os.listdir(out))


def test_plotdata_counts_and_disjoint_ids(tmp_path, config):
    for seed in ("1", "2"):
        assert main(["simulate", "--config", str(config), "--out", str(tmp_path / seed),
                     "--seed", seed]) == 0
    dest = tmp_path / "tidy.csv"
    assert main(["plotdata", str(tmp_path / "1" / "traj_00000.bin"), "--out", str(dest)]) == 0
    with open(dest) as fh:
        rows = list(csv.DictReader(fh))
    # 3 records x 2 equations x 4 quantities
    assert len(rows) == 24
    assert main(["plotdata", str(tmp_path / "1"), str(tmp_path / "2"), "--out", str(dest)]) == 0
    with open(dest) as fh:
        rows = list(csv.DictReader(fh))
    ids = {r["trajectory"] for r in rows if r["trajectory"]}
    assert ids == {"0", "1", "2", "3"}


def test_plotdata_unknown_file(tmp_path, capsys):
    p = tmp_path / "x.csv"
    p.write_text("hello\n")
    assert main(["plotdata", str(p)]) == 2


def test_console_script_entry():
    res = subprocess.run([sys.executable, "-m", "preytaxis.cli", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("simulate", "verify", "ensemble", "stability", "translate", "plotdata"):
        assert cmd in res.stdout


def test_verify_idempotent(tmp_path):
    for d in ("a", "b"):
        assert main(["verify", "--out", str(tmp_path / d), "--only", "9,10"]) == 0
    for name in ("verify.csv", "verify_summary.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
