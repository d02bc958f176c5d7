import io
import json

import numpy as np
import pytest

from preytaxis import files
from preytaxis.config import SCHEMA, ConfigError, RunConfig
from preytaxis.diagnostics import energy_scan, positivity_scan
from preytaxis.ensemble import run_ensemble

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


def test_defaults_roundtrip():
    cfg = RunConfig()
    again = RunConfig.from_string(cfg.to_ini())
    assert again == cfg
    assert again.content_hash() == cfg.content_hash()
    assert set(cfg.sections()) == set(SCHEMA)
    json.loads(cfg.canonical_json())


def test_minimal_and_overrides():
    cfg = RunConfig.from_string(MINIMAL)
    e = cfg.ensemble
    assert (e.n_modes, e.step.dt, e.n_traj) == (4, 1e-3, 2)
    o = cfg.with_overrides(seed=9, out="here", fmt="csv")
    assert o.ensemble.master_seed == 9 and o.output.directory == "here"
    assert o.output.format == "csv"
    # output location does not change the content hash, the seed does
    assert cfg.with_overrides(out="x").content_hash() == cfg.content_hash()
    assert o.content_hash() != cfg.content_hash()


def test_rectangle_domain():
    cfg = RunConfig.from_string("[domain]\nlengths = 1.0, 2.0\ngrid_points = 32, 32\n")
    assert cfg.ensemble.domain.dim == 2 and cfg.ensemble.domain.volume == 2.0


@pytest.mark.parametrize("text, line, field", [
    ("[model]\nd1 = 0.1\nwhat = 2\n", 3, "model.what"),
    ("[nonsense]\nx = 1\n", 1, "nonsense"),
    ("[model]\nd1 = fast\n", 2, "model.d1"),
    ("[model]\nM1 = 1.0\nu_m = 2.0\n", 2, "model.M1"),
    ("[noise]\n\nshape = cubic\n", 3, "noise.shape"),
    ("[output]\nformat = xml\n", 2, "output.format"),
])
def test_rejections(text, line, field):
    with pytest.raises(ConfigError) as info:
        RunConfig.from_string(text, "x.ini")
    assert info.value.line == line
    assert info.value.field == field
    assert str(info.value).startswith(f"x.ini:{line} [{field}]")


def test_duplicate_key():
    with pytest.raises(ConfigError) as info:
        RunConfig.from_string("[model]\nd1 = 1\nd1 = 2\n", "x.ini")
    assert info.value.line == 3


def small_run(fmt="bin", store=True):
    cfg = RunConfig.from_string(MINIMAL)
    res = run_ensemble(cfg.ensemble, record_increments=store)
    return cfg, res


@pytest.mark.parametrize("fmt", ["bin", "csv"])
def test_trajectory_roundtrip(tmp_path, fmt):
    cfg, res = small_run()
    traj = res.batch[1]
    path = tmp_path / f"t.{fmt}"
    files.write_trajectory(path, traj, cfg.content_hash(), fmt)
    tf = files.read_trajectory(path)
    np.testing.assert_array_equal(tf.times, traj.times)
    np.testing.assert_array_equal(tf.c1, traj.c1)
    np.testing.assert_array_equal(tf.c2, traj.c2)
    np.testing.assert_array_equal(tf.increments, traj.increments)
    assert tf.trajectory == 1 and tf.meta["config_hash"] == cfg.content_hash()
    assert tf.meta["master_seed"] == "0"


def test_unknown_header(tmp_path):
    p = tmp_path / "junk.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(files.UnknownFormatError):
        files.read_trajectory(p)


def test_reports_and_tidy(tmp_path):
    cfg, res = small_run()
    h = cfg.content_hash()
    energy = tmp_path / "energy.csv"
    files.write_report(energy, "energy", files.energy_rows(energy_scan(res.batch)), h, 0)
    meta, rows = files.read_report(energy)
    assert meta["report"] == "energy" and meta["config_hash"] == h
    assert len(rows) == 3 * 2 + 3 * 2
    pos = tmp_path / "pos.csv"
    files.write_report(pos, "positivity", files.positivity_rows(positivity_scan(res.batch)), h, 0)
    t0 = tmp_path / "t0.bin"
    files.write_trajectory(t0, res.batch[0], h)
    tidy = files.tidy_rows([t0, energy])
    traj_rows = [r for r in tidy if r[3] != ""]
    # records x equations x quantities
    assert len(traj_rows) == 3 * 2 * 4
    buf = io.StringIO()
    files.write_tidy(tidy, buf)
    assert buf.getvalue().splitlines()[0] == ",".join(files.TIDY_COLUMNS)


def test_empty_report_is_header_only(tmp_path):
    p = tmp_path / "empty.csv"
    files.write_report(p, "energy", [], "abc", 0)
    assert files.tidy_rows([p]) == []
    buf = io.StringIO()
    files.write_tidy(files.tidy_rows([p]), buf)
    assert buf.getvalue() == ",".join(files.TIDY_COLUMNS) + "\n"
