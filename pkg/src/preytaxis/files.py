"""On-disk formats: trajectory files, report tables, manifests and tidy plot data.

Every file starts with a plain-text header of ``# key: value`` lines, opened
by a format line (``# preytaxis-trajectory v1`` or ``# preytaxis-report v1``)
and closed by ``# end-header``.  The header always carries the config hash
and the master seed.

Trajectory body, ``bin`` format
    ``n_records`` records of ``1 + 2*n_modes`` little-endian float64 values
    ``(time, c1..., c2...)``, followed by ``n_increments`` blocks of
    ``2*n_noise_modes`` values ``(dW1..., dW2...)`` when increments are kept.
Trajectory body, ``csv`` format
    A column line ``kind,index,time,v0,v1,...`` then one row per record
    (``kind=state``) and per step (``kind=inc``), floats written in
    round-trip precision.
Report body
    CSV with columns ``index,quantity,equation,value,stderr``.  ``index`` is a
    time, a ``delta``, an ``eps_ic`` or a criterion number depending on the
    report; ``equation`` is ``1`` or ``2`` (``0`` for totals).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from dataclasses import dataclass

import numpy as np

TRAJECTORY_MAGIC = "# preytaxis-trajectory v1"
REPORT_MAGIC = "# preytaxis-report v1"
END = "# end-header"
REPORT_COLUMNS = ("index", "quantity", "equation", "value", "stderr")
TIDY_COLUMNS = ("time", "quantity", "equation", "trajectory", "value")
FORMAT_VERSION = 1


class UnknownFormatError(ValueError):
    """A file without a recognised preytaxis header."""


def _header_text(magic, meta):
    lines = [magic] + [f"# {k}: {_meta_value(v)}" for k, v in meta.items()] + [END]
    return "\n".join(lines) + "\n"


def _meta_value(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(repr(float(x)) if isinstance(x, float) else str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_header(fh):
    """Parse the header of an open binary file; returns ``(kind, meta)``."""
    first = fh.readline().decode("utf-8", "replace").rstrip("\n")
    if first == TRAJECTORY_MAGIC:
        kind = "trajectory"
    elif first == REPORT_MAGIC:
        kind = "report"
    else:
        raise UnknownFormatError(f"unrecognised file header {first[:60]!r}")
    meta = {}
    while True:
        line = fh.readline()
        if not line:
            raise UnknownFormatError("header is not terminated")
        text = line.decode("utf-8").rstrip("\n")
        if text == END:
            return kind, meta
        if not text.startswith("# ") or ":" not in text:
            raise UnknownFormatError(f"malformed header line {text!r}")
        key, _, value = text[2:].partition(":")
        meta[key.strip()] = value.strip()


# -- trajectories -------------------------------------------------------------

@dataclass
class TrajectoryFile:
    meta: dict
    times: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    increments: np.ndarray | None

    @property
    def lengths(self):
        return tuple(float(v) for v in self.meta["lengths"].split())

    @property
    def trajectory(self):
        return int(self.meta["trajectory"])


def trajectory_meta(traj, config_hash, fmt, lengths, grid_points):
    n_inc = 0 if traj.increments is None else len(traj.increments)
    return {
        "config_hash": config_hash,
        "master_seed": traj.master_seed,
        "trajectory": traj.index,
        "dt": float(traj.dt),
        "record_every": traj.record_every,
        "n_records": len(traj.times),
        "n_modes": traj.c1.shape[-1],
        "n_noise_modes": traj.system.noise.n_noise_modes,
        "lengths": tuple(float(v) for v in lengths),
        "grid_points": tuple(int(v) for v in grid_points),
        "format": fmt,
        "n_increments": n_inc,
    }


def write_trajectory(path, traj, config_hash, fmt="bin"):
    """Write one :class:`~preytaxis.galerkin.Trajectory` to ``path``."""
    dom = traj.system.basis.domain
    meta = trajectory_meta(traj, config_hash, fmt, dom.lengths, dom.grid_points)
    states = np.column_stack([traj.times, traj.c1, traj.c2])
    inc = None
    if traj.increments is not None:
        inc = np.asarray(traj.increments).reshape(len(traj.increments), -1)
    with open(path, "wb") as fh:
        fh.write(_header_text(TRAJECTORY_MAGIC, meta).encode())
        if fmt == "bin":
            fh.write(states.astype("<f8").tobytes())
            if inc is not None:
                fh.write(inc.astype("<f8").tobytes())
        elif fmt == "csv":
            width = max(states.shape[1] - 1, 0 if inc is None else inc.shape[1])
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["kind", "index", "time"] + [f"v{j}" for j in range(width)])
            for r, row in enumerate(states):
                w.writerow(["state", r] + [repr(float(v)) for v in row])
            if inc is not None:
                for s, row in enumerate(inc):
                    w.writerow(["inc", s, repr(s * float(traj.dt))] + [repr(float(v)) for v in row])
            fh.write(buf.getvalue().encode())
        else:
            raise ValueError(f"unknown trajectory format {fmt!r}")


def read_trajectory(path):
    """Read a trajectory file written by :func:`write_trajectory`."""
    with open(path, "rb") as fh:
        kind, meta = read_header(fh)
        if kind != "trajectory":
            raise UnknownFormatError(f"{path} is a {kind} file, not a trajectory")
        body = fh.read()
    n = int(meta["n_modes"])
    R = int(meta["n_records"])
    S = int(meta["n_increments"])
    K = int(meta["n_noise_modes"])
    if meta["format"] == "bin":
        data = np.frombuffer(body, dtype="<f8")
        states = data[:R * (1 + 2 * n)].reshape(R, 1 + 2 * n)
        inc = data[R * (1 + 2 * n):].reshape(S, 2, K) if S else None
    elif meta["format"] == "csv":
        rows = list(csv.reader(io.StringIO(body.decode())))[1:]
        st = [r for r in rows if r[0] == "state"]
        states = np.array([[float(v) for v in r[2:3 + 2 * n]] for r in st]).reshape(R, 1 + 2 * n)
        inc_rows = [r for r in rows if r[0] == "inc"]
        inc = (np.array([[float(v) for v in r[3:3 + 2 * K]] for r in inc_rows]).reshape(S, 2, K)
               if S else None)
    else:
        raise UnknownFormatError(f"unknown body format {meta['format']!r}")
    return TrajectoryFile(meta, states[:, 0].copy(), states[:, 1:1 + n].copy(),
                          states[:, 1 + n:].copy(), None if inc is None else inc.copy())


# -- reports ------------------------------------------------------------------

def write_report(path, report, rows, config_hash, master_seed, extra=None):
    """Write rows ``(index, quantity, equation, value, stderr)`` as a report table."""
    meta = {"report": report, "config_hash": config_hash, "master_seed": master_seed}
    meta.update(extra or {})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for index, quantity, equation, value, stderr in rows:
        w.writerow([_num(index), quantity, int(equation), _num(value), _num(stderr)])
    with open(path, "wb") as fh:
        fh.write(_header_text(REPORT_MAGIC, meta).encode())
        fh.write(buf.getvalue().encode())


def _num(v):
    if v is None or v == "":
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def read_report(path):
    """``(meta, rows)`` of a report table; rows are dicts keyed by column."""
    with open(path, "rb") as fh:
        kind, meta = read_header(fh)
        if kind != "report":
            raise UnknownFormatError(f"{path} is a {kind} file, not a report")
        body = fh.read().decode()
    rows = list(csv.DictReader(io.StringIO(body)))
    return meta, rows


def energy_rows(rep):
    rows = []
    for r, t in enumerate(rep.times):
        for i in range(2):
            rows.append((t, "mean_l2_sq", i + 1, rep.mean_l2_sq_at[r, i], rep.mean_l2_sq_se[r, i]))
    T = rep.times[-1]
    for name, se in (("sup_l2_sq", "sup_l2_sq_se"), ("grad_energy", "grad_energy_se"),
                     ("moment_q", "moment_q_se")):
        for i in range(2):
            rows.append((T, name, i + 1, getattr(rep, name)[i], getattr(rep, se)[i]))
    return rows


def positivity_rows(rep):
    rows = []
    for r, t in enumerate(rep.times):
        for i in range(2):
            rows += [(t, "neg_mass_sq", i + 1, rep.neg_mass_sq[r, i], rep.neg_se[r, i]),
                     (t, "excess_mass_sq", i + 1, rep.excess_mass_sq[r, i], rep.excess_se[r, i]),
                     (t, "neg_smoothed", i + 1, rep.neg_smoothed[r, i], ""),
                     (t, "excess_smoothed", i + 1, rep.excess_smoothed[r, i], "")]
    return rows


def translation_rows(rep):
    return [(d, "translation_stat", i + 1, rep.stat[k, i], rep.stat_se[k, i])
            for k, d in enumerate(rep.deltas) for i in range(2)]


def stability_rows(results):
    rows = []
    for res in results:
        rows += [(res.eps_ic, "lhs", 0, res.lhs, res.lhs_se),
                 (res.eps_ic, "rhs", 0, res.rhs, ""),
                 (res.eps_ic, "ratio", 0, res.ratio, res.ratio_se)]
    return rows


# -- manifest -----------------------------------------------------------------

def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(directory, run_config, command, files, extra=None):
    """``manifest.json`` with the config echo, seeds and file digests."""
    e = run_config.ensemble
    data = {
        "format_version": FORMAT_VERSION,
        "command": command,
        "config_hash": run_config.content_hash(),
        "master_seed": int(e.master_seed),
        "seeds": {"rule": "philox key from (master_seed, trajectory, equation, mode)",
                  "trajectories": list(range(int(e.n_traj)))},
        "config": json.loads(run_config.canonical_json()),
        "files": {os.path.basename(f): file_digest(f) for f in files},
    }
    data.update(extra or {})
    path = os.path.join(directory, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _json_default(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialise {type(v).__name__}")


# -- tidy plot data -----------------------------------------------------------

def trajectory_quantities(tf):
    """Per-record ``mean``, ``l2``, ``h1_semi`` and ``h1_dual`` for both species."""
    from .spectral import Domain, build_basis

    grid = tuple(int(v) for v in tf.meta["grid_points"].split())
    basis = build_basis(Domain(tf.lengths, grid), int(tf.meta["n_modes"]))
    lam = basis.eigenvalues
    e0 = basis.values[0, 0]
    out = {}
    for i, c in enumerate((tf.c1, tf.c2), start=1):
        out[("mean", i)] = c[:, 0] * e0
        out[("l2", i)] = np.sqrt(np.sum(c**2, -1))
        out[("h1_semi", i)] = np.sqrt(np.sum(lam * c**2, -1))
        out[("h1_dual", i)] = np.sqrt(np.sum(c**2 / (1 + lam), -1))
    return out


def tidy_rows(paths):
    """Long-format rows ``(time, quantity, equation, trajectory, value)``.

    Trajectory ids are made disjoint across runs: files sharing
    ``(config_hash, master_seed)`` belong to one run, and each new run is
    shifted past the largest id of the runs before it.  Report rows carry an
    empty trajectory field.
    """
    loaded = []
    for p in paths:
        with open(p, "rb") as fh:
            kind, _ = read_header(fh)
        loaded.append((kind, read_trajectory(p) if kind == "trajectory" else read_report(p)))
    runs, top = {}, {}
    for kind, obj in loaded:
        if kind == "trajectory":
            key = (obj.meta["config_hash"], obj.meta["master_seed"])
            top[key] = max(top.get(key, -1), obj.trajectory)
    offset = 0
    for key, hi in top.items():
        runs[key] = offset
        offset += hi + 1
    rows = []
    for kind, obj in loaded:
        if kind == "trajectory":
            tid = runs[(obj.meta["config_hash"], obj.meta["master_seed"])] + obj.trajectory
            q = trajectory_quantities(obj)
            for r, t in enumerate(obj.times):
                for (name, eq), vals in q.items():
                    rows.append((t, name, eq, tid, vals[r]))
        else:
            meta, table = obj
            for row in table:
                rows.append((row["index"], row["quantity"], row["equation"], "", row["value"]))
    return rows


def write_tidy(rows, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TIDY_COLUMNS)
    for t, name, eq, tid, value in rows:
        w.writerow([t if isinstance(t, str) else repr(float(t)), name, eq, tid,
                    value if isinstance(value, str) else repr(float(value))])
