"""Command-line entry point: ``preytaxis <command> [options]``.

Commands
--------
simulate   integrate the ensemble and write one trajectory file per path
ensemble   integrate the ensemble and write the selected reports only
stability  paired runs over the configured initial gaps
translate  time-translation statistic over the configured lags
verify     run the acceptance checks; exit status 1 if any fails
plotdata   convert trajectory and report files into one long-format CSV

Exit status is 2 for configuration or input errors.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import files
from .checks import Verifier
from .config import ConfigError, RunConfig
from .diagnostics import energy_scan, positivity_scan, translation_scan
from .ensemble import InadmissibleInitialCondition, run_ensemble, stability_sweep
from .galerkin import IntegrationDiverged, StepSizeError


def _common(p):
    p.add_argument("--config", help="INI run configuration (defaults if omitted)")
    p.add_argument("--out", help="output directory (overrides [output] directory)")
    p.add_argument("--seed", type=int, help="master seed (overrides [ensemble] master_seed)")
    p.add_argument("--format", choices=("csv", "bin"), help="trajectory file format")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")


def build_parser():
    parser = argparse.ArgumentParser(prog="preytaxis", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("simulate", "write trajectory files"),
                       ("ensemble", "write ensemble reports"),
                       ("stability", "paired-run stability sweep"),
                       ("translate", "time-translation statistic"),
                       ("verify", "run the acceptance checks")):
        p = sub.add_parser(name, help=text)
        _common(p)
        if name == "verify":
            p.add_argument("--only", help="comma-separated criterion numbers to run")
    p = sub.add_parser("plotdata", help="long-format CSV for plotting")
    p.add_argument("paths", nargs="+", help="trajectory/report files or directories")
    p.add_argument("--out", help="output CSV (default: standard output)")
    return parser


def load_config(args):
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    return cfg.with_overrides(seed=args.seed, out=args.out, fmt=args.format)


def _prepare(cfg):
    """Validate the step against the ceiling before any compute; make the directory."""
    e = cfg.ensemble
    e.step.check(e.system())
    e.initial()
    os.makedirs(cfg.output.directory, exist_ok=True)
    return cfg.output.directory


def _meta(cfg):
    return cfg.content_hash(), int(cfg.ensemble.master_seed)


def _write_reports(cfg, batch, out, written):
    h, seed = _meta(cfg)
    rep = cfg.reports
    lines = []
    if rep.energy:
        er = energy_scan(batch, rep.moment_q)
        path = os.path.join(out, "energy.csv")
        files.write_report(path, "energy", files.energy_rows(er), h, seed,
                           {"moment_q": rep.moment_q})
        written.append(path)
        lines.append(f"E sup ||u||^2 = {_pair(er.sup_l2_sq)}, "
                     f"E int ||grad u||^2 = {_pair(er.grad_energy)}")
    if rep.positivity:
        pr = positivity_scan(batch, rep.stampacchia_eps)
        path = os.path.join(out, "positivity.csv")
        files.write_report(path, "positivity", files.positivity_rows(pr), h, seed,
                           {"stampacchia_eps": rep.stampacchia_eps})
        written.append(path)
        lines.append(f"max negative mass {_pair(pr.neg_mass_sq.max(0))}, "
                     f"max excess mass {_pair(pr.excess_mass_sq.max(0))}")
    if rep.translation:
        deltas = np.array(rep.translation_lags) * (batch.dt * batch.record_every)
        tr = translation_scan(batch, deltas)
        path = os.path.join(out, "translation.csv")
        files.write_report(path, "translation", files.translation_rows(tr), h, seed,
                           {"fitted_exponent": tr.fitted_exponent.tolist()})
        written.append(path)
        lines.append(f"translation exponents {_pair(tr.fitted_exponent)}")
    return lines


def _pair(v):
    return "(" + ", ".join(f"{x:.6g}" for x in np.ravel(v)) + ")"


def _finish(cfg, out, command, written, lines, extra=None):
    summary = os.path.join(out, f"{command}_summary.txt")
    h, seed = _meta(cfg)
    head = [f"preytaxis {command}", f"config_hash: {h}", f"master_seed: {seed}"]
    with open(summary, "w", encoding="utf-8") as fh:
        fh.write("\n".join(head + lines) + "\n")
    files.write_manifest(out, cfg, command, written + [summary], extra)
    print("\n".join(lines))
    print(f"wrote {len(written) + 2} files to {out}")


def cmd_simulate(cfg, jobs):
    out = _prepare(cfg)
    res = run_ensemble(cfg.ensemble, jobs, record_increments=cfg.output.store_increments,
                       q=cfg.reports.moment_q)
    h, _ = _meta(cfg)
    fmt = cfg.output.format
    written = []
    for traj in res.batch:
        path = os.path.join(out, f"traj_{traj.index:05d}.{fmt}")
        files.write_trajectory(path, traj, h, fmt)
        written.append(path)
    lines = [f"{len(res.batch)} trajectories, {len(res.batch.times)} records each"]
    lines += _write_reports(cfg, res.batch, out, written)
    _finish(cfg, out, "simulate", written, lines)
    return 0


def cmd_ensemble(cfg, jobs):
    out = _prepare(cfg)
    res = run_ensemble(cfg.ensemble, jobs, q=cfg.reports.moment_q)
    written = []
    lines = [f"{len(res.batch)} trajectories"] + _write_reports(cfg, res.batch, out, written)
    _finish(cfg, out, "ensemble", written, lines)
    return 0


def cmd_stability(cfg, jobs):
    out = _prepare(cfg)
    st = cfg.stability
    results = stability_sweep(cfg.ensemble, st.eps_ic, st.direction, jobs)
    h, seed = _meta(cfg)
    path = os.path.join(out, "stability.csv")
    files.write_report(path, "stability", files.stability_rows(results), h, seed,
                       {"direction": st.direction})
    lines = [f"eps_ic={r.eps_ic:g}: lhs={r.lhs:.6g} rhs={r.rhs:.6g} ratio={r.ratio:.6g}"
             for r in results]
    _finish(cfg, out, "stability", [path], lines)
    return 0


def cmd_translate(cfg, jobs):
    out = _prepare(cfg)
    res = run_ensemble(cfg.ensemble, jobs)
    b = res.batch
    deltas = np.array(cfg.reports.translation_lags) * (b.dt * b.record_every)
    tr = translation_scan(b, deltas)
    h, seed = _meta(cfg)
    path = os.path.join(out, "translation.csv")
    files.write_report(path, "translation", files.translation_rows(tr), h, seed,
                       {"fitted_exponent": tr.fitted_exponent.tolist()})
    lines = [f"delta={d:g}: {_pair(tr.stat[k])}" for k, d in enumerate(tr.deltas)]
    lines.append(f"fitted exponents {_pair(tr.fitted_exponent)}")
    _finish(cfg, out, "translate", [path], lines)
    return 0


def cmd_verify(cfg, jobs, only=None):
    out = _prepare(cfg)
    numbers = None
    if only:
        numbers = [int(v) for v in only.replace(",", " ").split()]
        bad = [k for k in numbers if not 1 <= k <= 10]
        if bad:
            raise ConfigError(f"no criterion {bad[0]}", "--only")
    verifier = Verifier(cfg.ensemble, cfg.verify, jobs)
    results = verifier.run(numbers, callback=lambda r: print(r.line(), flush=True))
    h, seed = _meta(cfg)
    path = os.path.join(out, "verify.csv")
    files.write_report(path, "verify", [(r.number, "passed", 0, int(r.passed), "")
                                        for r in results], h, seed)
    lines = [r.line() for r in results]
    failed = [r.number for r in results if not r.passed]
    lines.append("all checks passed" if not failed else f"failed: {failed}")
    with open(os.path.join(out, "verify_summary.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join([f"config_hash: {h}", f"master_seed: {seed}"] + lines) + "\n")
    files.write_manifest(out, cfg, "verify", [path, os.path.join(out, "verify_summary.txt")],
                         {"failed": failed})
    print(lines[-1])
    return 1 if failed else 0


def _expand(paths):
    out = []
    for p in paths:
        if os.path.isdir(p):
            for name in sorted(os.listdir(p)):
                full = os.path.join(p, name)
                if name.endswith((".bin", ".csv")) and _has_header(full):
                    out.append(full)
        else:
            out.append(p)
    return out


def _has_header(path):
    with open(path, "rb") as fh:
        first = fh.readline().rstrip(b"\n").decode("utf-8", "replace")
    return first in (files.TRAJECTORY_MAGIC, files.REPORT_MAGIC)


def cmd_plotdata(paths, out=None):
    rows = files.tidy_rows(_expand(paths))
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            files.write_tidy(rows, fh)
    else:
        files.write_tidy(rows, sys.stdout)
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plotdata":
            return cmd_plotdata(args.paths, args.out)
        cfg = load_config(args)
        if args.command == "verify":
            return cmd_verify(cfg, args.jobs, args.only)
        handler = {"simulate": cmd_simulate, "ensemble": cmd_ensemble,
                   "stability": cmd_stability, "translate": cmd_translate}[args.command]
        return handler(cfg, args.jobs)
    except (ConfigError, StepSizeError, InadmissibleInitialCondition,
            files.UnknownFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except IntegrationDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
