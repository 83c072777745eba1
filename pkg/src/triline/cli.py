"""Command-line entry point.

Exit codes: 0 success, 2 invalid input or usage, 3 runtime failure. Results go to
standard output as comma-separated text; diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import transport
from .diagnostics import chemical_affinities, junction_checks, young_laplace
from .dynamics import run
from .energy import decay_certificate
from .errors import ParseError, TrilineError, ValidationError
from .io import load_checkpoint, output_dir, read_timeseries, run_to_dir
from .scenario import build_state, list_presets, load_scenario, resolve_path
from .thermo import eos_scan

log = logging.getLogger("triline")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
GD_TOL = 1e-8


def _writer():
    return csv.writer(sys.stdout, lineterminator="\n")


def _load(name):
    path = resolve_path(name)
    return load_scenario(path), path


def cmd_run(args) -> int:
    if args.resume:
        cfg, text = load_checkpoint(args.resume)[0], None
    elif args.scenario:
        cfg, path = _load(args.scenario)
        text = Path(path).read_text()
    else:
        print("error: give a scenario or --resume", file=sys.stderr)
        return EXIT_INVALID
    out = Path(args.out) if args.out else output_dir(Path("out") / cfg.name)
    try:
        summary, ts, snaps = run_to_dir(cfg, out, checkpoint_every=args.checkpoint_every, resume=args.resume,
                                        config_text=text)
    except TrilineError as exc:
        ck = getattr(exc, "checkpoint", None)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if ck:
            print(f"checkpoint: {ck}", file=sys.stderr)
        return EXIT_RUNTIME
    w = _writer()
    w.writerow(["key", "value"])
    w.writerow(["scenario", cfg.name])
    w.writerow(["reason", summary.reason])
    w.writerow(["steps", summary.steps])
    w.writerow(["t", repr(summary.state.t)])
    w.writerow(["timeseries", str(ts)])
    w.writerow(["snapshots", len(snaps)])
    return EXIT_OK


def _study(name_refs):
    name, refs = name_refs
    return transport.study(name, refs)


def cmd_verify_transport(args) -> int:
    names = [args.case] if args.case else list(transport.CATALOG)
    unknown = [n for n in names if n not in transport.CATALOG]
    if unknown:
        print(f"error: unknown case {unknown[0]!r}; known: {', '.join(transport.CATALOG)}", file=sys.stderr)
        return EXIT_INVALID
    if args.refinements < 1:
        print("error: --refinements must be at least 1", file=sys.stderr)
        return EXIT_INVALID
    jobs = [(n, args.refinements) for n in names]
    try:
        if args.jobs > 1:
            with ProcessPoolExecutor(args.jobs) as pool:
                studies = [s for chunk in pool.map(_study, jobs) for s in chunk]
        else:
            studies = [s for job in jobs for s in _study(job)]
    except TrilineError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    sys.stdout.write(transport.studies_csv(studies))
    failed = [s.name for s in studies if not s.passed]
    for s in studies:
        tag = "exact" if s.exact else f"fitted order {s.fitted_order:.3f}"
        print(f"{s.name}: {'ok' if s.passed else 'FAILED'} ({tag})", file=sys.stderr)
    if failed:
        print(f"error: {len(failed)} case(s) did not meet the convergence target", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_check_eos(args) -> int:
    cfg, _ = _load(args.scenario)
    w = _writer()
    w.writerow(["eos", "kind", "samples", "rho_lo", "rho_hi", "worst_gd_residual", "mu_increasing", "ok"])
    bad = 0
    entries = [(f"bulk.{p}", e) for p, e in cfg.bulk_eos.items()] + [(f"surface.{c}", e) for c, e in cfg.surface_eos.items()]
    for name, eos in entries:
        scan = eos_scan(eos, n=args.samples)
        ok = scan.worst_residual <= GD_TOL and scan.monotone_mu
        bad += not ok
        w.writerow([name, name.split(".")[0], scan.n, "%.6g" % scan.lo, "%.6g" % scan.hi,
                    "%.3e" % scan.worst_residual, scan.monotone_mu, ok])
    if bad:
        print(f"error: {bad} equation(s) of state failed the consistency scan", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def cmd_equilibrium(args) -> int:
    cfg, _ = _load(args.scenario)
    state, model, settings = build_state(cfg)
    if args.t_end is not None:
        settings.t_end = args.t_end
    try:
        summary = run(state, model, settings)
    except TrilineError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if not summary.converged:
        print(f"warning: stopped by {summary.reason} at t={summary.state.t:.6g} before converging", file=sys.stderr)
    s = summary.state
    w = _writer()
    w.writerow(["quantity", "id", "value"])
    w.writerow(["t", "", repr(s.t)])
    w.writerow(["converged", "", summary.converged])
    for jc in junction_checks(s, model):
        for k, a in enumerate(jc.angles):
            w.writerow([f"angle_{k}", jc.junction, "%.6f" % a])
        w.writerow(["kirchhoff_rel", jc.junction, "%.3e" % jc.kirchhoff_rel])
    for lc in young_laplace(s, model):
        w.writerow(["pressure_jump", lc.curve, "%.10g" % lc.jump])
        w.writerow(["gamma_kappa", lc.curve, "%.10g" % lc.gamma_kappa])
        w.writerow(["young_laplace_rel", lc.curve, "%.3e" % lc.rel_error])
    aff = chemical_affinities(s, model)
    for k, v in aff.sorption.items():
        w.writerow(["sorption_affinity", k, "%.3e" % v])
    for k, v in aff.junction.items():
        w.writerow(["junction_affinity", k, "%.3e" % v])
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.csv)
    if not path.exists():
        print(f"error: no such file {path}", file=sys.stderr)
        return EXIT_INVALID
    try:
        rows = read_timeseries(path)
    except (KeyError, ValueError) as exc:
        print(f"error: {path} is not a time-series file ({exc})", file=sys.stderr)
        return EXIT_INVALID
    if len(rows) < 3:
        print("error: need at least three rows", file=sys.stderr)
        return EXIT_INVALID
    rep = decay_certificate(rows)
    w = _writer()
    w.writerow(["key", "value"])
    w.writerow(["rows", rep.n_rows])
    w.writerow(["t_first", repr(rows[0]["t"])])
    w.writerow(["t_last", repr(rows[-1]["t"])])
    w.writerow(["E_first", repr(rows[0]["E_total"])])
    w.writerow(["E_last", repr(rows[-1]["E_total"])])
    w.writerow(["monotone", rep.monotone])
    w.writerow(["worst_violation", "%.3e" % rep.worst_violation])
    w.writerow(["budget_mismatch", "%.3e" % rep.budget_mismatch])
    w.writerow(["min_channel", "%.3e" % rep.min_channel])
    m = np.array([r["M_total"] for r in rows])
    w.writerow(["mass_drift_rel", "%.3e" % (np.max(np.abs(m - m[0])) / abs(m[0]))])
    if args.svg:
        from .plotting import render_report

        prefix = path.with_suffix("")
        for p in render_report(rows, prefix):
            w.writerow(["svg", str(p)])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="triline", description="Sharp-interface three-phase simulator.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("run", help="run a scenario and write CSV output")
    p.add_argument("scenario", nargs="?", help=f"scenario file or preset ({', '.join(list_presets())})")
    p.add_argument("--out", help="output directory (default $TRILINE_OUT or out/<name>)")
    p.add_argument("--checkpoint-every", type=int, default=0, metavar="N")
    p.add_argument("--resume", metavar="CKPT", help="continue from a checkpoint file (scenario not needed)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify-transport", help="refinement study of the transport identities")
    p.add_argument("--case", help="single catalog case")
    p.add_argument("--refinements", type=int, default=3, metavar="N")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_verify_transport)

    p = sub.add_parser("check-eos", help="Gibbs-Duhem and monotonicity scan of a scenario's EOS")
    p.add_argument("scenario")
    p.add_argument("--samples", type=int, default=100)
    p.set_defaults(func=cmd_check_eos)

    p = sub.add_parser("equilibrium", help="run to convergence and print equilibrium residuals")
    p.add_argument("scenario")
    p.add_argument("--t-end", type=float, help="override the scenario end time")
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("report", help="summarise a timeseries.csv")
    p.add_argument("csv")
    p.add_argument("--svg", action="store_true", help="also write energy and dissipation charts")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
