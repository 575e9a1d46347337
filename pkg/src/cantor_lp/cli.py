"""Command-line front end: build, spectrum, verify, report.

Exit codes: 0 pass, 1 check failure, 2 configuration/input error,
3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, parse_assignment
from .io import csv_text, dumps, read_json, write_csv, write_json
from .measure import ConstructionError, CubeMeasure, construct
from .quadrature import NonConvergenceError
from .rng import substream
from .suite import (
    EXECUTION_FIELDS,
    EXIT_CONFIG,
    EXIT_NONCONVERGENCE,
    EXIT_PASS,
    render_report_plots,
    run_suite,
    write_report,
)
from .tree import GeometryError

log = logging.getLogger("cantor_lp")


def load_config(args) -> RunConfig:
    """Defaults < config file < --set assignments < dedicated flags."""
    cfg = RunConfig.load(args.config) if args.config else RunConfig.from_dict({})
    sets = dict(parse_assignment(s) for s in args.set or [])
    flags = {"seed": args.seed, "jobs": args.jobs, "output_dir": args.out}
    sets.update({k: v for k, v in flags.items() if v is not None})
    return cfg.with_overrides(**sets)


def _effective(cfg: RunConfig) -> dict:
    doc = cfg.to_json()
    for k in EXECUTION_FIELDS:
        doc.pop(k, None)
    return doc


# -- subcommands -----------------------------------------------------------------------


def cmd_build(args) -> int:
    cfg = load_config(args)
    kw = dict(cfg.selection)
    kw.setdefault("spec", cfg.quadrature_spec())
    try:
        con = construct(cfg.sequence(), cfg.seed, select=cfg.select, selection_kw=kw)
    except GeometryError as e:
        raise ConfigError(str(e)) from e
    out = Path(cfg.output_dir)
    write_json(out / "tree.json", con.tree.to_json())
    write_json(out / "measure.json", con.measure.to_json())
    write_json(out / "shifts.json", con.sample.to_json())
    write_json(out / "config.json", _effective(cfg))
    print(f"built K={cfg.K}: {len(con.tree)} vertices, {len(con.measure)} atoms -> {out}")
    return EXIT_PASS


def _frequencies(args, d: int) -> np.ndarray:
    if args.random is not None:
        rng = substream(args.seed or 0, "spectrum")
        return rng.uniform(-args.radius, args.radius, (args.random, d))
    try:
        lo, hi, n = args.grid.split(":")
        axis = np.linspace(float(lo), float(hi), int(n))
    except ValueError as e:
        raise ConfigError(f"--grid must be lo:hi:n, got {args.grid!r}") from e
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def cmd_spectrum(args) -> int:
    try:
        mu = CubeMeasure.from_json(read_json(args.measure))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read measure file {args.measure}: {e}") from e
    except ValueError as e:
        raise ConfigError(f"{args.measure}: {e}") from e
    spec = mu.spectrum()
    xi = _frequencies(args, mu.d)
    val = spec(xi)
    env = spec.envelope(xi)
    names = ["xi"] if mu.d == 1 else [f"xi_{j + 1}" for j in range(mu.d)]
    rows = []
    for i in range(len(xi)):
        row = dict(zip(names, map(float, xi[i])))
        row.update(re=float(val[i].real), im=float(val[i].imag), abs=float(abs(val[i])), envelope=float(env[i]))
        rows.append(row)
    columns = names + ["re", "im", "abs", "envelope"]
    if args.out:
        path = Path(args.out) / f"spectrum.{args.format}"
        write_csv(path, rows, columns) if args.format == "csv" else write_json(path, rows)
        print(f"{len(rows)} frequencies -> {path}")
    else:
        sys.stdout.write(csv_text(rows, columns) if args.format == "csv" else dumps(rows))
    return EXIT_PASS


def cmd_verify(args) -> int:
    cfg = load_config(args)
    if args.check:
        cfg = cfg.with_suite(args.check)
    report = run_suite(cfg)
    out = Path(cfg.output_dir)
    write_report(report, out, fmt=args.format, plots=cfg.plots and not args.no_plots)
    for r, o in zip(report.results, report.outcomes):
        print(f"{r.status.upper():13s} {r.name:28s} {o.seconds:7.1f}s  {_headline(r.measured)}")
    c = report.counts()
    print(f"{c['pass']} pass, {c['fail']} fail, {c['inconclusive']} inconclusive, "
          f"{c['skip']} skip, {c['error']} error -> {out / 'report.json'}")
    return report.exit_code


def _headline(measured: dict, limit: int = 3) -> str:
    parts = []
    flat = {}
    for k, v in measured.items():
        if isinstance(v, dict):  # one level of nesting, e.g. per distribution
            flat.update({f"{k}.{kk}": vv for kk, vv in v.items()})
        else:
            flat[k] = v
    for k, v in flat.items():
        if isinstance(v, float):
            parts.append(f"{k}={v:.4g}")
        elif isinstance(v, (int, bool)):
            parts.append(f"{k}={v}")
        if len(parts) == limit:
            break
    return " ".join(parts)


def cmd_report(args) -> int:
    out = Path(args.out or "out")
    try:
        doc = read_json(out / "report.json")
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"no readable report.json in {out}: {e}") from e
    paths = render_report_plots(doc, out / "figures", ("svg", "png"))
    rows = [{"name": c["name"], "kind": c["kind"], "status": c["status"], "headline": _headline(c["measured"])}
            for c in doc["checks"]]
    summary = out / f"summary.{args.format}"
    write_csv(summary, rows) if args.format == "csv" else write_json(summary, rows)
    for r in rows:
        print(f"{r['status'].upper():13s} {r['name']:28s} {r['headline']}")
    print(f"{len(paths)} figures -> {out / 'figures'}; summary -> {summary}")
    return EXIT_PASS


# -- entry point -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="unsigned 64-bit run seed")
    common.add_argument("--jobs", type=int, help="concurrent checks")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a scalar config field")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="cantor-lp", description="Random Cantor measures and L_p norms of their transforms.")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("build", parents=[common], help="build tree, realize the measure, write JSON artifacts")
    sp = sub.add_parser("spectrum", parents=[common], help="evaluate the transform of a measure file")
    sp.add_argument("measure", help="measure.json written by build")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--grid", default="-20:20:401", help="per-axis grid lo:hi:n (tensor product for d > 1)")
    g.add_argument("--random", type=int, metavar="N", help="N random frequencies instead of a grid")
    sp.add_argument("--radius", type=float, default=50.0, help="box half-width for --random")
    vp = sub.add_parser("verify", parents=[common], help="run the check suite")
    vp.add_argument("--no-plots", action="store_true", help="skip the scaling figures")
    vp.add_argument("--check", action="append", metavar="NAME", help="run only these checks (repeatable)")
    sub.add_parser("report", parents=[common], help="render figures and a summary from a verify run")
    return ap


COMMANDS = {"build": cmd_build, "spectrum": cmd_spectrum, "verify": cmd_verify, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ConstructionError as e:
        print(f"construction failed: {e}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except NonConvergenceError as e:
        print(f"non-convergence: {e}", file=sys.stderr)
        return EXIT_NONCONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
