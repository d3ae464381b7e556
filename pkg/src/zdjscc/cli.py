"""Command-line driver: design, sweep, compare, simulate.

Exit codes: 0 success, 1 ordering violation found by compare, 2 bad
configuration or arguments, 3 numerical failure.
"""
import argparse
import csv
import math
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__, kernels
from .encoder_design import PiecewiseConstantMapping
from .experiment import ConfigError, build_all, build_at_snr, config_to_parser, read_config
from .math_kernel import DEFAULT_TOL, NumericalError
from .mc_sim import simulate
from .noe_optimizer import write_trace_csv

SWEEP_COLUMNS = ["gamma_db", "power", "criterion", "scheme", "value", "mc_value", "mc_std_error"]


class AlignmentError(ValueError):
    pass


def _fmt(x):
    return repr(float(x))


def _tag(des, k):
    if des.target_db is not None:
        return f"g{des.target_db:+g}dB"
    return f"lam{k}"


def _safe(scheme):
    return scheme.replace(":", "")


def write_manifest(path, cfg, command):
    cp = config_to_parser(cfg)
    cp["run"] = {
        "command": command,
        "package_version": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
        "kernel_backend": kernels.backend_name(),
        "root_abs": repr(DEFAULT_TOL.root_abs),
        "quad_rel": repr(DEFAULT_TOL.quad_rel),
        "search_abs": repr(DEFAULT_TOL.search_abs),
    }
    with open(path, "w") as fh:
        cp.write(fh)


def _write_mapping(des, path, cfg):
    m = des.mapping
    if isinstance(m, PiecewiseConstantMapping):
        m.to_csv(path, cfg.grid())
    else:
        m.to_csv(path)


def cmd_design(cfg, out):
    os.makedirs(out, exist_ok=True)
    rows = []
    for scheme in cfg.schemes:
        for k, des in enumerate(build_all(scheme, cfg)):
            tag = f"{_safe(scheme)}_{_tag(des, k)}"
            _write_mapping(des, os.path.join(out, f"mapping_{tag}.csv"), cfg)
            des.table.to_csv(os.path.join(out, f"decoder_{tag}.csv"), des.link)
            if des.trace:
                write_trace_csv(os.path.join(out, f"trace_{tag}.csv"), des.trace)
            rows.append([tag, scheme, _fmt(des.gamma_db), _fmt(des.power), cfg.criterion, _fmt(des.value),
                         "" if des.lam is None else _fmt(des.lam), "" if des.d is None else _fmt(des.d)])
    rows.sort()
    with open(os.path.join(out, "designs.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tag", "scheme", "gamma_db", "power", "criterion", "value", "lambda", "d"])
        w.writerows(rows)
    write_manifest(os.path.join(out, "manifest.ini"), cfg, "design")
    for r in rows:
        print(f"{r[0]}: {cfg.criterion} = {r[5]} at power {r[3]}")
    return 0


def _mc_seed(cfg, index):
    # each sweep point gets its own stream derived from the run seed
    return replace(cfg.sim, seed=(cfg.sim.seed + 1_000_003 * (index + 1)) % 2**64)


def sweep_rows(cfg, jobs=1, with_mc=True):
    tasks = [(s, g) for s in cfg.schemes for g in cfg.gamma_db]

    def one(i_task):
        i, (scheme, g) = i_task
        des = build_at_snr(scheme, cfg, g)
        if with_mc:
            est = simulate(des.mapping, des.table, des.link, cfg.criterion, cfg.D, _mc_seed(cfg, i))
            mc, se = est.mean, est.std_error
        else:
            mc, se = math.nan, math.nan
        return (float(g), des.power, cfg.criterion, scheme, des.value, mc, se)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, enumerate(tasks)))
    else:
        rows = [one(t) for t in enumerate(tasks)]
    return sorted(rows, key=lambda r: (r[3], r[0]))


def write_sweep_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for g, p, crit, scheme, v, mc, se in rows:
            w.writerow([_fmt(g), _fmt(p), crit, scheme, _fmt(v), _fmt(mc), _fmt(se)])


def read_sweep_csv(path):
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        if r.fieldnames != SWEEP_COLUMNS:
            raise ConfigError(f"{path} is not a sweep CSV")
        return [(float(x["gamma_db"]), float(x["power"]), x["criterion"], x["scheme"], float(x["value"]),
                 float(x["mc_value"]), float(x["mc_std_error"])) for x in r]


def cmd_sweep(cfg, out, jobs=1, with_mc=True):
    if not cfg.gamma_db:
        raise ConfigError("sweep needs gamma_db points")
    os.makedirs(out, exist_ok=True)
    rows = sweep_rows(cfg, jobs, with_mc)
    write_sweep_csv(os.path.join(out, "sweep.csv"), rows)
    write_manifest(os.path.join(out, "manifest.ini"), cfg, "sweep")
    for r in rows:
        print(f"{r[3]:>8} {r[0]:+7.2f} dB  {r[2]} {r[4]:.6g}  mc {r[5]:.6g} +- {r[6]:.2g}")
    return 0


def compare_rows(rows_a, rows_b, slack=1e-6):
    """Align two single-criterion sweeps on gamma_db and report value deltas.

    Each side must contain one scheme. Returns (table, violations) where a
    violation is a point with value_a > value_b + slack.
    """
    def by_gamma(rows, name):
        schemes = {r[3] for r in rows}
        if len(schemes) != 1:
            raise AlignmentError(f"sweep {name} holds schemes {sorted(schemes)}; pick one with --scheme")
        return {r[0]: r for r in rows}

    a, b = by_gamma(rows_a, "A"), by_gamma(rows_b, "B")
    if sorted(a) != sorted(b):
        raise AlignmentError("the two sweeps use different gamma_db grids")
    if {r[2] for r in rows_a} != {r[2] for r in rows_b}:
        raise AlignmentError("the two sweeps use different criteria")
    table = []
    for g in sorted(a):
        va, vb = a[g][4], b[g][4]
        table.append((g, a[g][3], va, b[g][3], vb, vb - va))
    violations = [t for t in table if t[2] > t[4] + slack]
    return table, violations


def _load_side(path, scheme, jobs, out):
    if path.endswith(".csv"):
        rows = read_sweep_csv(path)
    else:
        cfg = read_config(path)
        rows = sweep_rows(cfg, jobs, with_mc=False)
    if scheme:
        rows = [r for r in rows if r[3] == scheme]
        if not rows:
            raise AlignmentError(f"no rows for scheme {scheme!r} in {path}")
    return rows


def cmd_compare(path_a, path_b, out, scheme_a=None, scheme_b=None, slack=1e-6, jobs=1):
    table, bad = compare_rows(_load_side(path_a, scheme_a, jobs, out), _load_side(path_b, scheme_b, jobs, out), slack)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "compare.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gamma_db", "scheme_a", "value_a", "scheme_b", "value_b", "delta"])
        for g, sa, va, sb, vb, dl in table:
            w.writerow([_fmt(g), sa, _fmt(va), sb, _fmt(vb), _fmt(dl)])
    for g, sa, va, sb, vb, dl in table:
        flag = "  VIOLATION" if va > vb + slack else ""
        print(f"{g:+7.2f} dB  {sa} {va:.6g}  {sb} {vb:.6g}  delta {dl:+.3g}{flag}")
    if bad:
        print(f"{len(bad)} point(s) where A exceeds B", file=sys.stderr)
        return 1
    return 0


def cmd_simulate(cfg, out, jobs=1):
    os.makedirs(out, exist_ok=True)
    rows = []
    for scheme in cfg.schemes:
        for k, des in enumerate(build_all(scheme, cfg)):
            est = simulate(des.mapping, des.table, des.link, cfg.criterion, cfg.D, _mc_seed(cfg, len(rows)), jobs)
            rows.append([f"{_safe(scheme)}_{_tag(des, k)}", scheme, _fmt(des.gamma_db), cfg.criterion,
                         _fmt(des.value), _fmt(est.mean), _fmt(est.std_error), str(est.n)])
    with open(os.path.join(out, "simulate.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tag", "scheme", "gamma_db", "criterion", "value", "mc_value", "mc_std_error", "n"])
        w.writerows(rows)
    write_manifest(os.path.join(out, "manifest.ini"), cfg, "simulate")
    for r in rows:
        print(f"{r[0]}: analytical {r[4]}  mc {r[5]} +- {r[6]}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="zdjscc", description="Zero-delay mappings for low-resolution ADC links.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("design", "sweep", "simulate"):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True)
        s.add_argument("--out", default="out")
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--jobs", type=int, default=1)
        if name == "sweep":
            s.add_argument("--no-mc", action="store_true", help="skip the Monte Carlo columns")
    c = sub.add_parser("compare")
    c.add_argument("a", help="sweep CSV or config for side A")
    c.add_argument("b", help="sweep CSV or config for side B")
    c.add_argument("--scheme-a")
    c.add_argument("--scheme-b")
    c.add_argument("--slack", type=float, default=1e-6)
    c.add_argument("--out", default="out")
    c.add_argument("--jobs", type=int, default=1)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        if args.command == "compare":
            return cmd_compare(args.a, args.b, args.out, args.scheme_a, args.scheme_b, args.slack, args.jobs)
        cfg = read_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, sim=replace(cfg.sim, seed=args.seed))
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        if args.command == "design":
            return cmd_design(cfg, args.out)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.out, args.jobs, not args.no_mc)
        return cmd_simulate(cfg, args.out, args.jobs)
    except (ConfigError, AlignmentError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
