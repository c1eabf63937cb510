"""Command line entry point: ``lctails {sample,tails,moments,verify,combf,report}``.

Exit codes: 0 ok, 1 bound violation / no qualifying constant, 2 usage or
invalid config, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

TAIL_COLUMNS = ["distribution", "n", "k_or_p_or_r", "t", "point", "ci_low", "ci_high", "count", "seed"]


def _spec_from_args(args):
    from lctails.distributions import DistributionSpec, Kind

    kind = Kind(args.dist)
    if kind is Kind.POLYTOPE:
        raise SystemExit("polytope distributions need a config file; use `verify`")
    if kind is Kind.ROTATED:
        base = DistributionSpec.from_dict({"kind": args.base, "n": args.n, "p": args.p})
        return DistributionSpec.rotated(base, seed=args.rotation_seed)
    return DistributionSpec.from_dict({"kind": kind.value, "n": args.n, "p": args.p})


def _add_dist_args(p):
    p.add_argument("--dist", required=True, choices=["exponential", "gaussian", "cube", "lp_ball", "simplex", "rotated"])
    p.add_argument("-n", type=int, required=True, help="dimension")
    p.add_argument("--p", type=float, default=None, help="exponent for lp_ball")
    p.add_argument("--base", default="exponential", help="base kind for --dist rotated")
    p.add_argument("--rotation-seed", type=int, default=0)
    p.add_argument("--count", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)


def _t_values(args) -> list[float]:
    if args.t:
        return [float(v) for v in args.t]
    lo, hi, num = args.t_grid
    return [float(v) for v in np.geomspace(float(lo), float(hi), int(num))]


def _out_stream(path):
    return open(path, "w", newline="") if path else sys.stdout


def cmd_sample(args) -> int:
    from lctails.distributions import sample, save_batch

    batch = sample(_spec_from_args(args), args.count, args.seed, workers=args.workers)
    if args.out:
        save_batch(batch, args.out)
        print(f"wrote {batch.count} x {batch.n} samples to {args.out}")
    else:
        w = csv.writer(sys.stdout)
        w.writerow([f"x{i + 1}" for i in range(batch.n)])
        w.writerows(batch.data.tolist())
    return EXIT_OK


def cmd_tails(args) -> int:
    from lctails.distributions import Kind, orderstat_tail_exact, sample
    from lctails.stats import empirical_tail, kth_largest_abs

    spec = _spec_from_args(args)
    if args.oracle and spec.kind is not Kind.EXPONENTIAL:
        print("--oracle is only available for --dist exponential", file=sys.stderr)
        return EXIT_USAGE
    ks = args.k or [1]
    if any(not 1 <= k <= spec.n for k in ks):
        print("every k must satisfy 1 <= k <= n", file=sys.stderr)
        return EXIT_USAGE
    batch = sample(spec, args.count, args.seed, workers=args.workers)
    fh = _out_stream(args.out)
    w = csv.writer(fh, lineterminator="\n")
    cols = TAIL_COLUMNS + (["exact", "exact_in_ci"] if args.oracle else [])
    w.writerow(cols)
    for k in ks:
        col = kth_largest_abs(batch.data, k)
        for t in _t_values(args):
            est = empirical_tail(col, t, args.level)
            row = [spec.label, spec.n, k, t, est.point, est.ci_low, est.ci_high, est.count, args.seed]
            if args.oracle:
                ex = orderstat_tail_exact(spec.n, k, t)
                row += [ex, est.ci_low <= ex <= est.ci_high]
            w.writerow(row)
    if fh is not sys.stdout:
        fh.close()
    return EXIT_OK


def cmd_moments(args) -> int:
    from lctails.distributions import Kind, exceedance_moment_exact, sample
    from lctails.stats import bootstrap_mean_ci, empirical_N_moment, lr_norm

    spec = _spec_from_args(args)
    batch = sample(spec, args.count, args.seed, workers=args.workers)
    fh = _out_stream(args.out)
    w = csv.writer(fh, lineterminator="\n")
    oracle = args.oracle and spec.kind is Kind.EXPONENTIAL
    w.writerow(["statistic", *TAIL_COLUMNS] + (["exact"] if oracle else []))
    for t in args.t:
        for p in args.order:
            est = empirical_N_moment(batch, t, p, resamples=args.resamples, level=args.level, seed=args.seed)
            row = ["N_moment", spec.label, spec.n, p, t, est.point, est.ci_low, est.ci_high, est.count, args.seed]
            if oracle:
                row.append(exceedance_moment_exact(spec.n, t, int(p)) if float(p).is_integer() else "")
            w.writerow(row)
    for r in args.r:
        norms = lr_norm(batch.data, r)
        for p in args.order:
            est = bootstrap_mean_ci(norms ** p, args.resamples, args.level, args.seed)
            row = [f"lr_moment_p{p:g}", spec.label, spec.n, r, "", est.point ** (1 / p),
                   est.ci_low ** (1 / p), est.ci_high ** (1 / p), est.count, args.seed]
            if oracle:
                row.append("")
            w.writerow(row)
    if fh is not sys.stdout:
        fh.close()
    return EXIT_OK


def cmd_verify(args) -> int:
    from lctails.harness.config import ConfigError, load_config
    from lctails.harness.runner import run_experiment

    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO if isinstance(exc, OSError) else EXIT_USAGE
    try:
        report = run_experiment(config, workers=args.workers, output_dir=args.output_dir)
    except OSError as exc:
        print(exc, file=sys.stderr)
        return EXIT_IO
    for l in report.ledgers:
        fc = "no qualifying C" if l.fitted_C is None else f"C = {l.fitted_C:.4g}"
        print(f"{l.family.id.value:<16} {l.meta['distribution']:<24} n={l.family.params['n']:<6} {fc}")
    print(f"wrote {len(report.files)} ledger files to {config.resolve_output_dir(args.output_dir)}")
    return report.exit_code


def cmd_combf(args) -> int:
    from lctails.combinatorics import combf_check_all

    cases = combf_check_all(args.max_l0, args.max_s)
    bad = [c for c in cases if not c.holds]
    if args.verbose:
        for c in cases:
            print(f"{str(c.levels):<20} count={c.count:<6} bound={c.bound:.6g}  {'ok' if c.holds else 'FAIL'}")
    if bad:
        for c in bad:
            print(f"FAIL {c.levels}: count {c.count} > bound {c.bound:.6g}")
        return EXIT_VIOLATION
    print(f"all cases pass ({len(cases)} sequences, l0 <= {args.max_l0}, s <= {args.max_s})")
    return EXIT_OK


def cmd_report(args) -> int:
    from lctails.harness.report import render_report

    try:
        files = render_report(args.input, args.output, figures=not args.no_figures)
    except FileNotFoundError as exc:
        print(exc, file=sys.stderr)
        return EXIT_IO
    summary = [f for f in files if f.name == "summary.txt"]
    if summary:
        sys.stdout.write(summary[0].read_text())
    print(f"wrote {len(files)} files")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lctails", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="emit a sample batch")
    _add_dist_args(p)
    p.add_argument("--out", help=".csv or .npy path (default: CSV on stdout)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("tails", help="order-statistic tail table")
    _add_dist_args(p)
    p.add_argument("-k", type=int, action="append", help="order statistic index (repeatable)")
    p.add_argument("--t", type=float, nargs="+")
    p.add_argument("--t-grid", nargs=3, default=("0.25", "8", "12"), metavar=("LO", "HI", "NUM"))
    p.add_argument("--level", type=float, default=0.99)
    p.add_argument("--oracle", action="store_true", help="add the exact binomial column (exponential only)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_tails)

    p = sub.add_parser("moments", help="moments of N_X(t) and of l_r norms")
    _add_dist_args(p)
    p.add_argument("--t", type=float, nargs="+", default=[1.0])
    p.add_argument("--order", type=float, nargs="+", default=[1.0, 2.0], help="moment orders")
    p.add_argument("--r", type=float, nargs="*", default=[])
    p.add_argument("--resamples", type=int, default=1000)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("verify", help="run a full ledger experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("combf", help="exhaustive check of the level-set counting lemma")
    p.add_argument("--max-l0", type=int, default=5)
    p.add_argument("--max-s", type=int, default=3)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_combf)

    p = sub.add_parser("report", help="render ledgers into plot data, figures and a summary table")
    p.add_argument("--input", required=True, help="run output directory")
    p.add_argument("--output", default=None)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
