"""Command line entry point: ``sartsim run|sweep|orderstats``."""
from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from .orderstats import cdf_order_stat, monte_carlo_cdf_grid, uniform_sampler
from .runner import _atomic_write, default_out_dir, parse_axis, run_scenario, sweep
from .scenario import load_scenario
from .simcore import ContractViolation, split_stream
from .workload import ConfigError


def _out_dir(args, scenario) -> Path:
    if args.out:
        return Path(args.out)
    if scenario.output_dir:
        return Path(scenario.output_dir)
    return default_out_dir() / scenario.name


def cmd_run(args) -> int:
    sc = load_scenario(args.file)
    if args.seed is not None:
        sc = sc.replace(seed=args.seed)
    if args.trials is not None:
        sc = sc.replace(trials=args.trials)
    out = _out_dir(args, sc)
    res = run_scenario(sc, out)
    agg = res["aggregate"]
    print(f"{sc.name}: {sc.policy.policy.value} N={sc.policy.N} M={sc.policy.M} "
          f"trials={sc.trials} -> {out}")
    for key in ("accuracy", "e2e_p50", "e2e_p97", "e2e_p99", "queuing_mean"):
        print(f"  {key:>14}: {agg[key]['mean']:.4g} +/- {agg[key]['sd']:.3g}")
    return 0


def cmd_sweep(args) -> int:
    sc = load_scenario(args.file)
    if args.seed is not None:
        sc = sc.replace(seed=args.seed)
    if args.trials is not None:
        sc = sc.replace(trials=args.trials)
    axis, values = parse_axis(args.axis)
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    out = _out_dir(args, sc)
    rows = sweep(sc, axis, values, policies, out, jobs=args.jobs)
    print(f"{len(rows)} points x {sc.trials} trials -> {out / 'comparison.csv'}")
    for r in rows:
        print(f"  {r['policy']:>16} {axis}={r[axis]:<6} acc={r['accuracy_mean']:.3f} "
              f"p97={r['e2e_p97_mean']:.0f}ms p99={r['e2e_p99_mean']:.0f}ms")
    return 0


def orderstats_table(M: int, N: int, trials: int, grid: int, seed: int = 0) -> list[dict]:
    """Analytic vs Monte Carlo CDF of the M-th of N uniform(0, 1) draws on ``grid`` points."""
    if grid < 2:
        raise ConfigError("grid", "need at least 2 points")
    if trials < 1:
        raise ConfigError("trials", "must be >= 1")
    if not 1 <= M <= N:
        raise ConfigError("M", f"need 1 <= M <= N (M={M}, N={N})")
    xs = np.linspace(0.0, 1.0, grid)
    analytic = cdf_order_stat(M, N, xs)
    empirical = monte_carlo_cdf_grid(M, N, uniform_sampler, xs, trials,
                                     split_stream(seed, f"orderstats/{M}/{N}"))
    return [{"x": float(x), "F": float(x), "analytic": float(a), "empirical": float(e),
             "abs_diff": float(abs(a - e))} for x, a, e in zip(xs, analytic, empirical)]


def cmd_orderstats(args) -> int:
    rows = orderstats_table(args.M, args.N, args.trials, args.grid, args.seed or 0)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: f"{v:.10g}" for k, v in r.items()})
    if args.out:
        _atomic_write(Path(args.out), buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sartsim", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run one scenario file")
    r.add_argument("file")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="sweep one parameter across policies")
    s.add_argument("file")
    s.add_argument("--axis", required=True, help="e.g. N=1,2,4,8")
    s.add_argument("--policies", default="sart,sc,vanilla")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    for sp in (r, s):
        sp.add_argument("--seed", type=int)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--out", help="output directory (default: $SARTSIM_OUT/<name>)")

    o = sub.add_parser("orderstats", help="dump the order-statistic CDF grid as CSV")
    o.add_argument("--M", type=int, required=True)
    o.add_argument("--N", type=int, required=True)
    o.add_argument("--trials", type=int, default=100_000)
    o.add_argument("--grid", type=int, default=11)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--out")
    o.set_defaults(func=cmd_orderstats)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ContractViolation as e:
        print(f"internal check failed: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
