"""Command line: ``dtfl {solve,simulate,sweep,selftest}``.

Results go to the directory named by ``DTFL_OUTPUT_DIR`` (default: the
current directory). Exit status: 0 success, 1 failed self-test or bad
input, 3 infeasible instance, 4 solver did not converge.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from dtfl import certify, experiment
from dtfl import reputation as rep
from dtfl.errors import ConvergenceError, InfeasibleError
from dtfl.scenario import SCHEMES, load_scenario

OUTPUT_ENV = "DTFL_OUTPUT_DIR"
EXIT_BAD_INPUT = 1
EXIT_INFEASIBLE = 3
EXIT_NO_CONVERGENCE = 4


def output_dir() -> Path:
    d = Path(os.environ.get(OUTPUT_ENV, "."))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _scenario(args):
    overrides = list(args.set or [])
    for key in ("scheme", "seed", "rounds"):
        val = getattr(args, key, None)
        if val is not None:
            overrides.append(f"{key}={val}")
    return load_scenario(args.config, overrides)


def cmd_solve(args) -> int:
    sc = _scenario(args)
    world = experiment.build_world(sc)
    state = experiment.initial_reputation(world)
    selected = rep.select_top_n(state, sc.n_selected)
    gains = experiment.round_gains(world, 0)
    decision, cost = experiment.allocate(world, selected, gains, sc.scheme,
                                         np.random.default_rng([sc.seed, 3, 0]))
    print(f"scheme={sc.scheme} seed={sc.seed} selected={list(selected)}")
    print(f"{'client':>6} {'p (W)':>10} {'f (GHz)':>8} {'v':>6} {'alpha':>8} "
          f"{'t_cmp':>8} {'t_com':>8} {'t_dt':>8}")
    for row in decision.as_rows():
        print(f"{row['client']:>6} {row['p']:>10.5f} {row['f'] / 1e9:>8.4f} {row['v']:>6.3f} "
              f"{row['alpha']:>8.5f} {row['t_cmp']:>8.4f} {row['t_com']:>8.4f} {row['t_dt']:>8.4f}")
    print(f"T={cost.T:.6g} s  E={cost.E:.6g} J  total={cost.total:.6g}")
    return 0


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    rows = list(experiment.run_simulation(sc))
    out = Path(args.out) if args.out else output_dir() / f"simulate_{sc.scheme}_seed{sc.seed}.csv"
    experiment.write_csv(rows, out, experiment.MetricsRow.columns())
    print(f"wrote {len(rows)} rounds to {out}")
    if rows:
        print(f"final accuracy {rows[-1].accuracy:.4f}")
    if args.figure:
        from dtfl.plotting import simulation_figure

        print(f"figure {simulation_figure(rows, out.with_suffix('.png'))}")
    return 0


def cmd_sweep(args) -> int:
    sc = _scenario(args)
    rows = list(experiment.sweep(sc, args.axis, args.values, schemes=args.schemes,
                                 seeds=range(args.seeds)))
    out = Path(args.out) if args.out else output_dir() / f"sweep_{args.axis}.csv"
    experiment.write_csv(rows, out, experiment.SWEEP_COLUMNS)
    print(f"wrote {len(rows)} rows to {out}")
    med = experiment.sweep_medians(rows)
    for value in args.values:
        cells = "  ".join(f"{s}={med[(value, s)]:.4g}" for s in args.schemes if (value, s) in med)
        print(f"{args.axis}={value:g}: {cells}")
    if args.figure:
        from dtfl.plotting import sweep_figure

        print(f"figure {sweep_figure(rows, out.with_suffix('.png'))}")
    return 0


def cmd_selftest(args) -> int:
    ok = True
    for cert in certify.run_all(quick=args.quick):
        print(cert.line())
        for k, msg in cert.failures[:5]:
            print(f"    instance {k}: {msg}")
        ok &= cert.passed
    return 0 if ok else EXIT_BAD_INPUT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dtfl", description="Digital-twin assisted federated learning: allocation solver and simulator.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p):
        p.add_argument("--config", help="key = value scenario file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one scenario key (repeatable)")
        p.add_argument("--scheme", choices=SCHEMES)
        p.add_argument("--seed", type=int)

    p = sub.add_parser("solve", help="allocate one round and print the decision")
    scenario_args(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="run the federated rounds and write per-round CSV")
    scenario_args(p)
    p.add_argument("--rounds", type=int)
    p.add_argument("--out", help="CSV path (default: $%s/simulate_<scheme>_seed<seed>.csv)" % OUTPUT_ENV)
    p.add_argument("--figure", action="store_true", help="also write a PNG next to the CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="round cost against model size, N or bandwidth")
    scenario_args(p)
    p.add_argument("--axis", required=True, choices=sorted(experiment.AXES))
    p.add_argument("--values", required=True, type=float, nargs="+",
                   help="Mbit for dn, clients for n, MHz for b")
    p.add_argument("--schemes", nargs="+", default=list(SCHEMES), choices=SCHEMES)
    p.add_argument("--seeds", type=int, default=20, help="seeds 0..K-1 per point")
    p.add_argument("--out")
    p.add_argument("--figure", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("selftest", help="certify the solver against the brute-force oracles")
    p.add_argument("--quick", action="store_true", help="fewer instances")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConvergenceError as exc:
        print(f"did not converge: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
