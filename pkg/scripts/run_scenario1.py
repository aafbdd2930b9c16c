"""Desk-scale run of the scenario-1 selection study.

Fits regularized PL and WPL across penalty families on Thomas replications
and writes selection.csv / prediction.csv / runs.csv.  The full-size study
uses --reps 2000; the default stays desk scale.

Usage:
    python scripts/run_scenario1.py --out results/scenario1 [--reps 100]
        [--kappa 5e-4] [--mu 1600] [--seed 909]
"""

import argparse
import sys

from ppr.experiment import ExperimentSpec, run_experiment, write_results

PENALTIES = ("ridge", "lasso", "enet", "al", "aenet", "scad", "mcplus")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True)
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--kappa", type=float, default=5e-4)
    ap.add_argument("--mu", type=float, default=1600.0)
    ap.add_argument("--seed", type=int, default=909)
    ap.add_argument("--methods", default="pl,wpl")
    ap.add_argument("--penalties", default=",".join(PENALTIES))
    args = ap.parse_args(argv)

    spec = ExperimentSpec(
        scenario=1,
        kappa=args.kappa,
        mu=args.mu,
        methods=tuple(args.methods.split(",")),
        penalties=tuple(args.penalties.split(",")),
        n_reps=args.reps,
        seed=args.seed,
    )
    table, runs = run_experiment(spec, verbose=True)
    write_results(table, runs, args.out)
    print(f"wrote {args.out}/selection.csv, prediction.csv, runs.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
