"""Measure oracle-complexity exponents for the three stochastic Halpern variants.

    python scripts/scaling.py --out out/scaling

Writes one CSV and one JSON per method and prints the fitted exponents next
to their theoretical values.
"""

import argparse
from pathlib import Path

import numpy as np

from stochhalpern import (CocoerciveConfig, SharpConfig, halpern_cocoercive,
                          halpern_cocoercive_minibatch, identity_problem, make_linear_problem,
                          restarted_e_halpern)
from stochhalpern.diagnostics import measure_query_scaling

U0 = np.array([1.0, 0.0])


def cocoercive(fn, scale):
    return lambda p, eps, seed: fn(p, CocoerciveConfig(eps=eps, master_seed=seed,
                                                       constant_scale=scale), U0)


def restarted(p, eps, seed):
    return restarted_e_halpern(p, SharpConfig(eps=eps, mu=0.25, master_seed=seed,
                                              constant_scale=0.05), U0)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("out/scaling"))
    ap.add_argument("--eps", type=float, nargs="+", default=[0.4, 0.2, 0.1, 0.05])
    ap.add_argument("--replications", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    ident = identity_problem(2, sigma=1.0)
    sharp = make_linear_problem(2, [0.25, 0.25], sigma=1.0)
    runs = [("minibatch-halpern", cocoercive(halpern_cocoercive_minibatch, 0.05), ident, 4.0),
            ("page-halpern", cocoercive(halpern_cocoercive, 1.0), ident, 3.0),
            ("restarted-e-halpern", restarted, sharp, 2.0)]
    for name, solver, problem, theory in runs:
        rep = measure_query_scaling(solver, problem, args.eps, args.replications,
                                    seed=args.seed)
        rep.to_csv(args.out / f"{name}.csv")
        rep.to_json(args.out / f"{name}.json")
        print(f"{name:>20}: exponent {rep.fitted_exponent:.3f} (theory {theory:g}), "
              f"r^2 {rep.r_squared:.4f}", flush=True)


if __name__ == "__main__":
    main()
