"""Run the tuned robust least-squares comparisons and print final operator norms.

    python scripts/reproduce_rls.py --out out

Each comparison writes traces, an aligned comparison CSV and an SVG plot
through the command-line interface.  Norms are read at the shared budget so
methods whose last batch overshoots it are not credited for the extra queries.
"""

import argparse
import csv
from pathlib import Path

from stochhalpern.cli import main as cli

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def within_budget(path, budget):
    last = None
    with open(path) as fh:
        for row in csv.DictReader(fh):
            if int(row["queries_cum"]) <= budget:
                last = float(row["op_norm_true"])
    return last


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("out"))
    ap.add_argument("--budget", type=int, default=1_000_000)
    args = ap.parse_args()
    for name in ("rls_compare", "rls_estimators"):
        out = args.out / name
        code = cli(["compare", "--config", str(CONFIGS / f"{name}.ini"), "--out-dir", str(out)])
        if code:
            raise SystemExit(code)
        print(f"\n{name}: ||F(u)|| at {args.budget} queries")
        for trace in sorted(out.glob("trace_*.csv")):
            label = trace.stem.removeprefix("trace_")
            print(f"  {label:>24}  {within_budget(trace, args.budget):.4g}")
        print(f"  plot: {out / 'comparison.svg'}")


if __name__ == "__main__":
    main()
