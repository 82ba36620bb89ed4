"""Group-testing lower and upper sample thresholds against N for K in {2, 4}
with p = 1/K. The upper curve is the smallest T whose finite-size union
bound is at most the target error level."""
import argparse
import csv
import sys

import numpy as np
from scipy.stats import linregress

from supportbounds.bounds import gt_figure_rows
from supportbounds.cli import parse_grid


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--k", default="2,4")
    ap.add_argument("--n-grid", default="100:10000:log:9")
    ap.add_argument("--target", type=float, default=0.05)
    ap.add_argument("--out", default="fig7_gt.csv")
    args = ap.parse_args(argv)
    grid = parse_grid(args.n_grid, integer=True)
    rows = []
    for k in (int(v) for v in args.k.split(",")):
        part = gt_figure_rows(k, grid, target=args.target)
        rows += part
        fit = linregress(np.log([r["n"] for r in part]), [r["t_upper"] for r in part])
        ratio = [r["t_upper"] / r["t_lower"] for r in part]
        print(f"K={k}: UB/LB {ratio[0]:.3f} -> {ratio[-1]:.3f}, UB vs log N slope {fit.slope:.3f} R^2 {fit.rvalue**2:.4f}")
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["n", "k", "t_lower", "t_upper", "t_upper_asymptotic"])
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    sys.exit(main())
