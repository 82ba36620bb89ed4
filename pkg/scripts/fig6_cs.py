"""Linear-regression necessity curves: T / lower bound against T for a sweep
of SNR values at K=16, N=512, sigma^2 = b_min = 1. Writes a tidy CSV."""
import argparse
import csv
import sys

from supportbounds import ProblemDims, snr_necessity_linear
from supportbounds.cli import figure_cs_rows, parse_grid


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=512)
    ap.add_argument("--k", type=int, default=16)
    ap.add_argument("--snr", default="1,10,100,1000,10000")
    ap.add_argument("--t-grid", default="1:1e8:log:161")
    ap.add_argument("--out", default="fig6_cs.csv")
    args = ap.parse_args(argv)
    snrs = [float(s) for s in args.snr.split(",")]
    rows = figure_cs_rows(args.n, args.k, 1.0, snrs, parse_grid(args.t_grid))
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["t", "snr", "t_over_lb"])
        w.writeheader()
        w.writerows(rows)
    thr = snr_necessity_linear(ProblemDims(args.n, args.k, 1), 1.0)
    print(f"SNR threshold {thr:.6g}")
    for snr in snrs:
        ratios = [r["t_over_lb"] for r in rows if r["snr"] == snr]
        cross = next((r["t"] for r in rows if r["snr"] == snr and r["t_over_lb"] >= 1), None)
        print(f"snr={snr:<10g} max T/LB={max(ratios):.4g} first crossing T={cross}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    sys.exit(main())
