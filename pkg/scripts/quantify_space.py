"""Distance tables between simulated histograms and LMO noise histograms."""

import argparse
from pathlib import Path

from lmodp.analysis import quantify_space


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--q", type=float, nargs="+", default=[0.1, 0.01, 0.001])
    ap.add_argument("--k", type=int, nargs="+", default=[10, 100])
    ap.add_argument("--m", type=int, default=100)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--out", default="results/quantify")
    args = ap.parse_args()

    report = quantify_space(args.q, args.k, args.m, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "quantify.csv").write_text(report.to_csv())
    for metric in ("kl", "l2", "emd"):
        print(f"\n{metric}")
        for (q, k), v in report.table(metric).items():
            print(f"  q={q:<6g} k={k:<4d} {v:.5f}")


if __name__ == "__main__":
    main()
