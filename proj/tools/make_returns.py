#!/usr/bin/env python3
"""Generate a synthetic excess-returns history for the alm --returns path.

Draws correlated monthly excess returns for three assets from a fixed-seed
Gaussian model and writes them as CSV (one row per period, one column per
asset).  Used to produce data/returns_sample.csv; rerun to regenerate.
"""

import argparse
import math
import random


MEAN = [0.02, 0.03, 0.04]
CHOL = [  # Cholesky factor of the target covariance
    [0.10, 0.00, 0.00],
    [0.02, 0.09, 0.00],
    [0.03, 0.04, 0.08],
]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rows", type=int, default=24, help="periods of history")
    ap.add_argument("--seed", type=int, default=2024, help="random seed")
    ap.add_argument("--out", default="data/returns_sample.csv", help="output CSV")
    args = ap.parse_args()

    rng = random.Random(args.seed)
    lines = ["# synthetic excess returns, one row per period",
             "equity,credit,alternatives"]
    for _ in range(args.rows):
        z = [rng.gauss(0.0, 1.0) for _ in range(3)]
        row = [MEAN[i] + sum(CHOL[i][j] * z[j] for j in range(3)) for i in range(3)]
        lines.append(",".join(f"{v:.6f}" for v in row))

    with open(args.out, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {args.rows} rows to {args.out}")


if __name__ == "__main__":
    main()
