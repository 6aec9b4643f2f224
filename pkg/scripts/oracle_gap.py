"""Relative gap between Sinkhorn and the exact LP as epsilon shrinks.

    python scripts/oracle_gap.py --pairs 20
"""

import argparse

import numpy as np

from wassmark.ot import SinkhornConfig, exact_w1, sinkhorn_w1
from wassmark.ot.pairs import random_pair

EPSILONS = (0.1, 0.05, 0.02, 0.01)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print("grid   " + "  ".join(f"eps={e:<5g}" for e in EPSILONS) + "   (median / max relative gap)")
    for shape in [(1, 4), (3, 3), (8, 8), (16, 16)]:
        gaps = np.zeros((args.pairs, len(EPSILONS)))
        for k in range(args.pairs):
            u, v = random_pair(shape, np.random.default_rng([args.seed, k]))
            exact, _ = exact_w1(u, v)
            for j, eps in enumerate(EPSILONS):
                approx = sinkhorn_w1(u, v, SinkhornConfig(eps, 500_000, 1e-9), gradient=False).value
                gaps[k, j] = abs(approx - exact) / exact
        cells = "  ".join(f"{np.median(g):.4f}/{g.max():.4f}" for g in gaps.T)
        print(f"{shape[0]}x{shape[1]:<4d} {cells}")


if __name__ == "__main__":
    main()
