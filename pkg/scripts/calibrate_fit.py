"""Step-size sweep behind ``wassmark.fit.DEFAULT_STEPS``.

For each loss, runs the offset-blob problem at a ladder of fixed steps and
reports whether the loss decreased monotonically, the first-100-iteration
relative decrease and the final decodes. The default for each loss is the
largest step that stays monotone and lands GET_BC on the target.

    python scripts/calibrate_fit.py --iterations 300
"""

import argparse

import numpy as np

from wassmark.fit import LossKind, fit, offset_blob_problem

LADDERS = {
    LossKind.WASSERSTEIN: [100.0, 300.0, 1000.0, 3000.0],
    LossKind.L2: [1.0, 10.0, 100.0, 1000.0],
    LossKind.L2_RAW: [0.1, 0.25, 0.45, 0.6],
    LossKind.JS: [10.0, 100.0, 1000.0],
    LossKind.SOFT_ARGMAX: [100.0, 1000.0, 10000.0, 100000.0],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iterations", type=int, default=300)
    ap.add_argument("--loss", choices=[k.value for k in LossKind], action="append")
    args = ap.parse_args()
    kinds = [LossKind(k) for k in args.loss] if args.loss else list(LADDERS)
    print(f"{'loss':12s} {'step':>9s} {'monotone':>8s} {'dec100':>8s} {'final loss':>11s} {'GET_BC x':>9s} {'GET_MAX x':>9s}")
    for kind in kinds:
        for step in LADDERS[kind]:
            tr = fit(offset_blob_problem(kind, step=step, iterations=args.iterations))
            losses = np.array(tr.losses)
            monotone = bool(np.all(np.diff(losses) <= 1e-12 * abs(losses[0]))) and not tr.diverged
            dec = tr.relative_decrease(100) if len(tr) > 100 else float("nan")
            bc = tr.final_bc[0] if tr.final_bc else float("nan")
            mx = tr.final_max[0] if tr.final_max else float("nan")
            print(f"{kind.value:12s} {step:9g} {str(monotone):>8s} {dec:8.4f} {losses[-1]:11.4g} {bc:9.3f} {mx:9.3f}")


if __name__ == "__main__":
    main()
