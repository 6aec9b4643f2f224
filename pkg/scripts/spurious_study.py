"""GET_BC vs GET_MAX under a far spurious blob of growing mass.

GET_BC moves linearly (m * distance); GET_MAX stays put until the spurious
peak overtakes the true one, then jumps the whole distance.

    python scripts/spurious_study.py
"""

import argparse

import numpy as np

from wassmark.fit import SpuriousSetup, spurious_activation_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--distance", type=float, default=30.0)
    ap.add_argument("--points", type=int, default=25)
    args = ap.parse_args()
    setup = SpuriousSetup(distance=args.distance)
    m_star = setup.dominance_mass()
    print(f"dominance mass m* = {m_star:.4f}")
    print("mass,bc_displacement,analytic_displacement,max_displacement")
    for r in spurious_activation_study(np.linspace(0.0, 0.45, args.points), setup):
        print(f"{r.mass:.4f},{r.bc_displacement:.4f},{r.analytic_displacement:.4f},{r.max_displacement:.4f}")


if __name__ == "__main__":
    main()
