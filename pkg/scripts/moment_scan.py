"""Moment growth of sampled kernels as the domain widens.

Gaussian kernels have finite moments at every order; a power law |r|^-p
has finite moments only for k < p - 1, and W_k grows like size^(k+1-p)
beyond that.
"""
import argparse

import numpy as np

from neuradr import ContinuumKernel, moment_convergence_scan


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=float, nargs="+", default=[25, 50, 100, 200, 400])
    ap.add_argument("--orders", type=int, nargs="+", default=[0, 2, 4])
    ap.add_argument("--exponents", type=float, nargs="+", default=[2.0, 4.0, 6.0])
    ap.add_argument("--nodes", type=int, default=40001)
    args = ap.parse_args()

    kernels = [("gaussian s=1", ContinuumKernel.gaussian(1.0))]
    kernels += [(f"power p={p:g}", ContinuumKernel.power_law(p, 1.0)) for p in args.exponents]
    head = "".join(f"{s:>12g}" for s in args.sizes)
    for k in args.orders:
        print(f"\n|W_{k}| vs half-width{'':>2}{head}   last ratio")
        for name, ker in kernels:
            vals = moment_convergence_scan(ker, k, args.sizes, args.nodes)
            row = "".join(f"{v:>12.4e}" for v in vals)
            ratio = vals[-1] / vals[-2] if vals[-2] else np.nan
            print(f"{name:<20}{row}   {ratio:8.4f}")


if __name__ == "__main__":
    main()
