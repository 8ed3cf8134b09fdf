"""Teacher-student fit of the three ADR parameter regimes.

A homogeneous teacher (U, D, R) generates the target from a Gaussian bump;
students in each regime start from zero and are fit by steepest descent.

    python scripts/teacher_student.py --modes homogeneous heterogeneous
"""
import argparse
import time

import numpy as np

from neuradr import ADRParams, Field, RelaxConfig, TrainConfig, assemble_adr_stencil, evolve, fit, make_uniform_grid, norm
from neuradr.training import running_losses


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--layers", type=int, default=8)
    ap.add_argument("--teacher", type=float, nargs=3, default=[0.4, 0.15, 0.0], metavar=("U", "D", "R"))
    ap.add_argument("--modes", nargs="+", default=["homogeneous", "heterogeneous", "onthefly"])
    ap.add_argument("--max-iters", type=int, default=5000)
    ap.add_argument("--tolerance", type=float, default=1e-6)
    args = ap.parse_args()

    g = make_uniform_grid(args.n, 1.0)
    bump = np.exp(-0.5 * ((g.nodes - args.n / 2) / (args.n / 10)) ** 2)
    x = Field(g, bump / norm(Field(g, bump)))
    steps = args.layers + 1
    zero = Field(g, np.zeros(g.n))
    y = evolve(x, assemble_adr_stencil(*args.teacher, g), zero, "tanh", RelaxConfig(1.0, steps)).final
    cfg = TrainConfig(lr=1.0, tolerance=args.tolerance, max_iters=args.max_iters, steps=steps)

    print(f"teacher U={args.teacher[0]} D={args.teacher[1]} R={args.teacher[2]}, N={args.n}, steps={steps}")
    print(f"{'mode':<14}{'params':>8}{'iters':>8}{'loss':>12}{'conv':>6}{'secs':>8}")
    for mode in args.modes:
        p0 = ADRParams.zeros("homogeneous").embed(mode, g.n, steps)
        t0 = time.perf_counter()
        res = fit(p0, x, y, cfg)
        dt = time.perf_counter() - t0
        print(f"{mode:<14}{p0.size:>8}{res.iterations:>8}{res.loss:>12.3e}{str(res.converged):>6}{dt:>8.2f}")
        if mode == "homogeneous":
            p = res.params
            print(f"  recovered U={float(p.U):.5f} D={float(p.D):.5f} R={float(p.R):.5f}")
        layer = running_losses(res.params, x, y, cfg)
        print("  loss by layer: " + " ".join(f"{v:.2e}" for v in layer))


if __name__ == "__main__":
    main()
