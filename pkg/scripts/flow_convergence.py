"""Cylinder radius law and spatial convergence of the graph solver."""

import argparse

import numpy as np

from necklab.flow import FlowSettings, cylinder_profile, simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=3)
    ap.add_argument("--points", type=int, default=2000)
    ap.add_argument("--grids", type=int, nargs="+", default=[24, 48, 96, 192])
    args = ap.parse_args()

    n = args.n
    t = 0.2 / (2 * (n - 1))
    p = simulate(cylinder_profile(n, 1.0, points=args.points), FlowSettings(t_end=t)).snapshots[-1]
    exact = np.sqrt(1 - 2 * (n - 1) * t)
    print(f"cylinder n={n}: t={t:.4g}, radius {p.rho.mean():.10f} vs {exact:.10f}, "
          f"max rel err {np.max(np.abs(p.rho - exact)) / exact:.3e}")

    sols = []
    for N in args.grids:
        pr = cylinder_profile(n, 1.0, points=N, amplitude=0.1)
        sols.append(simulate(pr, FlowSettings(t_end=0.05, dt=2e-4)).snapshots[-1].rho)
    diffs = [np.max(np.abs(a - b[::2])) for a, b in zip(sols, sols[1:])]
    print("grid  successive difference  observed order")
    for N, d, d_next in zip(args.grids, diffs, diffs[1:] + [None]):
        order = "" if d_next is None else f"{np.log2(d / d_next):.2f}"
        print(f"{N:5d}  {d:.3e}               {order}")


if __name__ == "__main__":
    main()
