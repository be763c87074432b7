"""Neck quality along the bowl translator and where (eps, L)-necks begin."""

import argparse

import numpy as np

from necklab.models import bowl_surface
from necklab.necks import calibrate_eta0, decompose, neck_measures


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=3)
    ap.add_argument("--eps", type=float, default=0.1)
    ap.add_argument("--L", type=float, default=5.0)
    ap.add_argument("--r-core", type=float, default=300.0)
    ap.add_argument("--r-max", type=float, default=1000.0)
    args = ap.parse_args()

    b = bowl_surface(args.n, r_core=args.r_core, r_max=args.r_max)
    m = neck_measures(b, args.L)
    print("    rho      lambda1/H    quality   graph_c0   graph_c1   covered")
    for j in np.unique(np.geomspace(1, m.idx.size - 1, 25).astype(int)):
        i = m.idx[j]
        print(f"{b.rho[i]:9.3f}  {m.ratio_lambda1[j]:.3e}  {m.quality[j]:9.3e}  "
              f"{m.graph_c0[j]:9.3e}  {m.graph_c1[j]:9.3e}  {bool(m.covered[j])}")
    cal = calibrate_eta0(b, args.eps, args.L)
    print(f"\nlargest eta0 with lambda1 <= eta0 H => ({args.eps}, {args.L})-neck: {cal.eta0:.4e}"
          f" (limited at rho={b.rho[cal.limiting_node]:.2f})")
    tail = m.covered & (m.ratio_lambda1 <= 0.01)
    print(f"points with lambda1/H <= 0.01 accepted: {int(np.sum(tail & (m.quality <= args.eps)))}"
          f"/{int(tail.sum())}")
    rep = decompose(b, args.eps, args.eps / 2, args.L)
    print(f"\ndecomposition: {rep.topology}, caps={len(rep.caps)}, "
          f"C0={rep.C0_measured:.4g}, neck fraction {rep.neck_fraction:.3f}")
    for c in rep.checks:
        print(f"  {c.name:24s} {c.status:13s} margin={c.margin}")


if __name__ == "__main__":
    main()
