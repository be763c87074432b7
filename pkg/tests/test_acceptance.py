"""Acceptance criteria, one test each, at their stated tolerances.

Every test prints a single PASS/FAIL line (visible with or without -s).
"""

import numpy as np
import pytest

from necklab.constants import ball_search_margin, cap_alpha_bound, hat_ab, theta_hat
from necklab.flow import (FlowSettings, cylinder_profile, estimate_gammas,
                          parabolic_neighborhood_check, r_hat_from_gammas, simulate)
from necklab.frames import validate_claim
from necklab.models import (bowl_surface, cylinder_spectrum, cylinder_surface, sphere_spectrum,
                            sphere_surface)
from necklab.necks import (axis_alignment_check, decompose, detect_neck, neck_measures)
from necklab.noncollapse import alpha_profile, geodesic_functions, height_sweep
from necklab.scenario import bundled_scenarios, load_scenario, run_scenario


@pytest.fixture
def verdict(capsys):
    def report(number, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        assert ok, f"criterion {number} ({title}) failed: {detail}"
    return report


def test_criterion_01_model_spectra(verdict):
    sph, cyl = sphere_spectrum(3, 1.0, 0.0), cylinder_spectrum(3, 1.0, 0.0)
    errs = [np.max(np.abs(np.array(sph.lambdas) - 1)), abs(sph.H - 3),
            np.max(np.abs(np.array(cyl.lambdas) - [0, 1, 1])), abs(cyl.H - 2)]
    s, c = sphere_surface(3), cylinder_surface(3)
    errs += [np.max(np.abs(s.lambdas - 1)), np.max(np.abs(s.H - 3)),
             np.max(np.abs(c.lambdas - [0, 1, 1])), np.max(np.abs(c.H - 2))]
    verdict(1, "model spectra", max(errs) <= 1e-12, f"max error {max(errs):.2e}")


def test_criterion_02_two_convexity(verdict):
    worst, sat = np.inf, 0.0
    for n in (3, 4, 5):
        for surf in (sphere_surface(n), cylinder_surface(n), bowl_surface(n)):
            lam = surf.lambdas
            margin = (lam[:, 0] + lam[:, 1]) / surf.H - 1 / (n - 1)
            worst = min(worst, float(margin.min()))
            if surf.translation_invariant:
                sat = max(sat, float(np.max(np.abs(margin))))
    verdict(2, "two-convexity", worst >= -1e-6 and sat <= 1e-12,
            f"min margin {worst:.2e}, cylinder saturation {sat:.1e}")


def test_criterion_03_frame_oracle(verdict):
    rows = validate_claim((3, 4, 5, 6), count=1000, seed=7, tol=1e-6, n_candidates=20000)
    bad = sum(r.disagree_eigen + r.disagree_brute for r in rows)
    verdict(3, "frame oracle", bad == 0 and all(r.instances >= 1000 for r in rows),
            f"{sum(r.instances for r in rows)} instances, {bad} disagreements")


def test_criterion_04_flow_accuracy(verdict):
    n, r0 = 3, 1.0
    t = 0.2 * r0 ** 2 / (2 * (n - 1))
    p = simulate(cylinder_profile(n, r0, points=2000), FlowSettings(t_end=t)).snapshots[-1]
    exact = np.sqrt(r0 ** 2 - 2 * (n - 1) * t)
    rel = float(np.max(np.abs(p.rho - exact)) / exact)

    def run(N):
        pr = cylinder_profile(n, 1.0, points=N, amplitude=0.1)
        return simulate(pr, FlowSettings(t_end=0.05, dt=2e-4)).snapshots[-1].rho

    u = [run(N) for N in (24, 48, 96)]
    order = np.log2(np.max(np.abs(u[0] - u[1][::2])) / np.max(np.abs(u[1] - u[2][::2])))
    verdict(4, "flow accuracy", rel < 1e-3 and order >= 3.5,
            f"radius rel err {rel:.2e}, spatial order {order:.2f}")


def test_criterion_05_factor_four_control(verdict, dumbbell_run):
    tr = dumbbell_run
    g = estimate_gammas(tr)
    _, _, rh = r_hat_from_gammas(tr.n, g.gamma1, g.gamma2, g.sup_A2_over_H2)
    rng = np.random.default_rng(0)
    res = []
    for _ in range(20):
        k = int(rng.integers(1, len(tr.snapshots)))
        i = int(rng.integers(0, tr.snapshots[k].surface.core_indices.size))
        res.append(parabolic_neighborhood_check(tr, k, i, rh))
    viol = sum(not r.holds for r in res)
    lo, hi = min(r.min_ratio for r in res), max(r.max_ratio for r in res)
    verdict(5, "factor-4 control", viol == 0,
            f"gamma=({g.gamma1:.3g}, {g.gamma2:.3g}), r_hat={rh:.3g}, {viol}/20 violations, "
            f"ratios in [{lo:.4f}, {hi:.4f}]")


def test_criterion_06_neck_detection(verdict, bowl3):
    cyl = cylinder_surface(3)
    cyl_ok = all(detect_neck(cyl, int(i), 1e-6, 10.0).accepted for i in cyl.core_indices)
    sph_ok = True
    for n in (2, 3, 4):
        q = neck_measures(sphere_surface(n, m=201), 1.0).quality
        sph_ok &= bool(np.all(~(q <= 1 / n - 1e-3)))
    m = neck_measures(bowl3, 5.0)
    tail = m.covered & (m.ratio_lambda1 <= 0.01)
    acc = tail & (m.quality <= 0.1)
    bowl_ok = bool(np.all(acc == tail))
    verdict(6, "neck detection", cyl_ok and sph_ok and bowl_ok,
            f"cylinder {'ok' if cyl_ok else 'FAILED'}, sphere {'ok' if sph_ok else 'FAILED'}, "
            f"bowl tail {int(acc.sum())}/{int(tail.sum())} accepted")


def test_criterion_07_decomposition(verdict, bowl3, dumbbell_snapshot):
    rep = decompose(bowl3, 0.1, 0.05, 5.0)
    cap = rep.caps[0] if rep.caps else None
    t = rep.transition_points[0] if rep.transition_points else None
    ok_bowl = (len(rep.caps) == 1 and cap.tip_end == 0 and t is not None and rep.all_passed
               and cap.diameter <= rep.C0_measured * (bowl3.n - 1) / bowl3.H[t]
               and np.all(bowl3.lambdas[cap.indices, 0]
                          >= bowl3.H[cap.indices] / rep.C0_measured * (1 - 1e-12)))
    dd = decompose(dumbbell_snapshot, 0.1, 0.05, 5.0)
    ok_db = dd.topology == "compact" and len(dd.caps) == 2 and len(dd.neck_points) > 0
    verdict(7, "decomposition", bool(ok_bowl and ok_db),
            f"bowl caps={len(rep.caps)} checks={[c.status for c in rep.checks]} "
            f"C0={rep.C0_measured:.4g}; dumbbell caps={len(dd.caps)} "
            f"neck fraction={dd.neck_fraction:.2f}")


def test_criterion_08_axis_alignment(verdict, dumbbell_snapshot):
    eps = 0.1
    rep = decompose(dumbbell_snapshot, eps, 0.05, 5.0)
    certs = [detect_neck(dumbbell_snapshot, int(i), eps, 5.0) for i in rep.neck_points]
    res = axis_alignment_check(certs)
    limit = max(5 * eps, np.radians(2.0))
    verdict(8, "axis alignment", res.max_angle <= limit,
            f"{len(certs)} necks, max angle {np.degrees(res.max_angle):.2e} deg")


def test_criterion_09_noncollapsing(verdict, bowl3):
    errs = []
    for n in (2, 3, 4):
        s, c = sphere_surface(n), cylinder_surface(n)
        errs.append(abs(alpha_profile(s).min_alpha - n) / n / (2 * s.spacing.max()))
        errs.append(abs(alpha_profile(c).min_alpha - (n - 1)) / (n - 1) / (2 * c.spacing.max()))
    rep = decompose(bowl3, 0.1, 0.05, 5.0)
    necks = alpha_profile(bowl3, rep.neck_points)
    caps = alpha_profile(bowl3, np.concatenate([c.indices for c in rep.caps]))
    bound = cap_alpha_bound(rep.C0_measured)[0]
    ok = (max(errs) <= 1 and necks.min_alpha >= 2 / 8 and caps.min_alpha >= bound
          and necks.excluded == 0 and caps.excluded == 0)
    verdict(9, "noncollapsing", ok,
            f"model error/allowance {max(errs):.2e}, bowl neck min alpha {necks.min_alpha:.4f}, "
            f"cap min alpha {caps.min_alpha:.4f} vs {bound:.2e}")


def test_criterion_10_height_estimate(verdict, bowl3):
    s = sphere_surface(3)
    C0 = 3.0
    alpha = cap_alpha_bound(C0)[1]
    probes = [geodesic_functions(s, int(i), d, alpha, C0, samples=50)
              for i in np.linspace(50, 750, 10).astype(int) for d in (1, -1)]
    sph_pts = sum(p.s.size for p in probes)
    sph_viol = sum(p.height_violations for p in probes)
    rep = decompose(bowl3, 0.1, 0.05, 5.0)
    cap = rep.caps[0]
    nodes = np.linspace(cap.start, cap.stop, 10).astype(int)
    sweep = height_sweep(bowl3, nodes, rep.C0_measured, H_ref=bowl3.H[cap.transition])
    ok = sph_viol == 0 and sweep.violations == 0 and sph_pts >= 1000 and sweep.points >= 1000
    verdict(10, "height estimate", ok,
            f"sphere {sph_viol} violations / {sph_pts} points, "
            f"bowl cap {sweep.violations} / {sweep.points}")


def test_criterion_11_constants(verdict):
    margins = []
    for eta0 in (0.5, 1.0, 2.0, 5.0):
        for c1 in (0.1, 0.3, 1.0):
            a, _, over = hat_ab(eta0, c1)
            if not over:
                margins.append(ball_search_margin(eta0, c1, a))
    th = abs(theta_hat(3, 0.1) - 1 / (2 + 1.2 * (2 + np.pi)))
    ok = min(margins) > 0 and th <= 1e-12 and cap_alpha_bound(2.0)[0] == 1 / 1024
    verdict(11, "constants", ok, f"min ball-search margin {min(margins):.2e}, theta error {th:.1e}")


def test_criterion_12_determinism(verdict):
    same = []
    for name in bundled_scenarios():
        a = run_scenario(load_scenario(name)).files
        b = run_scenario(load_scenario(name)).files
        same.append(a == b and len(a) > 0)
    verdict(12, "determinism", all(same), f"{sum(same)}/{len(same)} scenarios bit-identical")
