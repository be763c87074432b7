import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from necklab.flow import closed_profile, dumbbell_profile
from necklab.models import bowl_surface, cylinder_surface, sphere_surface
from necklab.necks import decompose
from necklab.noncollapse import (PreconditionError, alpha_profile, geodesic_functions,
                                 height_sweep, inscribed_radius, neck_inscribed_bound,
                                 verify_noncollapsing)
from necklab.constants import cap_alpha_bound


def brute_inscribed(surf, p, K=721):
    """Minimum over a full grid of orbit angles in R^3 (n = 2 only)."""
    phi = np.linspace(0, 2 * np.pi, K, endpoint=False)
    P = np.stack([np.repeat(surf.x, K), np.outer(surf.rho, np.cos(phi)).ravel(),
                  np.outer(surf.rho, np.sin(phi)).ravel()], axis=1)
    Fp = np.array([surf.x[p], surf.rho[p], 0.0])
    nu = np.array([surf.nu_x[p], surf.nu_rho[p], 0.0])
    d = P - Fp
    num = np.sum(d * d, axis=1)
    den = -2.0 * (d @ nu)
    ok = (den > 0) & (num > 1e-24)
    return np.min(num[ok] / den[ok])


@pytest.mark.parametrize("surf", [
    closed_profile(2, lambda x: 1 - x ** 2 / 4, -2, 2, points=257).surface,
    dumbbell_profile(2, points=513).surface,
], ids=["ellipsoid", "dumbbell"])
def test_inscribed_radius_matches_orbit_grid(surf):
    for p in range(3, surf.size - 3, 17):
        assert inscribed_radius(surf, p) == pytest.approx(brute_inscribed(surf, p), rel=1e-9)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_model_alphas(n):
    s = sphere_surface(n, m=801)
    prof = alpha_profile(s)
    assert abs(prof.min_alpha - n) / n <= 2 * s.spacing.max()
    c = cylinder_surface(n)
    prof = alpha_profile(c)
    assert prof.min_alpha == pytest.approx(n - 1, rel=1e-12) and prof.excluded == 0


@given(st.floats(0.01, 100.0))
def test_alpha_is_scale_invariant(c):
    s = closed_profile(3, lambda x: 1 - x ** 2 / 4, -2, 2, points=129).surface
    idx = np.arange(2, 127, 9)
    a = alpha_profile(s, idx)
    b = alpha_profile(s.scaled(c), idx)
    assert np.allclose(b.alpha, a.alpha, rtol=1e-10)
    assert np.allclose(b.r_in, c * a.r_in, rtol=1e-10)


@settings(max_examples=20)
@given(st.floats(0.1, 3.5), st.floats(0.1, 1.0))
def test_verification_is_monotone_in_alpha(alpha, shrink):
    s = sphere_surface(3, m=201)
    prof = alpha_profile(s)
    if verify_noncollapsing(s, alpha, profile=prof):
        assert verify_noncollapsing(s, alpha * shrink, profile=prof)


def test_verify_reports_worst_point():
    s = sphere_surface(3, m=201)
    assert verify_noncollapsing(s, 3.0)
    bad = verify_noncollapsing(s, 3.5)
    assert not bad and bad.worst_margin < 0
    with pytest.raises(ValueError):
        verify_noncollapsing(s, 0.0)


def test_dumbbell_tube_and_fillet(dumbbell_snapshot):
    s = dumbbell_snapshot
    prof = alpha_profile(s)
    n = s.n
    i = s.size // 2  # middle of the tube
    assert prof.alpha[i] == pytest.approx(n - 1, rel=2e-2)
    concave = s.lam_axial[prof.idx] < 0
    bound = n - 1 + s.lam_axial[prof.idx] / s.lam_rot[prof.idx]
    assert np.any(concave)
    assert np.all(prof.alpha[concave] <= bound[concave] * (1 + 1e-12))
    assert prof.min_alpha < n - 1


def test_bowl_bounds(bowl3):
    rep = decompose(bowl3, 0.1, 0.05, 5.0)
    necks = alpha_profile(bowl3, rep.neck_points)
    assert np.all(necks.r_in >= neck_inscribed_bound(3, bowl3.H[rep.neck_points]))
    cap = alpha_profile(bowl3, rep.caps[0].indices)
    assert cap.min_alpha >= cap_alpha_bound(rep.C0_measured)[0]


def test_sphere_geodesic_height():
    s = sphere_surface(3, m=801)
    g = geodesic_functions(s, 200, 1, 1 / 18, 3.0, s_max=1.0)
    assert np.allclose(g.k, 1 - np.cos(g.s), atol=1e-12)
    assert g.height_violations == 0 and g.f_positive
    assert g.f_second_at_zero == pytest.approx(1 - 3 / 18)


def test_geodesic_probe_checks_its_preconditions():
    with pytest.raises(PreconditionError):
        geodesic_functions(cylinder_surface(3), 200, 1, 0.1, 1.0)
    with pytest.raises(ValueError):
        geodesic_functions(sphere_surface(3), 200, 0, 0.1, 3.0)


def test_geodesic_probe_is_truncated_at_open_ends(bowl3_small):
    s = bowl3_small.scaled(float(bowl3_small.H[-1]))
    g = geodesic_functions(s, s.size - 2, 1, 0.5, 1e4, s_max=10.0)
    assert g.truncated and g.s[-1] < 10.0


def test_bowl_cap_height_sweep(bowl3):
    rep = decompose(bowl3, 0.1, 0.05, 5.0)
    cap = rep.caps[0]
    nodes = np.linspace(cap.start, cap.stop, 10).astype(int)
    sweep = height_sweep(bowl3, nodes, rep.C0_measured, H_ref=bowl3.H[cap.transition])
    assert sweep.points == 1000 and sweep.violations == 0
