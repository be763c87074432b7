import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from necklab.curvature import pinching_report
from necklab.models import (ModelSurface, bowl_profile, bowl_series, bowl_surface,
                            cylinder_radius, cylinder_spectrum, cylinder_surface, sphere_radius,
                            sphere_spectrum, sphere_surface)


def test_model_spectra_exact():
    s = sphere_spectrum(3, 1.0, 0.0)
    assert s.lambdas == (1.0, 1.0, 1.0) and s.H == 3.0
    c = cylinder_spectrum(3, 1.0, 0.0)
    assert c.lambdas == (0.0, 1.0, 1.0) and c.H == 2.0


@given(st.integers(2, 8), st.floats(0.1, 10), st.floats(0, 0.99))
def test_radius_laws(n, r0, frac):
    t = -frac * r0 ** 2  # ancient times
    assert sphere_radius(n, r0, t) == pytest.approx(np.sqrt(r0 ** 2 - 2 * n * t))
    assert cylinder_radius(n, r0, t) == pytest.approx(np.sqrt(r0 ** 2 - 2 * (n - 1) * t))
    tf = frac * r0 ** 2 / (2 * n)
    assert sphere_radius(n, r0, tf) == pytest.approx(r0 * np.sqrt(1 - frac))


def test_extinction_and_model_validation():
    with pytest.raises(ValueError, match="extinct"):
        sphere_radius(3, 1.0, 1.0 / 6)
    with pytest.raises(ValueError):
        ModelSurface("torus", 3)
    with pytest.raises(ValueError):
        ModelSurface("sphere", 3, t=0.1)
    assert ModelSurface("cylinder", 4, 2.0, -1.0).radius == pytest.approx(np.sqrt(10.0))


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_bowl_series_matches_symbolic_expansion(n):
    r = sp.symbols("r")
    c = sp.symbols("c0:4")
    p = sum(c[k] * r ** (2 * k + 1) for k in range(4))
    eq = sp.expand(sp.diff(p, r) * r - (1 + p ** 2) * (r - (n - 1) * p))
    sol = {}
    for k in range(4):
        coeff = sp.Poly(eq, r).coeff_monomial(r ** (2 * k + 1)).subs(sol)
        sol[c[k]] = sp.solve(coeff, c[k])[0]
    ref = [float(sol[c[k]]) for k in range(4)]
    assert np.allclose(bowl_series(n, 4), ref, rtol=1e-14, atol=1e-17)
    assert ref[0] == pytest.approx(1.0 / n)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_bowl_translator_identity_and_convexity(n):
    b = bowl_surface(n, r_core=20.0)
    # a unit-speed translator satisfies H = <nu, -axis>
    assert np.max(np.abs(b.H + b.nu_x)) < 1e-8
    assert np.all(b.lambdas[:, 0] > 0)
    assert b.H[0] == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(b.lambdas[0], 1.0 / n, atol=1e-12)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_two_convexity_on_models(n):
    """(lambda_1 + lambda_2)/H >= 1/(n-1) - 1e-6 everywhere; the cylinder saturates."""
    for surf in (sphere_surface(n, 1.0), cylinder_surface(n, 1.0), bowl_surface(n, r_core=50.0)):
        lam = surf.lambdas
        ratio = (lam[:, 0] + lam[:, 1]) / surf.H
        assert np.min(ratio) >= 1 / (n - 1) - 1e-6
    cyl = cylinder_surface(n, 1.0)
    lam = cyl.lambdas
    assert np.max(np.abs((lam[:, 0] + lam[:, 1]) / cyl.H - 1 / (n - 1))) < 1e-12


def test_bowl_far_field_approaches_cylinder_ratio():
    b = bowl_surface(3, r_core=300.0, r_max=400.0)
    lam = b.lambdas
    ratio = (lam[:, 0] + lam[:, 1]) / b.H
    far = ratio[b.rho > 100]
    assert np.all(far - 0.5 >= -1e-6)
    assert far[-1] - 0.5 < 1e-3
    assert far[-1] < far[0]


def test_bowl_profile_graph_residual_and_guard():
    bp = bowl_profile(3, 10.0, 0.005)
    assert bp.residual < 1e-8
    assert np.all(np.diff(bp.u) > 0)
    with pytest.raises(ValueError, match="too coarse"):
        bowl_profile(3, 10.0, 0.5)
    rep = pinching_report(bp.spectrum(0))
    assert rep.ratio_lambda1 == pytest.approx(1.0 / 3)


def test_exact_models_have_vanishing_derivatives():
    for surf in (sphere_surface(3, 2.0), cylinder_surface(4, 0.5)):
        assert np.max(surf.derivative_norms) == 0.0
