from types import SimpleNamespace

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from necklab.flow import closed_profile
from necklab.models import sphere_surface
from necklab.surface import MAX_ORDER, Placement, _derivative_norms

T = sp.symbols("t")
X_ELL = -2 * sp.cos(T)  # prolate ellipsoid meridian, rho^2 = 1 - x^2/4
R_ELL = sp.sin(T)


def _meridian_curvatures(X, R):
    speed = sp.sqrt(sp.diff(X, T) ** 2 + sp.diff(R, T) ** 2)
    a = (sp.diff(R, T) * sp.diff(X, T, 2) - sp.diff(X, T) * sp.diff(R, T, 2)) / speed ** 3
    r = sp.diff(X, T) / (speed * R)
    return speed, a, r


def covariant_norms(n, X, R, t0):
    """|nabla h| and |nabla^2 h| by explicit tensor calculus in (t, angles)."""
    th = sp.symbols(f"th1:{n}")
    coords = (T, *th)
    speed, a, r = _meridian_curvatures(X, R)
    gs = [sp.Integer(1)]
    for j in range(1, n - 1):
        gs.append(gs[-1] * sp.sin(th[j - 1]) ** 2)
    g = [speed ** 2] + [R ** 2 * w for w in gs]
    h = [a * speed ** 2] + [r * R ** 2 * w for w in gs]
    d = len(coords)

    def Gam(k, i, j):
        out = 0
        if i == j:
            out += -sp.diff(g[i], coords[k]) / 2 if True else 0
        if k == i:
            out += sp.diff(g[k], coords[j]) / 2
        if k == j:
            out += sp.diff(g[k], coords[i]) / 2
        return out / g[k]

    G = [[[Gam(k, i, j) for j in range(d)] for i in range(d)] for k in range(d)]
    H = [[h[i] if i == j else 0 for j in range(d)] for i in range(d)]
    D1 = [[[sp.diff(H[i][j], coords[k])
            - sum(G[l][k][i] * H[l][j] + G[l][k][j] * H[i][l] for l in range(d))
            for k in range(d)] for j in range(d)] for i in range(d)]
    D2 = [[[[sp.diff(D1[i][j][k], coords[m])
             - sum(G[l][m][i] * D1[l][j][k] + G[l][m][j] * D1[i][l][k]
                   + G[l][m][k] * D1[i][j][l] for l in range(d))
             for m in range(d)] for k in range(d)] for j in range(d)] for i in range(d)]
    point = {T: t0, **{x: 0.9 + 0.1 * q for q, x in enumerate(th)}}
    gi = [float((1 / gg).subs(point)) for gg in g]
    n1 = sum(float(D1[i][j][k].subs(point)) ** 2 * gi[i] * gi[j] * gi[k]
             for i in range(d) for j in range(d) for k in range(d))
    n2 = sum(float(D2[i][j][k][m].subs(point)) ** 2 * gi[i] * gi[j] * gi[k] * gi[m]
             for i in range(d) for j in range(d) for k in range(d) for m in range(d))
    return np.sqrt(n1), np.sqrt(n2)


def closed_form_norms(n, X, R, t0):
    speed, a, r = _meridian_curvatures(X, R)
    jets = np.zeros((2, MAX_ORDER + 1, 1))
    ea, er = a, r
    for k in range(3):
        jets[0, k, 0] = float(ea.subs(T, t0))
        jets[1, k, 0] = float(er.subs(T, t0))
        ea, er = sp.diff(ea, T) / speed, sp.diff(er, T) / speed
    rho_s = float((sp.diff(R, T) / speed).subs(T, t0))
    fake = SimpleNamespace(n=n, size=1, rho=np.array([float(R.subs(T, t0))]),
                           rho_s=np.array([rho_s]))
    out = _derivative_norms(fake, jets)[0]
    return out[0], out[1]


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("t0", [0.4, 1.1, 2.3])
def test_derivative_norm_formulas_match_tensor_calculus(n, t0):
    ref1, ref2 = covariant_norms(n, X_ELL, R_ELL, t0)
    got1, got2 = closed_form_norms(n, X_ELL, R_ELL, t0)
    assert got1 == pytest.approx(ref1, rel=1e-10)
    assert got2 == pytest.approx(ref2, rel=1e-10)


@pytest.fixture(scope="module")
def ellipsoid():
    p = closed_profile(3, lambda x: 1 - x ** 2 / 4, -2.0, 2.0, points=513)
    return p.surface


def test_sampled_jets_match_exact_derivatives(ellipsoid):
    S = ellipsoid
    speed, a, r = _meridian_curvatures(X_ELL, R_ELL)
    tt = np.arccos(np.clip(-S.x / 2, -1, 1))
    sel = (tt > 0.3) & (tt < np.pi - 0.3)
    ea, er = a, r
    for k in range(5):
        fa, fr = sp.lambdify(T, ea), sp.lambdify(T, er)
        ref_a, ref_r = fa(tt[sel]), fr(tt[sel])
        scale = max(np.max(np.abs(ref_a)), 1.0)
        tol = {0: 1e-9, 1: 1e-8, 2: 1e-6}.get(k, 1e-3)
        assert np.max(np.abs(S.jets[0, k, sel] - ref_a)) < tol * scale
        assert np.max(np.abs(S.jets[1, k, sel] - ref_r)) < tol * scale
        ea, er = sp.diff(ea, T) / speed, sp.diff(er, T) / speed


def test_tip_limit_matches_interior(ellipsoid):
    N = ellipsoid.derivative_norms
    # second-order norm is continuous through the tip
    assert abs(N[0, 1] - N[3, 1]) < 0.05 * N[3, 1]


@given(st.floats(0.1, 10))
def test_scaling_laws(c):
    s = sphere_surface(3, 1.0, m=201)
    sc = s.scaled(c)
    assert np.allclose(sc.H, s.H / c)
    assert np.allclose(sc.positions, c * s.positions)


def test_rigid_motion_keeps_intrinsic_data(rng):
    s = sphere_surface(3, 1.0, m=201)
    Q = np.linalg.qr(rng.standard_normal((4, 4)))[0]
    m = s.moved(Q, np.array([1.0, -2.0, 0.5, 3.0]))
    assert np.allclose(m.H, s.H)
    assert np.allclose(np.linalg.norm(m.positions - m.placement.origin, axis=1), 1.0)
    assert np.allclose(np.abs(np.sum(m.normals * (m.positions - m.placement.origin), axis=1)), 1.0)


def test_placement_frame_is_orthonormal():
    P = Placement.standard(3)
    assert np.allclose(P.frame.T @ P.frame, np.eye(4))
