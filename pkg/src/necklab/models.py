"""Model solutions: shrinking spheres, shrinking cylinders, the bowl translator.

The bowl is the rotational graph x_{n+1} = u(|x|) moving with unit speed.  With
the outward normal nu and omega the unit vector pointing from the opening
toward the tip, H = <nu, omega> reads, for p = u',

    u'' / (1 + p^2) + (n - 1) p / r = 1,

a first-order equation for p with a removable singularity at r = 0.  Writing
p = sum_k c_k r^(2k+1) and matching coefficients gives

    (2k + n) c_k = delta_k0 + sum_{j+l=k-1} d_j (delta_l0 - (n-1) c_l),
    d_j = sum_{i+l=j} c_i c_l,

so c_0 = 1/n: at the tip u'' = 1/n and every principal curvature equals 1/n.

Far out the graph equation is stiff (the profile is strongly attracted to its
asymptote), so beyond a switch radius the same surface is continued as the
radius over height, rho(z), which solves

    rho'' = (1 + rho'^2) ((n - 1)/rho - rho').

This form is still stiff (relaxation rate ~1 against variation on the scale
z), so it is integrated with an implicit Radau scheme.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .curvature import CurvatureSpectrum
from .surface import MAX_ORDER, SampledSurface

RTOL = 1e-12
ATOL = 1e-14


@dataclass(frozen=True)
class ModelSurface:
    kind: str
    n: int
    r0: float = 1.0
    t: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sphere", "cylinder", "bowl"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.kind != "bowl" and self.t > 0:
            raise ValueError("model times are ancient: t <= 0")

    @property
    def radius(self) -> float:
        if self.kind == "sphere":
            return _radius_law(self.r0, 2 * self.n, self.t)
        if self.kind == "cylinder":
            return _radius_law(self.r0, 2 * (self.n - 1), self.t)
        raise ValueError("the bowl has no single radius")


def _radius_law(r0: float, c: float, t: float) -> float:
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    arg = r0 * r0 - c * t
    if arg <= 0:
        raise ValueError(f"surface is extinct at t={t} (r0^2 - {c} t = {arg:.3e} <= 0)")
    return float(np.sqrt(arg))


def sphere_radius(n: int, r0: float, t: float) -> float:
    return _radius_law(r0, 2 * n, t)


def cylinder_radius(n: int, r0: float, t: float) -> float:
    return _radius_law(r0, 2 * (n - 1), t)


def sphere_spectrum(n: int, r0: float, t: float) -> CurvatureSpectrum:
    r = sphere_radius(n, r0, t)
    return CurvatureSpectrum.from_lambdas(np.full(n, 1.0 / r))


def cylinder_spectrum(n: int, r0: float, t: float) -> CurvatureSpectrum:
    r = cylinder_radius(n, r0, t)
    lam = np.full(n, 1.0 / r)
    lam[0] = 0.0
    return CurvatureSpectrum.from_lambdas(lam)


# --- sampled exact models --------------------------------------------------

def sphere_surface(n: int, radius: float = 1.0, m: int = 801) -> SampledSurface:
    """Round sphere sampled along one meridian from pole to pole."""
    th = np.linspace(0.0, np.pi, m)
    x = -radius * np.cos(th)
    rho = radius * np.sin(th)
    rho[[0, -1]] = 0.0
    lam = np.full(m, 1.0 / radius)
    jets = np.zeros((2, MAX_ORDER + 1, m))
    jets[:, 0] = lam
    return SampledSurface(n=n, s=radius * th, x=x, rho=rho, nu_x=-np.cos(th), nu_rho=np.sin(th),
                          lam_axial=lam, lam_rot=lam.copy(), ends=("tip", "tip"),
                          label=f"sphere(n={n}, r={radius:g})", exact_jets=jets)


def cylinder_surface(n: int, radius: float = 1.0, half_length: float = 10.0,
                     m: int = 401) -> SampledSurface:
    """Exact round cylinder; translation invariance supplies coverage beyond the sample."""
    x = np.linspace(-half_length, half_length, m)
    jets = np.zeros((2, MAX_ORDER + 1, m))
    jets[1, 0] = 1.0 / radius
    return SampledSurface(n=n, s=x - x[0], x=x, rho=np.full(m, radius),
                          nu_x=np.zeros(m), nu_rho=np.ones(m),
                          lam_axial=np.zeros(m), lam_rot=np.full(m, 1.0 / radius),
                          translation_invariant=True,
                          label=f"cylinder(n={n}, r={radius:g})", exact_jets=jets)


# --- bowl translator ---------------------------------------------------------

def bowl_series(n: int, terms: int = 4) -> np.ndarray:
    """Coefficients c_k of u'(r) = sum_k c_k r^(2k+1) at the tip."""
    c = np.zeros(terms)
    psi = np.zeros(terms)  # coefficients of r - (n-1) u'
    for k in range(terms):
        S = 0.0
        for j in range(k):
            d_j = sum(c[i] * c[j - i] for i in range(j + 1))
            S += d_j * psi[k - 1 - j]
        c[k] = ((1.0 if k == 0 else 0.0) + S) / (2 * k + n)
        psi[k] = (1.0 if k == 0 else 0.0) - (n - 1) * c[k]
    return c


def _series_eval(c: np.ndarray, r: float) -> tuple[float, float, float]:
    """(u, u', u'') from the tip series."""
    k = np.arange(len(c))
    p = float(np.sum(c * r ** (2 * k + 1)))
    dp = float(np.sum(c * (2 * k + 1) * r ** (2 * k)))
    u = float(np.sum(c * r ** (2 * k + 2) / (2 * k + 2)))
    return u, p, dp


def _graph_rhs(n):
    def rhs(r, y):
        p = y[1]
        return [p, (1.0 + p * p) * (1.0 - (n - 1) * p / r), np.sqrt(1.0 + p * p)]
    return rhs


def _graph_p_prime(n, r, p):
    return (1.0 + p * p) * (1.0 - (n - 1) * p / r)


def _series_arclength(c, r0) -> float:
    xg, wg = np.polynomial.legendre.leggauss(16)
    rr = 0.5 * r0 * (xg + 1.0)
    k = np.arange(len(c))
    p = np.sum(c[None, :] * rr[:, None] ** (2 * k + 1), axis=1)
    return float(0.5 * r0 * np.sum(wg * np.sqrt(1.0 + p * p)))


@dataclass(frozen=True, eq=False)
class BowlProfile:
    """Unit-speed bowl as a graph u(r) on a uniform radial grid."""

    n: int
    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    d2u: np.ndarray
    s: np.ndarray
    step: float
    residual: float

    @property
    def lam_axial(self) -> np.ndarray:
        return self.d2u / (1.0 + self.du ** 2) ** 1.5

    @property
    def lam_rot(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            lr = self.du / (self.r * np.sqrt(1.0 + self.du ** 2))
        lr[self.r == 0] = self.d2u[self.r == 0]
        return lr

    @property
    def H(self) -> np.ndarray:
        return self.lam_axial + (self.n - 1) * self.lam_rot

    def spectrum(self, i: int) -> CurvatureSpectrum:
        lam = np.full(self.n, self.lam_rot[i])
        lam[0] = self.lam_axial[i]
        return CurvatureSpectrum.from_lambdas(lam)

    def radius_over_axis(self, dx: float, x_start: float, x_end: float | None = None):
        """Uniform axial grid x with rho(x) by inverting u(r) (for profile cross-checks)."""
        from .flow import RotSymProfile
        x_end = float(self.u[-1]) if x_end is None else x_end
        x = np.arange(x_start, x_end + 0.5 * dx, dx)
        x = x[x <= self.u[-1]]
        sol = _graph_solution(self.n, float(self.r[-1]), self.step)
        rho = np.array([_invert_height(sol, self.r, self.u, xi) for xi in x])
        return RotSymProfile(n=self.n, x=x, rho=rho, boundary="clamped", time=0.0)


def _graph_solution(n: int, r_max: float, step: float):
    c = bowl_series(n, 4)
    r0 = min(10.0 * step, r_max)
    u0, p0, _ = _series_eval(c, r0)
    s0 = _series_arclength(c, r0)
    sol = solve_ivp(_graph_rhs(n), (r0, r_max), [u0, p0, s0], method="RK45",
                    rtol=RTOL, atol=ATOL, dense_output=True)
    if not sol.success:
        raise ArithmeticError(f"bowl integration failed: {sol.message}")
    return c, r0, sol


def _invert_height(graph, r_grid, u_grid, x):
    from scipy.optimize import brentq
    c, r0, sol = graph
    j = int(np.searchsorted(u_grid, x))
    lo, hi = r_grid[max(j - 1, 0)], r_grid[min(j, len(r_grid) - 1)]
    if hi <= lo:
        return float(lo)

    def g(r):
        return (_series_eval(c, r)[0] if r <= r0 else sol.sol(r)[0]) - x
    return brentq(g, lo, hi, xtol=1e-15, rtol=4e-16)


def bowl_profile(n: int, r_max: float, step: float) -> BowlProfile:
    """Graph of the unit-speed bowl on [0, r_max] with spacing `step`."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if step <= 0 or step > r_max / 1e3:
        raise ValueError(f"step {step} too coarse: need step <= r_max/1000 = {r_max / 1e3}")
    c, r0, sol = _graph_solution(n, r_max, step)
    r = np.arange(0, int(round(r_max / step)) + 1) * step
    u = np.empty_like(r)
    p = np.empty_like(r)
    s = np.empty_like(r)
    inner = r <= r0
    for i in np.nonzero(inner)[0]:
        u[i], p[i], _ = _series_eval(c, r[i])
        s[i] = _series_arclength(c, r[i]) if r[i] > 0 else 0.0
    Y = sol.sol(r[~inner])
    u[~inner], p[~inner], s[~inner] = Y
    d2u = np.empty_like(r)
    d2u[0] = c[0]
    d2u[1:] = _graph_p_prime(n, r[1:], p[1:])

    # residual: fourth-order centered derivative of u' against the equation
    dp = (p[:-4] - 8 * p[1:-3] + 8 * p[3:-1] - p[4:]) / (12 * step)
    res = np.abs(dp - d2u[2:-2])
    worst = int(np.argmax(res)) + 2
    residual = float(res.max())
    if residual > 1e-8:
        raise ValueError(f"step {step} too coarse: residual {residual:.2e} at r={r[worst]:.4g}")
    lam1 = d2u / (1.0 + p * p) ** 1.5
    if np.any(lam1 <= 0):
        bad = int(np.argmax(lam1 <= 0))
        raise ArithmeticError(f"bowl integration left convexity at r={r[bad]:.6g}")
    return BowlProfile(n=n, r=r, u=u, du=p, d2u=d2u, s=s, step=step, residual=residual)


def bowl_surface(n: int, r_core: float = 30.0, r_max: float | None = None,
                 dr_tip: float = 0.02, rel_step: float = 0.02,
                 r_switch: float = 6.0) -> SampledSurface:
    """Bowl meridian on graded nodes: uniform near the tip, geometric in height far out.

    Nodes up to r_core form the analysed core; the rest (to r_max) pads the
    sample so that balls around core points are covered.
    """
    r_max = r_max if r_max is not None else 2.0 * r_core
    if r_max < r_core:
        raise ValueError("r_max must be >= r_core")
    r_switch = min(r_switch, r_max)
    c, r0, sol = _graph_solution(n, r_switch, dr_tip)

    r_in = np.arange(0.0, r_switch + 1e-12, dr_tip)
    u = np.empty_like(r_in)
    p = np.empty_like(r_in)
    s = np.empty_like(r_in)
    for i, ri in enumerate(r_in):
        if ri <= r0:
            u[i], p[i], _ = _series_eval(c, ri)
            s[i] = _series_arclength(c, ri) if ri > 0 else 0.0
        else:
            u[i], p[i], s[i] = sol.sol(ri)
    dp = np.empty_like(r_in)
    dp[0] = c[0]
    dp[1:] = _graph_p_prime(n, r_in[1:], p[1:])
    w = np.sqrt(1.0 + p * p)
    lam_ax = dp / w ** 3
    lam_rot = np.empty_like(r_in)
    lam_rot[0] = c[0]
    lam_rot[1:] = p[1:] / (r_in[1:] * w[1:])
    # normal (nu_x, nu_rho) with x the height along the axis, opening upward
    nu_x = -1.0 / w
    nu_rho = p / w
    X, R, S, NX, NR, LA, LR = [u], [r_in], [s], [nu_x], [nu_rho], [lam_ax], [lam_rot]

    if r_max > r_switch:
        z0, rho0, q0, s0 = u[-1], r_in[-1], 1.0 / p[-1], s[-1]

        def rhs(z, y):
            rho, q, _ = y
            return [q, (1.0 + q * q) * ((n - 1) / rho - q), np.sqrt(1.0 + q * q)]

        def jac(z, y):
            rho, q, _ = y
            g = (n - 1) / rho - q
            return [[0.0, 1.0, 0.0],
                    [-(1.0 + q * q) * (n - 1) / rho ** 2, 2 * q * g - (1.0 + q * q), 0.0],
                    [0.0, q / np.sqrt(1.0 + q * q), 0.0]]

        def hit(z, y):
            return y[0] - r_max
        hit.terminal = True
        z_guess = z0 + 4.0 * (r_max ** 2 - rho0 ** 2) / (2 * (n - 1)) + 10.0
        tail = solve_ivp(rhs, (z0, z_guess), [rho0, q0, s0], method="Radau", rtol=RTOL,
                         atol=ATOL, jac=jac, dense_output=True, events=hit)
        if not tail.success:
            raise ArithmeticError(f"bowl tail integration failed: {tail.message}")
        z_end = tail.t[-1]
        zs = [z0]
        while zs[-1] < z_end:
            zs.append(min(zs[-1] * (1.0 + rel_step) + dr_tip, z_end))
        zs = np.array(zs[1:])
        rho, q, st = tail.sol(zs)
        w2 = np.sqrt(1.0 + q * q)
        X.append(zs)
        R.append(rho)
        S.append(st)
        NX.append(-q / w2)
        NR.append(1.0 / w2)
        LA.append((q - (n - 1) / rho) / w2)
        LR.append(1.0 / (rho * w2))

    x = np.concatenate(X)
    rho = np.concatenate(R)
    lam_ax = np.concatenate(LA)
    if np.any(lam_ax <= 0):
        bad = int(np.argmax(lam_ax <= 0))
        raise ArithmeticError(f"bowl left convexity at rho={rho[bad]:.6g}")
    core_end = int(np.searchsorted(rho, r_core, side="right"))
    return SampledSurface(n=n, s=np.concatenate(S), x=x, rho=rho,
                          nu_x=np.concatenate(NX), nu_rho=np.concatenate(NR),
                          lam_axial=lam_ax, lam_rot=np.concatenate(LR),
                          ends=("tip", "open"), core=slice(0, core_end),
                          label=f"bowl(n={n}, r_core={r_core:g}, r_max={r_max:g})")
