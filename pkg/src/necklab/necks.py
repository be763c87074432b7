"""Neck recognition, axes, height-function curves and neck/cap decomposition.

A point p is tested against cylindrical behaviour at its own scale
r_p = (n-1)/H(p):

  * pointwise pinching: lambda_1/H and (lambda_n - lambda_2)/H,
  * the normalised derivative sum  sum_{k=1..8} H(p)^{-k-1} |nabla^k h(q)|
    maximised over the intrinsic ball of radius (L + 10) r_p,
  * graph closeness over the axial window |x - x_p| <= L r_p: after scaling
    by r_p the profile must stay within eps of radius 1 in value, slope and
    second derivative.

The neck quality at p is the largest of these numbers.  Each is monotone in
the window size, so p centres an (eps, L)-neck exactly when its quality at L
is at most eps, and no search over eps is needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, linprog

from .constants import theta_hat as theta_hat_formula
from .curvature import convexity_tol
from .surface import CoverageError, SampledSurface

BALL_PAD = 10.0
ORDERS = 8
QUALITY_CAP = 1.0
CRITICAL_TOL = 1e-10  # |omega^T| below this ends a height curve
STALL_TOL = 1e-3
SHRINK_TOL = 1e-6  # relative to the seed scale; covers spline overshoot at tips
CHECK_RTOL = 1e-12  # round-off allowance when C0 is measured on the same cap


@dataclass(frozen=True)
class NeckMeasures:
    """Per-node neck measures for one L (arrays over the requested nodes)."""

    idx: np.ndarray
    L: float
    ratio_lambda1: np.ndarray
    ratio_gap: np.ndarray
    derivative_sum: np.ndarray
    graph_c0: np.ndarray
    graph_c1: np.ndarray
    graph_c2: np.ndarray
    covered: np.ndarray
    coverage_note: tuple

    @property
    def quality(self) -> np.ndarray:
        return np.max(np.vstack([self.ratio_lambda1, self.ratio_gap, self.derivative_sum,
                                 self.graph_c0, self.graph_c1, self.graph_c2]), axis=0)

    def criteria(self, j: int) -> dict:
        return {"ratio_lambda1": float(self.ratio_lambda1[j]), "ratio_gap": float(self.ratio_gap[j]),
                "derivative_sum": float(self.derivative_sum[j]), "graph_c0": float(self.graph_c0[j]),
                "graph_c1": float(self.graph_c1[j]), "graph_c2": float(self.graph_c2[j])}


def _monotone_runs(x: np.ndarray):
    """For every node, the extent of the strictly monotone stretch of x through it.

    Returns (lo, hi, turning) where turning marks nodes at which x reverses.
    """
    m = x.size
    sg = np.sign(np.diff(x))
    start = np.zeros(m - 1, dtype=int)
    end = np.zeros(m - 1, dtype=int)
    for e in range(1, m - 1):
        start[e] = start[e - 1] if sg[e] == sg[e - 1] and sg[e] != 0 else e
    end[-1] = m - 1
    for e in range(m - 3, -1, -1):
        end[e] = end[e + 1] if sg[e] == sg[e + 1] and sg[e] != 0 else e + 1
    lo = np.empty(m, dtype=int)
    hi = np.empty(m, dtype=int)
    turning = np.zeros(m, dtype=bool)
    for i in range(m):
        left = i - 1 if i > 0 else None
        right = i if i < m - 1 else None
        if left is not None and right is not None and (sg[left] != sg[right] or sg[left] == 0):
            turning[i] = True
        e = right if right is not None else left
        lo[i], hi[i] = start[e], end[e]
    return lo, hi, turning


def neck_measures(surface: SampledSurface, L: float, idx=None) -> NeckMeasures:
    """Neck measures at the given nodes (default: the core) for half-length L."""
    if L <= 0:
        raise ValueError("L must be positive")
    surf = surface
    idx = surf.core_indices if idx is None else np.atleast_1d(np.asarray(idx, dtype=int))
    n = surf.n
    H = surf.H
    lam = surf.lambdas
    k = len(idx)
    r1 = np.full(k, np.inf)
    gap = np.full(k, np.inf)
    dsum = np.full(k, np.inf)
    g0 = np.full(k, np.inf)
    g1 = np.full(k, np.inf)
    g2 = np.full(k, np.inf)
    covered = np.ones(k, dtype=bool)
    notes = [""] * k
    N = surf.derivative_norms
    s, x = surf.s, surf.x
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = -surf.nu_x / surf.nu_rho
    slope[surf.nu_rho <= 0] = np.inf
    curv2 = np.abs(surf.lam_axial) * (1.0 + slope ** 2) ** 1.5
    lo_run, hi_run, turning = _monotone_runs(x)
    powers = np.arange(1, ORDERS + 1)
    for j, i in enumerate(idx):
        if H[i] <= 0:
            notes[j] = "non-positive mean curvature"
            continue
        r1[j] = lam[i, 0] / H[i]
        gap[j] = (lam[i, -1] - lam[i, 1]) / H[i]
        rp = (n - 1) / H[i]

        # intrinsic ball, clipped at tips
        R = (L + BALL_PAD) * rp
        a = int(np.searchsorted(s, s[i] - R, side="left"))
        b = int(np.searchsorted(s, s[i] + R, side="right"))
        if not surf.translation_invariant:
            if s[i] - R < s[0] and surf.ends[0] == "open":
                covered[j] = False
                notes[j] = "ball leaves the sample"
            if s[i] + R > s[-1] and surf.ends[1] == "open":
                covered[j] = False
                notes[j] = "ball leaves the sample"
        w = H[i] ** (-(powers + 1.0))
        dsum[j] = float(np.max(N[a:b] @ w))

        # graph closeness over the axial window
        if turning[i]:
            continue
        lo, hi = lo_run[i], hi_run[i]
        half = L * rp
        seg = np.arange(lo, hi + 1)
        inside = seg[np.abs(x[seg] - x[i]) <= half]
        reach_lo = np.min(x[[lo, hi]]) > x[i] - half
        reach_hi = np.max(x[[lo, hi]]) < x[i] + half
        bad = False
        for flag, node in ((reach_lo, lo if x[lo] < x[hi] else hi),
                           (reach_hi, hi if x[lo] < x[hi] else lo)):
            if not flag or surf.translation_invariant:
                continue
            at_end = node in (0, surf.size - 1)
            if at_end and surf.ends[0 if node == 0 else 1] == "open":
                covered[j] = False
                notes[j] = "graph window leaves the sample"
            else:
                bad = True  # the meridian turns or closes up inside the window
        if bad:
            continue
        g0[j] = float(np.max(np.abs(surf.rho[inside] / rp - 1.0)))
        g1[j] = float(np.max(np.abs(slope[inside])))
        g2[j] = float(np.max(rp * curv2[inside]))
    return NeckMeasures(idx=idx, L=float(L), ratio_lambda1=r1, ratio_gap=gap, derivative_sum=dsum,
                        graph_c0=g0, graph_c1=g1, graph_c2=g2, covered=covered,
                        coverage_note=tuple(notes))


# --- certificates ----------------------------------------------------------

@dataclass(frozen=True)
class NeckCertificate:
    center: int
    epsilon: float
    epsilon_achieved: float
    L: float
    axis: np.ndarray
    radius_scale: float
    criteria: dict
    center_point: np.ndarray

    def __post_init__(self):
        if not self.epsilon_achieved >= 0:
            raise ValueError("epsilon_achieved must be nonnegative")
        if abs(np.linalg.norm(self.axis) - 1.0) > 1e-12:
            raise ValueError("axis must be a unit vector")

    accepted = True

    def to_dict(self) -> dict:
        return {"center": self.center, "epsilon": self.epsilon,
                "epsilon_achieved": self.epsilon_achieved, "L": self.L,
                "axis": [float(v) for v in self.axis], "radius_scale": self.radius_scale,
                "criteria": self.criteria,
                "center_point": [float(v) for v in self.center_point]}


@dataclass(frozen=True)
class NeckRejection:
    center: int
    epsilon: float
    L: float
    reason: str  # 'criteria' or 'coverage'
    epsilon_achieved: float
    criteria: dict
    detail: str = ""

    accepted = False

    def to_dict(self) -> dict:
        return {"center": self.center, "epsilon": self.epsilon, "L": self.L,
                "reason": self.reason, "epsilon_achieved": _finite_or_none(self.epsilon_achieved),
                "criteria": {k: _finite_or_none(v) for k, v in self.criteria.items()},
                "detail": self.detail}


def _finite_or_none(v):
    return float(v) if np.isfinite(v) else None


def neck_axis(surface: SampledSurface, center: int, L: float) -> np.ndarray:
    """Axis of the neck at `center`: least-normal direction over the graph window."""
    rp = (surface.n - 1) / surface.H[center]
    sel = np.nonzero(np.abs(surface.x - surface.x[center]) <= L * rp)[0]
    lo, hi, _ = _monotone_runs(surface.x)
    sel = sel[(sel >= lo[center]) & (sel <= hi[center])]
    if sel.size == 0:
        sel = np.array([center])
    Nrm = surface.orbit_normals(sel)
    w, V = np.linalg.eigh(Nrm.T @ Nrm)
    a = V[:, 0]
    if a @ surface.placement.axis < 0:
        a = -a
    return a / np.linalg.norm(a)


def detect_neck(surface: SampledSurface, p: int, epsilon: float, L: float):
    """NeckCertificate if p centres an (epsilon, L)-neck, else a NeckRejection."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    m = neck_measures(surface, L, [p])
    q = float(m.quality[0])
    crit = m.criteria(0)
    if not m.covered[0]:
        return NeckRejection(p, epsilon, L, "coverage", q, crit, m.coverage_note[0])
    if not q <= epsilon:
        return NeckRejection(p, epsilon, L, "criteria", q, crit)
    return NeckCertificate(center=int(p), epsilon=float(epsilon), epsilon_achieved=q, L=float(L),
                           axis=neck_axis(surface, p, L),
                           radius_scale=float((surface.n - 1) / surface.H[p]),
                           criteria=crit, center_point=surface.positions[p])


def neck_quality(surface: SampledSurface, p: int, L: float) -> float:
    """Smallest eps at which p centres an (eps, L)-neck; inf if above 1."""
    m = neck_measures(surface, L, [p])
    if not m.covered[0]:
        raise CoverageError(f"node {p}: {m.coverage_note[0]}")
    q = float(m.quality[0])
    return q if q <= QUALITY_CAP else np.inf


# --- global axis -------------------------------------------------------------

@dataclass(frozen=True)
class AxisEstimate:
    omega: np.ndarray
    min_dot: float
    neck_sup: float | None
    iterations: int

    def to_dict(self) -> dict:
        return {"omega": [float(v) for v in self.omega], "min_dot": self.min_dot,
                "neck_sup": self.neck_sup, "iterations": self.iterations}


def estimate_axis(surface: SampledSurface, neck_idx=None, extra_directions: int = 8,
                  seed: int = 0, tol: float = 1e-10, max_iter: int = 200) -> AxisEstimate:
    """Unit omega maximising min <nu, omega> over sampled orbit normals.

    Sequential linear programming on the sphere: each step maximises the
    linearised minimum over a box-shaped trust region in the tangent space and
    renormalises; the region shrinks whenever a step fails to improve.
    """
    Nrm = surface.orbit_normals(None, extra=extra_directions, rng=seed)
    d = Nrm.shape[1]
    w, V = np.linalg.eigh(Nrm.T @ Nrm)
    omega = V[:, 0]
    if np.min(Nrm @ omega) < np.min(Nrm @ -omega):
        omega = -omega
    best = float(np.min(Nrm @ omega))
    radius = 0.5
    it = 0
    while radius > tol and it < max_iter:
        it += 1
        # variables: step d (d entries), t; maximise t
        c = np.zeros(d + 1)
        c[-1] = -1.0
        A_ub = np.hstack([-Nrm, np.ones((Nrm.shape[0], 1))])
        b_ub = Nrm @ omega
        A_eq = np.concatenate([omega, [0.0]])[None, :]
        bounds = [(-radius, radius)] * d + [(None, None)]
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[0.0], bounds=bounds,
                      method="highs")
        if res.status != 0:
            radius *= 0.5
            continue
        trial = omega + res.x[:d]
        trial /= np.linalg.norm(trial)
        val = float(np.min(Nrm @ trial))
        if val > best + 1e-15:
            omega, best = trial, val
        else:
            radius *= 0.5
    if best < -1e-3:
        raise ValueError(f"no direction with min <nu, omega> >= -1e-3 (best {best:.3e}): "
                         "surface is not noncompact-convex-like")
    neck_sup = None
    if neck_idx is not None and len(neck_idx):
        NN = surface.orbit_normals(np.asarray(neck_idx), extra=extra_directions, rng=seed)
        neck_sup = float(np.max(np.abs(NN @ omega)))
    return AxisEstimate(omega, best, neck_sup, it)


# --- height-function curves ------------------------------------------------

@dataclass
class HeightCurve:
    y: np.ndarray
    s: np.ndarray
    points: np.ndarray
    nu_dot_omega: np.ndarray
    H: np.ndarray
    radius: np.ndarray
    terminal: str

    @property
    def monotone_violation(self) -> float:
        d = np.diff(self.nu_dot_omega)
        return float(max(0.0, -np.min(d))) if d.size else 0.0


@dataclass
class HeightCurveFamily:
    curves: list
    theta_hat: float | None
    H_seed: float
    monitors: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"monitors": self.monitors, "theta_hat": self.theta_hat, "H_seed": self.H_seed,
                "curves": [{"terminal": c.terminal, "y_max": float(c.y[-1]),
                            "samples": int(c.y.size)} for c in self.curves]}


def trace_height_curves(surface: SampledSurface, seed_node: int, omega, n_seeds: int = 6,
                        gamma1: float | None = None, rng=0, max_step: float | None = None,
                        tol_monotone: float = 1e-8) -> HeightCurveFamily:
    """Integral curves of omega^T/|omega^T|^2 from the level set through seed_node.

    Points of the revolution surface are F(s, e) = o + x(s) a + rho(s) e with e
    a unit vector orthogonal to the axis a.  Writing omega = w_a a + w_perp and
    c = <w_perp, e>, the tangential part of omega has meridian component
    w_a x_s + c rho_s and angular component w_perp - c e, which gives

        ds/dy = (w_a x_s + c rho_s) / |omega^T|^2,
        de/dy = (w_perp - c e) / (rho |omega^T|^2).

    When omega is the symmetry axis the curves are meridians parametrised by
    height.  Curves stop where |omega^T| < 1e-10 (a critical point of the
    height) or where they leave the sampled region.
    """
    omega = np.asarray(omega, dtype=float)
    omega = omega / np.linalg.norm(omega)
    P = surface.placement
    a = P.axis
    w_a = float(omega @ a)
    w_perp = omega - w_a * a
    S = surface.s
    spl_x = CubicSpline(S, surface.x)
    spl_r = CubicSpline(S, surface.rho)
    spl_nx = CubicSpline(S, surface.nu_x)
    spl_nr = CubicSpline(S, surface.nu_rho)
    spl_H = CubicSpline(S, surface.H)
    H_seed = float(surface.H[seed_node])
    th = theta_hat_formula(surface.n, gamma1) if gamma1 is not None else None
    s_lo, s_hi = S[0], S[-1]
    max_step = max_step or 0.05 * (surface.n - 1) / max(H_seed, 1e-12)

    def point(s, e):
        return P.origin + spl_x(s) * a + spl_r(s) * e

    # seeds on the level set {y = 0} through the seed node
    dirs = surface.orbit_directions(extra=max(0, n_seeds - 2 * surface.n), rng=rng)[:n_seeds]
    p0 = surface.positions[seed_node]
    seeds = []
    for e in dirs:
        def height(s):
            return float((point(s, e) - p0) @ omega)
        s0 = float(S[seed_node])
        if abs(height(s0)) < 1e-14:
            seeds.append((s0, e))
            continue
        # bracket the level crossing along the meridian in direction e
        step = 0.1 * (surface.n - 1) / max(H_seed, 1e-12)
        found = None
        for k in range(1, 200):
            for sgn in (1, -1):
                s1 = s0 + sgn * k * step
                s_prev = s0 + sgn * (k - 1) * step
                if not s_lo <= s1 <= s_hi:
                    continue
                if height(s_prev) * height(s1) <= 0:
                    found = brentq(height, min(s_prev, s1), max(s_prev, s1), xtol=1e-14)
                    break
            if found is not None:
                break
        if found is not None:
            seeds.append((found, e))

    centre = np.mean([point(s, e) for s, e in seeds], axis=0) if seeds else p0
    curves = []
    for s0, e0 in seeds:
        curves.append(_trace_one(s0, e0, omega, w_a, w_perp, a, spl_x, spl_r, spl_nx, spl_nr,
                                 spl_H, point, centre, s_lo, s_hi, surface, max_step))

    mono = max((c.monotone_violation for c in curves), default=0.0)
    shrink_viol = 0.0
    for c in curves:
        if c.nu_dot_omega[0] > tol_monotone and c.radius.size > 1:
            shrink_viol = max(shrink_viol, float(np.max(np.diff(c.radius))))
    h_ratio = min((float(np.min(c.H)) / H_seed for c in curves), default=np.inf)
    monitors = {
        "monotone_violation": mono,
        "monotone_flagged": bool(mono > tol_monotone),
        "shrinking_violation": shrink_viol,
        "shrinking_flagged": bool(shrink_viol > SHRINK_TOL * (surface.n - 1) / H_seed),
        "min_H_ratio": h_ratio,
        "theta_bound_holds": None if th is None else bool(h_ratio >= th),
        "terminals": sorted({c.terminal for c in curves}),
    }
    return HeightCurveFamily(curves, th, H_seed, monitors)


def _trace_one(s0, e0, omega, w_a, w_perp, a, spl_x, spl_r, spl_nx, spl_nr, spl_H, point,
               centre, s_lo, s_hi, surface, max_step):
    xs = spl_x.derivative()
    rs = spl_r.derivative()
    dim = a.size

    def tangent_parts(s, e):
        tx, tr = float(xs(s)), float(rs(s))
        nt = np.hypot(tx, tr)
        tx, tr = tx / nt, tr / nt
        c = float(w_perp @ e)
        along = w_a * tx + c * tr
        perp = w_perp - c * e
        return along, perp, along * along + float(perp @ perp), tx, tr, nt

    def rhs(y, z):
        s, e = z[0], z[1:]
        e = e / np.linalg.norm(e)
        along, perp, g2, tx, tr, nt = tangent_parts(s, e)
        rho = max(float(spl_r(s)), 1e-300)
        return np.concatenate([[along / g2 / nt], perp / (rho * g2)])

    def critical(y, z):
        s, e = z[0], z[1:] / np.linalg.norm(z[1:])
        return tangent_parts(s, e)[2] - CRITICAL_TOL ** 2
    critical.terminal = True

    def leave_lo(y, z):
        return z[0] - s_lo
    leave_lo.terminal = True

    def leave_hi(y, z):
        return s_hi - z[0]
    leave_hi.terminal = True

    def near_axis(y, z):
        return float(spl_r(z[0])) - 1e-9 * max(1.0, float(np.max(surface.rho)))
    near_axis.terminal = True

    span = 4.0 * (s_hi - s_lo) + 1.0
    sol = solve_ivp(rhs, (0.0, span), np.concatenate([[s0], e0]), method="RK45", rtol=1e-10,
                    atol=1e-12, max_step=max_step, events=[critical, leave_lo, leave_hi, near_axis])
    names = ["critical-point", "left-sample", "left-sample", "reached-axis"]
    terminal = "span"
    for k, ev in enumerate(sol.t_events):
        if len(ev):
            terminal = names[k]
    if sol.status == -1:
        # near a nondegenerate critical point ds/dy ~ (y* - y)^(-1/2) and the
        # integrator stalls before |omega^T| reaches the event threshold
        z = sol.y[:, -1]
        g = np.sqrt(tangent_parts(z[0], z[1:] / np.linalg.norm(z[1:]))[2])
        terminal = "critical-point" if g < STALL_TOL else "solver-failure"
    ys = sol.t
    ss = sol.y[0]
    E = sol.y[1:].T
    E = E / np.linalg.norm(E, axis=1, keepdims=True)
    pts = np.array([point(s, e) for s, e in zip(ss, E)])
    nu = spl_nx(ss)[:, None] * a + spl_nr(ss)[:, None] * E
    dots = nu @ omega
    Hs = spl_H(ss)
    rel = pts - centre
    rad = np.linalg.norm(rel - np.outer(rel @ omega, omega), axis=1)
    return HeightCurve(ys, ss, pts, dots, Hs, rad, terminal)


# --- decomposition -----------------------------------------------------------

@dataclass
class CapRegion:
    start: int
    stop: int  # inclusive node range along the meridian
    tip_end: int | None  # 0 or 1 when the cap contains that tip end
    diameter: float
    H_min: float
    H_max: float
    min_ratio_lambda1: float
    convex: bool
    transition: int | None = None
    C0: float = np.inf
    C0_terms: dict = field(default_factory=dict)

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.start, self.stop + 1)

    def to_dict(self) -> dict:
        return {"start": self.start, "stop": self.stop, "tip_end": self.tip_end,
                "size": self.stop - self.start + 1, "diameter": self.diameter,
                "H_min": self.H_min, "H_max": self.H_max,
                "min_ratio_lambda1": self.min_ratio_lambda1, "convex": self.convex,
                "transition": self.transition, "C0": _finite_or_none(self.C0),
                "C0_terms": {k: _finite_or_none(v) for k, v in self.C0_terms.items()}}


@dataclass(frozen=True)
class Check:
    name: str
    status: str  # pass, fail, indeterminate
    margin: float | None
    detail: str = ""

    def to_dict(self) -> dict:
        m = self.margin
        return {"name": self.name, "status": self.status,
                "margin": None if m is None or not np.isfinite(m) else float(m),
                "detail": self.detail}


@dataclass
class DecompositionReport:
    topology: str
    neck_points: np.ndarray
    caps: list
    uncovered: np.ndarray
    transition_points: list
    C0_measured: float
    C0_used: float
    checks: list
    quality: np.ndarray
    quality_2L: np.ndarray
    classification: np.ndarray  # per core node: 'neck', 'cap', 'uncovered'
    params: dict
    hypotheses: dict

    @property
    def neck_fraction(self) -> float:
        total = len(self.classification)
        return float(np.sum(self.classification == "neck") / total) if total else 0.0

    @property
    def all_passed(self) -> bool:
        return all(c.status == "pass" for c in self.checks)

    def to_dict(self) -> dict:
        return {"topology": self.topology, "neck_fraction": self.neck_fraction,
                "neck_count": int(len(self.neck_points)),
                "uncovered_count": int(len(self.uncovered)),
                "caps": [c.to_dict() for c in self.caps],
                "transition_points": [int(t) for t in self.transition_points],
                "C0_measured": _finite_or_none(self.C0_measured),
                "C0_used": _finite_or_none(self.C0_used),
                "checks": [c.to_dict() for c in self.checks],
                "params": self.params, "hypotheses": self.hypotheses}


def _components(mask: np.ndarray):
    """Maximal runs of True as (start, stop) inclusive index pairs."""
    out = []
    i = 0
    m = mask.size
    while i < m:
        if mask[i]:
            j = i
            while j + 1 < m and mask[j + 1]:
                j += 1
            out.append((i, j))
            i = j + 1
        else:
            i += 1
    return out


def decompose(surface: SampledSurface, epsilon0: float, epsilon1: float, L: float,
              C0: float | None = None) -> DecompositionReport:
    """Split the sampled surface into (eps0, L)-neck points and caps.

    Caps are the connected runs of covered core nodes that do not centre an
    (eps0, L)-neck.  Each cap's transition point is the first node, counted
    from its tip, that centres an (eps1, L)-neck but not an (eps1/2, 2L)-neck.
    The checks use C0 if given, otherwise the measured value.
    """
    if not 0 < epsilon1 < epsilon0:
        raise ValueError(f"need 0 < eps1 < eps0, got eps1={epsilon1}, eps0={epsilon0}")
    if L <= 0:
        raise ValueError("L must be positive")
    surf = surface
    n = surf.n
    idx = surf.core_indices
    mL = neck_measures(surf, L, idx)
    m2 = neck_measures(surf, 2 * L, idx)
    qL, q2 = mL.quality, m2.quality
    cov = mL.covered
    cls = np.where(~cov, "uncovered", np.where(qL <= epsilon0, "neck", "cap"))
    H = surf.H
    lam1 = surf.lambdas[:, 0]
    core_H = H[idx]
    hyp = {"H_positive": bool(np.all(core_H > 0)),
           "convex": bool(np.all(lam1[idx] >= -convexity_tol(1.0) * np.abs(core_H))),
           "strictly_convex": bool(np.all(lam1[idx] > 0))}

    local = {int(g): j for j, g in enumerate(idx)}
    caps = []
    for a, b in _components(cls == "cap"):
        ga, gb = int(idx[a]), int(idx[b])
        tip_end = None
        if ga == 0 and surf.ends[0] == "tip":
            tip_end = 0
        elif gb == surf.size - 1 and surf.ends[1] == "tip":
            tip_end = 1
        sel = np.arange(ga, gb + 1)
        lr = lam1[sel] / H[sel]
        if tip_end == 0:
            diam = 2.0 * (surf.s[gb] - surf.s[0])
        elif tip_end == 1:
            diam = 2.0 * (surf.s[-1] - surf.s[ga])
        else:
            diam = (surf.s[gb] - surf.s[ga]) + np.pi * float(np.max(surf.rho[sel]))
        caps.append(CapRegion(ga, gb, tip_end, float(diam), float(H[sel].min()),
                              float(H[sel].max()), float(lr.min()), bool(np.all(lr > 0))))

    # transition points, scanning away from each cap's tip
    for cap in caps:
        if cap.tip_end is None:
            continue
        order = range(len(idx)) if cap.tip_end == 0 else range(len(idx) - 1, -1, -1)
        for j in order:
            if not cov[j]:
                continue
            finer = m2.covered[j] and q2[j] <= epsilon1 / 2
            if qL[j] <= epsilon1 and not finer:
                cap.transition = int(idx[j])
                break
        if cap.transition is not None:
            t = cap.transition
            sel = cap.indices
            Hp = H[t]
            lr = lam1[sel] / H[sel]
            terms = {"H_max_ratio": float(H[sel].max() / Hp), "H_min_ratio": float(Hp / H[sel].min()),
                     "inv_pinching": float(1.0 / lr.min()) if lr.min() > 0 else np.inf,
                     "diameter": float(cap.diameter * Hp / (n - 1))}
            cap.C0_terms = terms
            cap.C0 = max(1.0, *terms.values())
    transitions = [c.transition for c in caps if c.transition is not None]
    C0_meas = max((c.C0 for c in caps), default=1.0)
    C0_used = float(C0) if C0 is not None else C0_meas

    tips = [e for e in (0, 1) if surf.ends[e] == "tip"]
    touches_open = any(c.start == 0 and surf.ends[0] == "open" or
                       c.stop == surf.size - 1 and surf.ends[1] == "open" for c in caps)
    if surf.translation_invariant or not tips or touches_open or np.any(~cov):
        topology = "truncated"
    elif len(tips) == 2:
        topology = "compact"
    else:
        topology = "noncompact"

    checks = _structure_checks(surf, caps, cls, idx, qL, cov, epsilon0, L, C0_used, topology,
                               hyp, local)
    rep = DecompositionReport(topology=topology, neck_points=idx[cls == "neck"], caps=caps,
                              uncovered=idx[cls == "uncovered"], transition_points=transitions,
                              C0_measured=float(C0_meas), C0_used=C0_used, checks=checks,
                              quality=qL, quality_2L=q2, classification=cls,
                              params={"epsilon0": epsilon0, "epsilon1": epsilon1, "L": L,
                                      "C0_source": "given" if C0 is not None else "measured"},
                              hypotheses=hyp)
    return rep


def _structure_checks(surf, caps, cls, idx, qL, cov, eps0, L, C0, topology, hyp, local):
    n = surf.n
    H = surf.H
    lam1 = surf.lambdas[:, 0]
    out = []
    expected = {"compact": 2, "noncompact": 1}.get(topology)

    def status(ok, hypothesis_ok=True):
        if ok:
            return "pass"
        return "fail" if hypothesis_ok else "indeterminate"

    convex_ok = hyp["strictly_convex"] and hyp["H_positive"]
    if expected is None:
        out.append(Check("cap count", "indeterminate", None, f"topology {topology}"))
        return out
    out.append(Check("cap count", status(len(caps) == expected, convex_ok), None,
                     f"{len(caps)} caps, expected {expected}"))

    # (1) every point outside the bounded cap regions centres an (eps0, L)-neck
    inside_D = np.zeros(surf.size, dtype=bool)
    missing = False
    for cap in caps:
        if cap.transition is None or cap.tip_end is None:
            missing = True
            continue
        t = cap.transition
        rp = (n - 1) / H[t]
        toward_tip = np.arange(0, t) if cap.tip_end == 0 else np.arange(t + 1, surf.size)
        far = toward_tip[np.abs(surf.x[toward_tip] - surf.x[t]) > L * rp]
        inside_D[far] = True
    outside = np.array([j for j, g in enumerate(idx) if not inside_D[g] and cov[j]], dtype=int)
    if missing:
        out.append(Check("(1) neck region", "indeterminate", None, "a cap has no transition point"))
    else:
        worst = float(np.max(qL[outside])) if outside.size else 0.0
        out.append(Check("(1) neck region", status(worst <= eps0, convex_ok), eps0 - worst,
                         f"max quality outside the bounded regions {worst:.4g}"))

    for k, cap in enumerate(caps, 1):
        tag = f"cap{k}"
        ball = cap.tip_end is not None and not (
            (cap.start == 0 and surf.ends[0] == "open")
            or (cap.stop == surf.size - 1 and surf.ends[1] == "open"))
        out.append(Check(f"{tag} (2) ball", status(ball, convex_ok), None,
                         "one meridian interval closing at a tip" if ball else "cap has no tip"))
        # (3) the cap boundary orbit is a cross-section of an (eps0, L)-neck
        b = cap.stop + 1 if cap.tip_end == 0 else cap.start - 1
        if 0 <= b < surf.size and b in local and cls[local[b]] == "neck":
            ax = neck_axis(surf, b, L)
            align = abs(float(ax @ surf.placement.axis))
            ok = align >= 1 - 1e-9
            out.append(Check(f"{tag} (3) boundary cross-section", status(ok, convex_ok),
                             eps0 - float(qL[local[b]]),
                             f"boundary node {b}, axis alignment {align:.12f}"))
        else:
            out.append(Check(f"{tag} (3) boundary cross-section", "indeterminate", None,
                             "no neck node beyond the cap"))
        if cap.transition is None:
            out.append(Check(f"{tag} (4) diameter", "indeterminate", None, "no transition point"))
            out.append(Check(f"{tag} (5) curvature", "indeterminate", None, "no transition point"))
            continue
        if not np.isfinite(C0):
            out.append(Check(f"{tag} (4) diameter", "indeterminate", None, "C0 is infinite"))
            out.append(Check(f"{tag} (5) curvature", "indeterminate", None, "C0 is infinite"))
            continue
        Hp = H[cap.transition]
        bound = C0 * (n - 1) / Hp
        out.append(Check(f"{tag} (4) diameter", status(cap.diameter <= bound * (1 + CHECK_RTOL), convex_ok),
                         bound - cap.diameter,
                         f"diameter {cap.diameter:.6g} vs C0 (n-1)/H(p) = {bound:.6g}"))
        sel = cap.indices
        r = H[sel] / Hp
        with np.errstate(divide="ignore", invalid="ignore"):
            m5 = min(float(np.min(r - 1.0 / C0)), float(np.min(C0 - r)),
                     float(np.min(lam1[sel] / H[sel] - 1.0 / C0)))
        out.append(Check(f"{tag} (5) curvature", status(m5 >= -CHECK_RTOL * C0, convex_ok), m5,
                         "H/H(p) in [1/C0, C0] and lambda_1 >= H/C0 on the cap"))
    return out


# --- axis alignment and calibration ----------------------------------------

@dataclass(frozen=True)
class AlignmentResult:
    max_angle: float  # radians
    max_epsilon: float
    measured_C: float
    pairs: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def axis_alignment_check(certificates) -> AlignmentResult:
    """Largest pairwise angle between neck axes, orientation ignored."""
    certs = list(certificates)
    if len(certs) < 2:
        raise ValueError("need at least two certificates")
    A = np.array([c.axis for c in certs])
    G = np.clip(np.abs(A @ A.T), 0.0, 1.0)
    ang = float(np.max(np.arccos(G[np.triu_indices(len(certs), 1)])))
    eps = max(c.epsilon_achieved for c in certs)
    C = ang / eps if eps > 0 else (0.0 if ang == 0 else np.inf)
    return AlignmentResult(ang, float(eps), float(C), len(certs) * (len(certs) - 1) // 2)


@dataclass(frozen=True)
class EtaCalibration:
    eta0: float
    limiting_node: int | None
    samples: int
    rejected: int

    def to_dict(self) -> dict:
        return {"eta0": _finite_or_none(self.eta0), "limiting_node": self.limiting_node,
                "samples": self.samples, "rejected": self.rejected}


def calibrate_eta0(surface: SampledSurface, epsilon0: float, L: float) -> EtaCalibration:
    """Largest eta such that every covered sample with lambda_1 <= eta H centres an (eps0, L)-neck.

    Equals the smallest lambda_1/H among covered samples that fail to centre
    such a neck (infinite when none fail).
    """
    m = neck_measures(surface, L)
    q = m.quality
    rej = m.covered & ~(q <= epsilon0)
    if not np.any(rej):
        return EtaCalibration(np.inf, None, int(m.covered.sum()), 0)
    r = np.where(rej, m.ratio_lambda1, np.inf)
    j = int(np.argmin(r))
    return EtaCalibration(float(r[j]), int(m.idx[j]), int(m.covered.sum()), int(rej.sum()))
