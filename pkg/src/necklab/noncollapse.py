"""Inscribed radii, alpha-noncollapsing and the cap height estimate.

For a point p with outward normal nu, the largest interior tangent ball has
radius

    r_in(p) = inf_q |F(q) - F(p)|^2 / (2 <F(p) - F(q), nu(p)>)

over surface points q with a positive denominator.  On a surface of
revolution, q runs over orbits (x_q, rho_q e).  With c the cosine between e
and the meridian direction of p, the quotient is a linear-fractional function
of c, so its infimum over an orbit sits at c = +1 or c = -1: the meridian of
p or the opposite one.  The limits q -> p along the meridian and along the
orbit of p give the candidates 1/lambda_axial and 1/lambda_rot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import cap_alpha_bound
from .surface import CoverageError, SampledSurface

PRECONDITION_RTOL = 1e-9
HEIGHT_TOL = 1e-12


class PreconditionError(ValueError):
    """The probed region violates the curvature normalisation of the estimate."""


def _candidates(surf: SampledSurface, idx: np.ndarray):
    """Interior-sphere radii for nodes idx against every node (both meridians)."""
    xp, rp = surf.x[idx, None], surf.rho[idx, None]
    nx, nr = surf.nu_x[idx, None], surf.nu_rho[idx, None]
    xq, rq = surf.x[None, :], surf.rho[None, :]
    dx = xp - xq
    out = []
    for c in (1.0, -1.0):
        num = dx ** 2 + rp ** 2 + rq ** 2 - 2.0 * c * rp * rq
        den = 2.0 * (nx * dx + nr * (rp - c * rq))
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(den > 0, num / den, np.inf)
        if c == 1.0:
            r[np.arange(len(idx)), idx] = np.inf  # q = p itself
        out.append(r)
    return np.minimum(out[0], out[1])


def _ball_leaves_sample(surf: SampledSurface, i: int, r: float) -> bool:
    """True if the tangent ball at i reaches past an open end of the sample."""
    if surf.translation_invariant or not np.isfinite(r):
        return not np.isfinite(r)
    cx = surf.x[i] - r * surf.nu_x[i]
    for end in (0, 1):
        if surf.ends[end] != "open":
            continue
        xe = surf.x[0 if end == 0 else -1]
        other = surf.x[-1 if end == 0 else 0]
        if xe <= other and cx - r < xe:
            return True
        if xe > other and cx + r > xe:
            return True
    return False


def _inscribed(surf: SampledSurface, idx: np.ndarray, chunk: int = 512):
    r = np.empty(len(idx))
    for a in range(0, len(idx), chunk):
        sel = idx[a:a + chunk]
        r[a:a + chunk] = _candidates(surf, sel).min(axis=1)
    with np.errstate(divide="ignore"):
        lim = np.minimum(np.where(surf.lam_axial[idx] > 0, 1.0 / surf.lam_axial[idx], np.inf),
                         np.where(surf.lam_rot[idx] > 0, 1.0 / surf.lam_rot[idx], np.inf))
    r = np.minimum(r, lim)
    covered = np.array([not _ball_leaves_sample(surf, i, v) for i, v in zip(idx, r)])
    return r, covered


def inscribed_radius(surface: SampledSurface, p: int) -> float:
    """Largest interior tangent ball radius at node p, up to sampling resolution."""
    r, cov = _inscribed(surface, np.array([p]))
    if not cov[0]:
        raise CoverageError(f"node {p}: no admissible obstruction inside the sample")
    return float(r[0])


@dataclass(frozen=True)
class AlphaProfile:
    idx: np.ndarray
    r_in: np.ndarray  # nan where excluded
    alpha: np.ndarray
    excluded: int

    def __post_init__(self):
        ok = np.isfinite(self.r_in)
        if np.any(self.r_in[ok] <= 0):
            raise ValueError("inscribed radii must be positive")

    @property
    def min_alpha(self) -> float:
        return float(np.nanmin(self.alpha))

    @property
    def argmin(self) -> int:
        return int(self.idx[np.nanargmin(self.alpha)])

    def to_dict(self) -> dict:
        return {"min_alpha": self.min_alpha, "argmin": self.argmin, "excluded": self.excluded,
                "samples": int(len(self.idx))}


def alpha_profile(surface: SampledSurface, idx=None) -> AlphaProfile:
    """Inscribed radius and alpha = H r_in over the core (or the given nodes)."""
    idx = surface.core_indices if idx is None else np.atleast_1d(np.asarray(idx, dtype=int))
    r, cov = _inscribed(surface, idx)
    r = np.where(cov, r, np.nan)
    if not np.any(cov):
        raise CoverageError("no sample has an admissible obstruction")
    return AlphaProfile(idx, r, surface.H[idx] * r, int(np.sum(~cov)))


@dataclass(frozen=True)
class NoncollapseVerdict:
    holds: bool
    alpha: float
    worst: int
    worst_margin: float  # r_in - alpha/H + tolerance at the worst sample
    excluded: int

    def __bool__(self):
        return self.holds

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def verify_noncollapsing(surface: SampledSurface, alpha: float, idx=None,
                         profile: AlphaProfile | None = None) -> NoncollapseVerdict:
    """r_in >= alpha/H - 2 * local spacing at every covered sample."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    prof = profile or alpha_profile(surface, idx)
    H = surface.H[prof.idx]
    tol = 2.0 * surface.spacing[prof.idx]
    margin = prof.r_in - alpha / H + tol
    j = int(np.nanargmin(margin))
    return NoncollapseVerdict(bool(np.nanmin(margin) >= 0), float(alpha), int(prof.idx[j]),
                              float(margin[j]), prof.excluded)


def neck_inscribed_bound(n: int, H) -> np.ndarray:
    """Lower bound (n-1)/(8H) on the inscribed radius at a neck centre."""
    return (n - 1) / (8.0 * np.asarray(H, dtype=float))


# --- geodesic probes -------------------------------------------------------

@dataclass(frozen=True)
class GeodesicProbe:
    node: int
    direction: int
    alpha: float
    C0: float
    s: np.ndarray
    f: np.ndarray
    k: np.ndarray
    f_second_at_zero: float
    truncated: bool

    @property
    def k_bound(self) -> np.ndarray:
        return 0.25 * self.s ** 2 / self.C0 ** 2

    @property
    def height_margin(self) -> float:
        return float(np.min(self.k - self.k_bound))

    @property
    def height_violations(self) -> int:
        return int(np.sum(self.k < self.k_bound - HEIGHT_TOL))

    @property
    def f_positive(self) -> bool:
        return bool(np.all(self.f[1:] > 0))

    def to_dict(self) -> dict:
        return {"node": self.node, "direction": self.direction, "alpha": self.alpha,
                "C0": self.C0, "s_max": float(self.s[-1]), "samples": int(self.s.size),
                "f_second_at_zero": self.f_second_at_zero, "f_positive": self.f_positive,
                "height_margin": self.height_margin, "height_violations": self.height_violations,
                "truncated": self.truncated}


def check_pinching(surface: SampledSurface, nodes, C0: float) -> None:
    """Raise PreconditionError unless 1/C0 <= H <= C0 and lambda_1 >= H/C0 at the nodes."""
    H = surface.H[nodes]
    lam1 = surface.lambdas[nodes, 0]
    slack = PRECONDITION_RTOL * C0
    if np.any(H < 1.0 / C0 - slack) or np.any(H > C0 + slack):
        raise PreconditionError(f"pinching precondition: H outside [1/C0, C0] = "
                                f"[{1 / C0:.4g}, {C0:.4g}] (H in [{H.min():.4g}, {H.max():.4g}])")
    if np.any(lam1 < H / C0 - slack * H):
        raise PreconditionError("pinching precondition: lambda_1 < H/C0 on the probed region")


def geodesic_functions(surface: SampledSurface, p: int, direction: int, alpha: float, C0: float,
                       samples: int = 101, s_max: float | None = None) -> GeodesicProbe:
    """f and k along the meridian geodesic leaving p in the given direction (+1 or -1).

    The surface must already be normalised so that 1/C0 <= H <= C0 and
    lambda_1 >= H/C0 on the probed arc.  The arc has length alpha * C0 unless
    s_max is given; it is cut short where the sample ends.
    """
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    if alpha <= 0 or C0 < 1:
        raise ValueError("need alpha > 0 and C0 >= 1")
    surf = surface
    length = alpha * C0 if s_max is None else float(s_max)
    lo, hi = surf.meridian_range()
    s0 = surf.s[p]
    room = (hi - s0) if direction == 1 else (s0 - lo)
    truncated = room < length
    length = min(length, room)
    # nodes on the probed arc, folding back across a tip onto the same meridian set
    S, (arc,), _ = surf._augmented([np.arange(surf.size, dtype=float)])
    seg = np.sort([s0, s0 + direction * length])
    on_arc = arc[(S >= seg[0] - 1e-12) & (S <= seg[1] + 1e-12)].astype(int)
    check_pinching(surf, np.unique(np.concatenate([on_arc, [p]])), C0)

    s = np.linspace(0.0, length, samples)
    xr = surf.meridian_point(s0 + direction * s)
    pts = surf.embed(xr)
    Fp = surf.positions[p]
    nu = surf.normals[p]
    rel = pts - Fp
    f = 0.5 * (np.sum((rel + alpha * C0 * nu) ** 2, axis=1) - (alpha * C0) ** 2)
    k = -(rel @ nu)
    # along a meridian h(e, e) is the axial curvature
    f2 = 1.0 - alpha * C0 * float(surf.lam_axial[p])
    return GeodesicProbe(int(p), direction, float(alpha), float(C0), s, f, k, f2, bool(truncated))


@dataclass(frozen=True)
class HeightSweep:
    probes: list
    C0: float
    alpha: float
    scale: float

    @property
    def points(self) -> int:
        return sum(pr.s.size for pr in self.probes)

    @property
    def violations(self) -> int:
        return sum(pr.height_violations for pr in self.probes)

    @property
    def min_margin(self) -> float:
        return min(pr.height_margin for pr in self.probes)

    def to_dict(self) -> dict:
        return {"C0": self.C0, "alpha": self.alpha, "scale": self.scale, "points": self.points,
                "violations": self.violations, "min_margin": self.min_margin,
                "f_positive": all(pr.f_positive for pr in self.probes),
                "min_f_second_at_zero": min(pr.f_second_at_zero for pr in self.probes)}


def height_sweep(surface: SampledSurface, nodes, C0: float, H_ref: float | None = None,
                 samples: int = 50) -> HeightSweep:
    """Probe both meridian directions from each node with alpha = C0^-2 / 2.

    The surface is first rescaled so that H_ref (default: H at the first node)
    becomes 1, the normalisation under which C0 bounds H from both sides.
    """
    nodes = np.atleast_1d(np.asarray(nodes, dtype=int))
    H_ref = float(surface.H[nodes[0]]) if H_ref is None else float(H_ref)
    surf = surface.scaled(H_ref)
    alpha = cap_alpha_bound(C0)[1]
    probes = [geodesic_functions(surf, int(i), d, alpha, C0, samples=samples)
              for i in nodes for d in (1, -1)]
    return HeightSweep(probes, float(C0), float(alpha), H_ref)
