"""Sampled O(n)-symmetric hypersurfaces in R^{n+1}.

A surface is stored through one meridian: nodes ordered by arclength s, each
carrying the axial coordinate x, the distance rho from the axis, the outward
unit normal in the meridian plane, and the two principal curvature functions
(axial, and rotational with multiplicity n-1).  Every node stands for the
(n-1)-sphere orbit through it.  A rigid placement maps the meridian plane into
R^{n+1}.

Ends of the meridian are 'tip' (the meridian meets the axis, the surface closes
smoothly), 'open' (the sample stops; no information beyond), or the whole
surface is translation invariant along the axis (exact cylinders).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from math import factorial

import numpy as np
from scipy.interpolate import CubicSpline

from .curvature import CurvatureSpectrum, rotational_lambdas

MAX_ORDER = 8
FIT_DEGREE = 10
FIT_MIN_NODES = 17
FIT_MAX_NODES = 41
TIP_RHO = 1e-12


class CoverageError(ValueError):
    """The sample does not extend far enough around a point."""


@dataclass(frozen=True)
class Placement:
    origin: np.ndarray
    frame: np.ndarray  # (n+1, n+1) orthonormal; column 0 is the axis, column 1 the meridian direction

    @classmethod
    def standard(cls, n: int) -> "Placement":
        return cls(np.zeros(n + 1), np.eye(n + 1))

    @property
    def axis(self) -> np.ndarray:
        return self.frame[:, 0]

    @property
    def radial(self) -> np.ndarray:
        return self.frame[:, 1]

    def moved(self, R, t) -> "Placement":
        R = np.asarray(R, dtype=float)
        return Placement(R @ self.origin + np.asarray(t, dtype=float), R @ self.frame)


@dataclass(frozen=True, eq=False)
class SampledSurface:
    n: int
    s: np.ndarray
    x: np.ndarray
    rho: np.ndarray
    nu_x: np.ndarray
    nu_rho: np.ndarray
    lam_axial: np.ndarray
    lam_rot: np.ndarray
    ends: tuple = ("open", "open")
    translation_invariant: bool = False
    placement: Placement | None = None
    core: slice = slice(None)
    label: str = ""
    exact_jets: np.ndarray | None = None  # (2, MAX_ORDER+1, m) if known in closed form
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        m = len(self.s)
        for name in ("x", "rho", "nu_x", "nu_rho", "lam_axial", "lam_rot"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (m,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({m},)")
            object.__setattr__(self, name, arr)
        s = np.asarray(self.s, dtype=float)
        if m < 2 or np.any(np.diff(s) <= 0):
            raise ValueError("meridian arclength must be strictly increasing")
        object.__setattr__(self, "s", s)
        if np.any(self.rho < -1e-12):
            raise ValueError("negative distance from the axis")
        if self.placement is None:
            object.__setattr__(self, "placement", Placement.standard(self.n))
        for e in self.ends:
            if e not in ("tip", "open"):
                raise ValueError(f"unknown end kind {e!r}")

    # --- basic fields -------------------------------------------------

    @property
    def size(self) -> int:
        return len(self.s)

    @cached_property
    def core_indices(self) -> np.ndarray:
        return np.arange(self.size)[self.core]

    @cached_property
    def H(self) -> np.ndarray:
        return self.lam_axial + (self.n - 1) * self.lam_rot

    @cached_property
    def lambdas(self) -> np.ndarray:
        return rotational_lambdas(self.lam_axial, self.lam_rot, self.n)

    def spectrum(self, i: int) -> CurvatureSpectrum:
        return CurvatureSpectrum.from_lambdas(self.lambdas[i])

    @cached_property
    def spacing(self) -> np.ndarray:
        """Largest adjacent arclength gap at each node."""
        d = np.diff(self.s)
        left = np.concatenate([[d[0]], d])
        right = np.concatenate([d, [d[-1]]])
        return np.maximum(left, right)

    @cached_property
    def positions(self) -> np.ndarray:
        P = self.placement
        return P.origin + np.outer(self.x, P.axis) + np.outer(self.rho, P.radial)

    @cached_property
    def normals(self) -> np.ndarray:
        P = self.placement
        return np.outer(self.nu_x, P.axis) + np.outer(self.nu_rho, P.radial)

    def orbit_directions(self, extra: int = 0, rng=None) -> np.ndarray:
        """Unit vectors orthogonal to the axis: +- each frame direction, plus random ones."""
        F = self.placement.frame
        dirs = [F[:, j] for j in range(1, self.n + 1)]
        dirs += [-d for d in dirs]
        if extra:
            rng = np.random.default_rng(rng)
            G = rng.standard_normal((extra, self.n)) @ F[:, 1:].T
            dirs += list(G / np.linalg.norm(G, axis=1, keepdims=True))
        return np.array(dirs)

    def orbit_normals(self, idx=None, extra: int = 0, rng=None) -> np.ndarray:
        idx = self.core_indices if idx is None else np.atleast_1d(idx)
        E = self.orbit_directions(extra, rng)
        a = self.placement.axis
        N = self.nu_x[idx, None, None] * a + self.nu_rho[idx, None, None] * E[None, :, :]
        return N.reshape(-1, self.n + 1)

    def orbit_points(self, idx=None, extra: int = 0, rng=None) -> np.ndarray:
        idx = self.core_indices if idx is None else np.atleast_1d(idx)
        E = self.orbit_directions(extra, rng)
        P = self.placement
        X = P.origin + self.x[idx, None, None] * P.axis + self.rho[idx, None, None] * E[None, :, :]
        return X.reshape(-1, self.n + 1)

    # --- rigid motions and scaling -------------------------------------

    def moved(self, R, t) -> "SampledSurface":
        return replace(self, placement=self.placement.moved(R, t))

    def scaled(self, c: float) -> "SampledSurface":
        if c <= 0:
            raise ValueError("scale factor must be positive")
        jets = None
        if self.exact_jets is not None:
            k = np.arange(MAX_ORDER + 1)
            jets = self.exact_jets / c ** (k[None, :, None] + 1)
        P = self.placement
        return replace(self, s=c * self.s, x=c * self.x, rho=c * self.rho,
                       lam_axial=self.lam_axial / c, lam_rot=self.lam_rot / c,
                       placement=Placement(c * P.origin, P.frame), exact_jets=jets)

    # --- interpolation along the meridian ------------------------------

    def _augmented(self, values_even, values_odd=()):
        """Nodes extended by reflection across tip ends.

        Even quantities (curvatures, x) are mirrored, odd ones (rho, nu_rho)
        change sign, so data continue smoothly onto the opposite meridian.
        """
        s = self.s
        segs = [(s, [np.asarray(v) for v in values_even], [np.asarray(v) for v in values_odd])]
        if self.ends[0] == "tip":
            k = s > s[0]
            segs.insert(0, ((2 * s[0] - s[k])[::-1],
                            [v[k][::-1] for v in values_even], [-v[k][::-1] for v in values_odd]))
        if self.ends[1] == "tip":
            k = s < s[-1]
            segs.append(((2 * s[-1] - s[k])[::-1],
                         [v[k][::-1] for v in values_even], [-v[k][::-1] for v in values_odd]))
        S = np.concatenate([g[0] for g in segs])
        E = [np.concatenate([g[1][j] for g in segs]) for j in range(len(values_even))]
        O = [np.concatenate([g[2][j] for g in segs]) for j in range(len(values_odd))]
        return S, E, O

    @cached_property
    def _meridian_spline(self):
        S, (X,), (Rh,) = self._augmented([self.x], [self.rho])
        return CubicSpline(S, np.column_stack([X, Rh]))

    def meridian_point(self, s) -> np.ndarray:
        """(x, signed rho) at arclength s; beyond a tip this is the opposite meridian."""
        if self.translation_invariant:
            s = np.asarray(s, dtype=float)
            out = np.empty(s.shape + (2,))
            out[..., 0] = self.x[0] + (s - self.s[0])
            out[..., 1] = self.rho[0]
            return out
        return self._meridian_spline(s)

    def meridian_range(self) -> tuple[float, float]:
        lo = -np.inf if self.translation_invariant else self.s[0]
        hi = np.inf if self.translation_invariant else self.s[-1]
        if not self.translation_invariant:
            span = self.s[-1] - self.s[0]
            if self.ends[0] == "tip":
                lo = self.s[0] - span
            if self.ends[1] == "tip":
                hi = self.s[-1] + span
        return lo, hi

    def embed(self, xr: np.ndarray, direction=None) -> np.ndarray:
        """Points of R^{n+1} from (x, signed rho) pairs in the meridian plane."""
        P = self.placement
        e = P.radial if direction is None else direction
        xr = np.atleast_2d(xr)
        return P.origin + np.outer(xr[:, 0], P.axis) + np.outer(xr[:, 1], e)

    # --- curvature derivatives ----------------------------------------

    @cached_property
    def jets(self) -> np.ndarray:
        """Arclength derivatives of (lam_axial, lam_rot), shape (2, MAX_ORDER+1, m)."""
        if self.exact_jets is not None:
            return self.exact_jets
        m = self.size
        out = np.zeros((2, MAX_ORDER + 1, m))
        out[0, 0], out[1, 0] = self.lam_axial, self.lam_rot
        if self.translation_invariant:
            return out
        out[:, :, :] = _local_jets(self, FIT_MIN_NODES)
        return out

    @cached_property
    def jets_coarse(self) -> np.ndarray:
        """Jets from wider fitting windows, used to flag noise amplification."""
        if self.exact_jets is not None or self.translation_invariant:
            return self.jets
        return _local_jets(self, int(1.5 * FIT_MIN_NODES), widen=1.5)

    @cached_property
    def derivative_norms(self) -> np.ndarray:
        """|nabla^k h| for k = 1..8 at every node, shape (m, 8)."""
        return _derivative_norms(self, self.jets)

    @cached_property
    def derivative_norms_coarse(self) -> np.ndarray:
        return _derivative_norms(self, self.jets_coarse)

    @cached_property
    def rho_s(self) -> np.ndarray:
        """d rho / ds from the unit tangent, oriented along increasing s."""
        if self.translation_invariant:
            return np.zeros(self.size)
        t = _unit_tangent(self)
        return t[:, 1]


def _unit_tangent(surf: SampledSurface) -> np.ndarray:
    """Unit tangent (x_s, rho_s) along increasing s, from the normal and node order."""
    t = np.column_stack([surf.nu_rho, -surf.nu_x])
    d = np.gradient(np.column_stack([surf.x, surf.rho]), surf.s, axis=0)
    sign = np.sign(np.sum(t * d, axis=1))
    sign[sign == 0] = 1.0
    return t * sign[:, None]


def _local_jets(surf: SampledSurface, min_nodes: int, widen: float = 1.0) -> np.ndarray:
    """Arclength jets of both curvature functions by local polynomial least squares.

    Orders 1 and 2 come from windows holding the min_nodes nearest samples,
    which resolve features finer than the curvature scale.  Orders 3 and up
    come from windows at least widen * (n-1) / (2|H|) wide, since narrow
    windows amplify round-off by w^-k.  Tips are handled by mirroring the data.
    """
    S, (A, R), _ = surf._augmented([surf.lam_axial, surf.lam_rot])
    m = surf.size
    out = np.zeros((2, MAX_ORDER + 1, m))
    Habs = np.abs(surf.H)
    scale = np.where(Habs > 0, (surf.n - 1) / np.maximum(Habs, 1e-300), np.inf)
    fact = np.array([factorial(k) for k in range(MAX_ORDER + 1)], dtype=float)
    k_near = min(min_nodes, len(S))
    Y = np.column_stack([A, R])
    for i in range(m):
        d = np.abs(S - surf.s[i])
        w_near = np.partition(d, k_near - 1)[k_near - 1]
        w_wide = max(widen * 0.5 * scale[i], w_near) if np.isfinite(scale[i]) else w_near
        out[:, :3, i] = _fit(S, Y, d, surf.s[i], w_near, fact)[:, :3]
        out[:, 3:, i] = _fit(S, Y, d, surf.s[i], w_wide, fact)[:, 3:]
    out[0, 0], out[1, 0] = surf.lam_axial, surf.lam_rot
    return out


def _fit(S, Y, d, s0, w, fact):
    sel = np.nonzero(d <= w * (1 + 1e-12))[0]
    if sel.size > FIT_MAX_NODES:
        sel = np.sort(sel[np.round(np.linspace(0, sel.size - 1, FIT_MAX_NODES)).astype(int)])
    t = (S[sel] - s0) / w
    dg = min(FIT_DEGREE, sel.size - 2)
    V = np.vander(t, dg + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(V, Y[sel], rcond=None)
    kmax = min(MAX_ORDER, dg)
    out = np.zeros((2, MAX_ORDER + 1))
    k = np.arange(kmax + 1)
    out[:, :kmax + 1] = coef[:kmax + 1].T * fact[:kmax + 1] / w ** k
    return out


def _derivative_norms(surf: SampledSurface, jets: np.ndarray) -> np.ndarray:
    """Covariant derivative norms of the second fundamental form.

    For a surface of revolution with arclength s, warping f = rho_s/rho and
    m = n-1, the Codazzi identity lam_rot' = f (lam_axial - lam_rot) gives

      |nabla h|^2   = a'^2 + 3m r'^2
      |nabla^2 h|^2 = a''^2 + 3m r''^2 + 3m f^2 (a' - 2r')^2 + 3(m^2 + 2m) f^2 r'^2

    with a, r the axial and rotational curvatures.  At a tip f ~ 1/s and the
    products f a', f r' tend to a'', r''.  Orders k >= 3 use the surrogate
    sqrt(a^(k)^2 + (2k+1) m r^(k)^2), which reproduces the k = 1 formula.
    """
    m_ = surf.n - 1
    M = surf.size
    out = np.zeros((M, MAX_ORDER))
    a, r = jets[0], jets[1]
    out[:, 0] = np.sqrt(a[1] ** 2 + 3 * m_ * r[1] ** 2)
    rho_s = surf.rho_s
    tip = surf.rho <= TIP_RHO
    f = np.zeros(M)
    f[~tip] = rho_s[~tip] / surf.rho[~tip]
    fa = f * (a[1] - 2 * r[1])
    fr = f * r[1]
    fa[tip] = a[2][tip] - 2 * r[2][tip]
    fr[tip] = r[2][tip]
    out[:, 1] = np.sqrt(a[2] ** 2 + 3 * m_ * r[2] ** 2 + 3 * m_ * fa ** 2
                        + 3 * (m_ ** 2 + 2 * m_) * fr ** 2)
    for k in range(3, MAX_ORDER + 1):
        out[:, k - 1] = np.sqrt(a[k] ** 2 + (2 * k + 1) * m_ * r[k] ** 2)
    return out
