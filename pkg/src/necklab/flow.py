"""Mean curvature flow of O(n)-symmetric hypersurfaces through one meridian.

Two representations share the RotSymProfile type.

Graphs (boundary 'periodic' or 'clamped') store rho on a uniform axial grid
and evolve by

    rho_t = rho'' / (1 + rho'^2) - (n - 1) / rho

with fourth-order finite differences.  The semi-implicit scheme treats the
second-derivative term implicitly with the coefficient frozen at the old step.

Compact surfaces (boundary 'closed-caps') cannot be graphs over the axis near
the caps, so the meridian from tip to tip is stored on nodes equally spaced in
arclength, reflected across the axis into a closed periodic curve, and moved
with velocity -H nu using Fourier derivatives.  The stiff part is handled by a
stabilised implicit-explicit step, and nodes are moved back to equal arclength
(through the trigonometric interpolant, so the curve itself is unchanged)
whenever their spacing drifts by more than two percent.  Reflection symmetry
keeps the tips on the axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize_scalar
from scipy.sparse.linalg import splu
from scipy.spatial import cKDTree

from .curvature import CurvatureSpectrum, convexity_tol
from .surface import SampledSurface

BOUNDARIES = ("periodic", "closed-caps", "clamped")
MAX_SLOPE = 1e6
REDISTRIBUTE_RATIO = 1.02  # node speed spread that triggers equal-arclength resampling
EVENT_KINDS = ("min-radius-threshold", "convexity-lost", "neck-formed")


class SingularityError(RuntimeError):
    def __init__(self, message, time=None, location=None):
        super().__init__(message)
        self.time = time
        self.location = location


@dataclass(frozen=True, eq=False)
class RotSymProfile:
    """One meridian of an O(n)-symmetric hypersurface.

    For graphs x is a uniform axial grid.  For 'closed-caps' the pair (x, rho)
    is the meridian curve on (nearly) equal-arclength nodes with rho = 0 at
    both ends.
    """

    n: int
    x: np.ndarray
    rho: np.ndarray
    boundary: str = "periodic"
    time: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        rho = np.asarray(self.rho, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "rho", rho)
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        if x.shape != rho.shape or x.ndim != 1:
            raise ValueError("x and rho must be 1-d arrays of equal length")
        if x.size < 8:
            raise ValueError("need at least 8 grid points")
        if not np.all(np.isfinite(rho)) or not np.all(np.isfinite(x)):
            raise ValueError("profile contains non-finite values")
        if self.boundary == "closed-caps":
            scale = np.max(rho)
            if abs(rho[0]) > 1e-12 * scale or abs(rho[-1]) > 1e-12 * scale:
                raise ValueError("closed-caps profile must reach the axis at both ends")
            if np.any(rho[1:-1] <= 0):
                raise ValueError("radius must be positive away from the tips")
        else:
            d = np.diff(x)
            if np.any(d <= 0) or np.ptp(d) > 1e-9 * d.mean():
                raise ValueError("graph profiles need a uniform increasing axial grid")
            if np.any(rho <= 0):
                i = int(np.argmin(rho))
                raise ValueError(f"radius must be positive, got {rho[i]:.3e} at x={x[i]:.6g}")

    @property
    def is_graph(self) -> bool:
        return self.boundary != "closed-caps"

    @property
    def size(self) -> int:
        return self.x.size

    @property
    def dx(self) -> float:
        if not self.is_graph:
            raise ValueError("closed-caps profiles have no axial spacing")
        return float(self.x[1] - self.x[0])

    @cached_property
    def _geometry(self):
        """(lam_axial, lam_rot, nu_x, nu_rho, s) at every node."""
        if self.is_graph:
            return _graph_geometry(self)
        return _curve_geometry(self)

    @property
    def lam_axial(self) -> np.ndarray:
        return self._geometry[0]

    @property
    def lam_rot(self) -> np.ndarray:
        return self._geometry[1]

    @property
    def H(self) -> np.ndarray:
        return self.lam_axial + (self.n - 1) * self.lam_rot

    @property
    def arclength(self) -> np.ndarray:
        return self._geometry[4]

    @cached_property
    def surface(self) -> SampledSurface:
        return profile_surface(self)

    def interior_minima(self) -> np.ndarray:
        """Indices of strict interior local minima of rho (necks of the profile)."""
        r = self.rho
        if self.boundary == "periodic":
            left, right = np.roll(r, 1), np.roll(r, -1)
            idx = np.nonzero((r < left) & (r <= right))[0]
        else:
            k = np.arange(1, r.size - 1)
            idx = k[(r[k] < r[k - 1]) & (r[k] <= r[k + 1])]
        return idx

    def neck_radius(self) -> tuple[float, int]:
        """Smallest interior local minimum of rho, or (inf, -1) if there is none."""
        idx = self.interior_minima()
        if idx.size == 0:
            return np.inf, -1
        j = idx[int(np.argmin(self.rho[idx]))]
        return float(self.rho[j]), int(j)

    def min_radius(self) -> tuple[float, int]:
        """Radius controlling extinction: the thinnest neck, else the widest point."""
        if self.is_graph:
            j = int(np.argmin(self.rho))
            return float(self.rho[j]), j
        r, j = self.neck_radius()
        if j >= 0:
            return r, j
        j = int(np.argmax(self.rho))
        return float(self.rho[j]), j


def curvature_at(profile: RotSymProfile, i: int) -> CurvatureSpectrum:
    """Principal curvatures at node i (axial once, rotational n-1 times)."""
    if not -profile.size <= i < profile.size:
        raise IndexError(f"node {i} outside a profile of {profile.size} points")
    if profile.is_graph:
        d1, _ = _fd_derivatives(profile.rho, profile.dx, profile.boundary)
        if abs(d1[i]) > MAX_SLOPE:
            raise ValueError(f"slope {d1[i]:.3e} at x={profile.x[i]:.6g}: grid too coarse near a cap")
    lam = np.full(profile.n, profile.lam_rot[i])
    lam[0] = profile.lam_axial[i]
    return CurvatureSpectrum.from_lambdas(lam)


# --- graph discretisation ------------------------------------------------

_D1_LEFT = (np.array([-25, 48, -36, 16, -3, 0]) / 12.0, np.array([-3, -10, 18, -6, 1, 0]) / 12.0)
_D2_LEFT = (np.array([45, -154, 214, -156, 61, -10]) / 12.0, np.array([10, -15, -4, 14, -6, 1]) / 12.0)


def _fd_derivatives(f: np.ndarray, h: float, boundary: str):
    """Fourth-order first and second derivatives on a uniform grid."""
    if boundary == "periodic":
        fm2, fm1, fp1, fp2 = (np.roll(f, k) for k in (2, 1, -1, -2))
        d1 = (fm2 - 8 * fm1 + 8 * fp1 - fp2) / (12 * h)
        d2 = (-fm2 + 16 * fm1 - 30 * f + 16 * fp1 - fp2) / (12 * h * h)
        return d1, d2
    if f.size < 6:
        raise ValueError("clamped grids need at least 6 points")
    d1 = np.empty_like(f)
    d2 = np.empty_like(f)
    d1[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    d2[2:-2] = (-f[:-4] + 16 * f[1:-3] - 30 * f[2:-2] + 16 * f[3:-1] - f[4:]) / (12 * h * h)
    for k in (0, 1):
        d1[k] = _D1_LEFT[k] @ f[:6] / h
        d2[k] = _D2_LEFT[k] @ f[:6] / (h * h)
        d1[-1 - k] = -(_D1_LEFT[k] @ f[::-1][:6]) / h
        d2[-1 - k] = _D2_LEFT[k] @ f[::-1][:6] / (h * h)
    return d1, d2


def _d2_matrix(N: int, h: float, boundary: str):
    """Sparse fourth-order second-difference matrix matching _fd_derivatives."""
    c = np.array([-1, 16, -30, 16, -1]) / (12 * h * h)
    if boundary == "periodic":
        rows, cols, vals = [], [], []
        for off, v in zip(range(-2, 3), c):
            i = np.arange(N)
            rows.append(i)
            cols.append((i + off) % N)
            vals.append(np.full(N, v))
        return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=(N, N))
    D = sparse.lil_matrix((N, N))
    for i in range(2, N - 2):
        D[i, i - 2:i + 3] = c
    for k in (0, 1):
        D[k, :6] = _D2_LEFT[k] / (h * h)
        D[N - 1 - k, N - 6:] = _D2_LEFT[k][::-1] / (h * h)
    return D.tocsr()


def _graph_geometry(p: RotSymProfile):
    d1, d2 = _fd_derivatives(p.rho, p.dx, p.boundary)
    w = np.sqrt(1.0 + d1 * d1)
    lam_ax = -d2 / w ** 3
    lam_rot = 1.0 / (p.rho * w)
    nu_x, nu_rho = -d1 / w, 1.0 / w
    s = _graph_arclength(p.x, w)
    return lam_ax, lam_rot, nu_x, nu_rho, s


def _graph_arclength(x, w):
    return cumulative_simpson(w, x=x, initial=0.0)


# --- closed-curve discretisation -------------------------------------------

def _wavenumbers(N: int) -> np.ndarray:
    return np.fft.fftfreq(N, d=1.0 / N)


def _closed_curve(x: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Tip-to-tip meridian (M+1 nodes) reflected into a closed curve of 2M nodes."""
    X = np.concatenate([x, x[-2:0:-1]])
    Y = np.concatenate([rho, -rho[-2:0:-1]])
    return np.column_stack([X, Y])


def _spectral_derivatives(Z: np.ndarray, orders=(1, 2)):
    N = Z.shape[0]
    k = _wavenumbers(N)
    Zh = np.fft.fft(Z, axis=0)
    out = []
    for q in orders:
        mult = (1j * k) ** q
        if q % 2 == 1 and N % 2 == 0:
            mult[N // 2] = 0.0
        out.append(np.real(np.fft.ifft(mult[:, None] * Zh, axis=0)))
    return out


def _curve_frame(Z: np.ndarray):
    """Speed, outward normal and curvature of a clockwise closed curve."""
    Zu, Zuu = _spectral_derivatives(Z)
    sp = np.hypot(Zu[:, 0], Zu[:, 1])
    nu = np.column_stack([-Zu[:, 1], Zu[:, 0]]) / sp[:, None]
    kappa = -(Zu[:, 0] * Zuu[:, 1] - Zu[:, 1] * Zuu[:, 0]) / sp ** 3
    return sp, nu, kappa, Zuu


def _curve_curvatures(Z: np.ndarray, M: int):
    sp, nu, kappa, Zuu = _curve_frame(Z)
    y = Z[:, 1]
    lam_rot = np.empty_like(kappa)
    tip = np.zeros(Z.shape[0], dtype=bool)
    tip[[0, M]] = True
    lam_rot[~tip] = nu[~tip, 1] / y[~tip]
    lam_rot[tip] = kappa[tip]  # axis limit
    return sp, nu, kappa, lam_rot, Zuu


def _spectral_arclength(sp: np.ndarray) -> np.ndarray:
    """Arclength from node 0 along a closed curve parametrised over [0, 2 pi)."""
    N = sp.size
    k = _wavenumbers(N)
    sh = np.fft.fft(sp)
    mean = sh[0].real / N
    u = 2 * np.pi * np.arange(N) / N
    ih = np.zeros_like(sh)
    nz = k != 0
    ih[nz] = sh[nz] / (1j * k[nz])
    if N % 2 == 0:
        ih[N // 2] = 0.0
    per = np.real(np.fft.ifft(ih))
    return mean * u + per - per[0]


def _curve_geometry(p: RotSymProfile):
    M = p.size - 1
    Z = _closed_curve(p.x, p.rho)
    sp, nu, kappa, lam_rot, _ = _curve_curvatures(Z, M)
    s = _spectral_arclength(sp)[:M + 1]
    nu_x, nu_rho = nu[:M + 1, 0].copy(), nu[:M + 1, 1].copy()
    nu_rho[[0, M]] = 0.0
    return kappa[:M + 1], lam_rot[:M + 1], nu_x, nu_rho, s


def _fourier_eval(Z: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Trigonometric interpolant of the closed curve evaluated at parameters u."""
    N = Z.shape[0]
    k = _wavenumbers(N)
    Zh = np.fft.fft(Z, axis=0) / N
    if N % 2 == 0:
        # split the Nyquist mode symmetrically so the interpolant is real
        k = np.concatenate([k, [N // 2]])
        Zh = np.vstack([Zh, Zh[N // 2]])
        k[N // 2] = -N // 2
        Zh[N // 2] *= 0.5
        Zh[-1] *= 0.5
    E = np.exp(1j * np.outer(u, k))
    return np.real(E @ Zh)


def _redistribute(Z: np.ndarray, M: int) -> np.ndarray:
    """Nodes of the upper meridian moved to equal arclength; returns (M+1, 2)."""
    N = Z.shape[0]
    u = 2 * np.pi * np.arange(N) / N
    sp = np.hypot(*_spectral_derivatives(Z, (1,))[0].T)
    s = _spectral_arclength(sp)
    half = s[M]
    u_half, s_half = u[:M + 1], s[:M + 1]
    if np.any(np.diff(s_half) <= 0):
        raise ArithmeticError("curve parametrisation degenerated")
    inv = CubicSpline(s_half, u_half)
    target = np.linspace(0.0, half, M + 1)
    u_new = inv(target)
    u_new[0], u_new[-1] = 0.0, np.pi
    P = _fourier_eval(Z, u_new)
    P[[0, M], 1] = 0.0
    return P


def _filter(N: int, order: int = 36, alpha: float = 36.0) -> np.ndarray:
    k = np.abs(_wavenumbers(N)) / (N / 2)
    return np.exp(-alpha * k ** order)


# --- time stepping -------------------------------------------------------

def explicit_dt_limit(profile: RotSymProfile, cfl: float = 0.25) -> float:
    """Largest stable explicit step for the current profile."""
    if profile.is_graph:
        d1, _ = _fd_derivatives(profile.rho, profile.dx, profile.boundary)
        return cfl * profile.dx ** 2 * (1.0 + np.min(d1 * d1))
    ds = profile.arclength[-1] / (profile.size - 1)
    return cfl * ds * ds / profile.n


def step_mcf(profile: RotSymProfile, dt: float, scheme: str = "semi-implicit",
             rho_min: float | None = None, cfl: float = 0.25) -> RotSymProfile:
    """One time step of the flow.  Raises SingularityError instead of reaching rho_min."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if scheme not in ("semi-implicit", "explicit"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if scheme == "explicit" and not cfl <= 0.25:
        raise ValueError("explicit scheme needs cfl <= 0.25")
    if scheme == "explicit":
        lim = explicit_dt_limit(profile, cfl)
        if dt > lim * (1 + 1e-12):
            raise ValueError(f"dt={dt:.3e} exceeds the explicit stability limit {lim:.3e}")
    if rho_min is None:
        rho_min = 1e-6 * float(np.max(profile.rho))
    if profile.is_graph:
        rho = _graph_step(profile, dt, scheme)
        inner = rho if profile.boundary == "periodic" else rho[1:-1]
        if np.any(~np.isfinite(inner)) or np.min(inner) <= rho_min:
            j = int(np.nanargmin(np.where(np.isfinite(rho), rho, -np.inf)))
            raise SingularityError(f"radius reached {rho[j]:.3e} <= rho_min={rho_min:.3e}",
                                   profile.time + dt, float(profile.x[j]))
        return replace(profile, rho=rho, time=profile.time + dt)
    P = _curve_step(profile, dt, scheme)
    inner = P[1:-1, 1]
    if np.any(~np.isfinite(P)) or np.min(inner) <= rho_min:
        j = int(np.nanargmin(np.where(np.isfinite(inner), inner, -np.inf))) + 1
        raise SingularityError(f"radius reached {P[j, 1]:.3e} <= rho_min={rho_min:.3e}",
                               profile.time + dt, float(P[j, 0]))
    return RotSymProfile(n=profile.n, x=P[:, 0], rho=P[:, 1], boundary="closed-caps",
                         time=profile.time + dt)


def _graph_step(p: RotSymProfile, dt: float, scheme: str) -> np.ndarray:
    rho = p.rho
    d1, d2 = _fd_derivatives(rho, p.dx, p.boundary)
    a = 1.0 / (1.0 + d1 * d1)
    react = -(p.n - 1) / rho
    if scheme == "explicit":
        new = rho + dt * (a * d2 + react)
    else:
        N = rho.size
        D = _d2_matrix(N, p.dx, p.boundary)
        A = sparse.identity(N, format="csr") - dt * sparse.diags(a) @ D
        rhs = rho + dt * react
        if p.boundary == "clamped":
            A = A.tolil()
            for k in (0, N - 1):
                A[k, :] = 0.0
                A[k, k] = 1.0
            A = A.tocsc()
        new = splu(sparse.csc_matrix(A)).solve(rhs)
    if p.boundary == "clamped":
        new[0], new[-1] = rho[0], rho[-1]
    return new


def _curve_step(p: RotSymProfile, dt: float, scheme: str) -> np.ndarray:
    M = p.size - 1
    Z = _closed_curve(p.x, p.rho)
    N = Z.shape[0]
    sp, nu, kappa, lam_rot, Zuu = _curve_curvatures(Z, M)
    H = kappa + (p.n - 1) * lam_rot
    V = -H[:, None] * nu
    if scheme == "explicit":
        Znew = Z + dt * V
    else:
        # stabilised IMEX: implicit n a D^2 against its explicit counterpart,
        # a = 1/|Z_u|^2 frozen at the mean speed
        a = 1.0 / np.mean(sp) ** 2
        c = p.n * a
        k = _wavenumbers(N)
        rhs = Z + dt * (V - c * Zuu)
        Zh = np.fft.fft(rhs, axis=0) / (1.0 + dt * c * k * k)[:, None]
        Znew = np.real(np.fft.ifft(Zh, axis=0))
    Zh = np.fft.fft(Znew, axis=0) * _filter(N)[:, None]
    Znew = np.real(np.fft.ifft(Zh, axis=0))
    # restore reflection symmetry: x even, rho odd about the tips
    j = np.arange(M + 1)
    mirror = Znew[(N - j) % N]
    xs = 0.5 * (Znew[j, 0] + mirror[:, 0])
    ys = 0.5 * (Znew[j, 1] - mirror[:, 1])
    ys[[0, M]] = 0.0
    Zs = _closed_curve(xs, ys)
    sp = np.hypot(*_spectral_derivatives(Zs, (1,))[0].T)
    if sp.max() > REDISTRIBUTE_RATIO * sp.min():
        return _redistribute(Zs, M)
    return Zs[:M + 1]


# --- trajectories --------------------------------------------------------

@dataclass(frozen=True)
class FlowEvent:
    time: float
    kind: str
    location: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {"time": self.time, "kind": self.kind, "location": self.location,
                "detail": self.detail}


@dataclass
class FlowTrajectory:
    snapshots: list
    dts: list = field(default_factory=list)
    events: list = field(default_factory=list)
    stopped_by: str = "t_end"

    def __post_init__(self):
        times = [s.time for s in self.snapshots]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("snapshot times must be strictly increasing")

    @property
    def n(self) -> int:
        return self.snapshots[0].n

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    def first_event(self, kind: str):
        for e in self.events:
            if e.kind == kind:
                return e
        return None


@dataclass(frozen=True)
class FlowSettings:
    t_end: float
    dt: float | None = None
    cfl: float = 0.2
    scheme: str = "semi-implicit"
    snapshot_every: int = 10
    min_radius_fraction: float = 0.05
    neck_fraction: float = 0.25
    stop_on: tuple = ("min-radius-threshold",)
    max_steps: int = 200_000

    def validate(self):
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0 < self.cfl:
            raise ValueError("cfl must be positive")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1")
        for k in self.stop_on:
            if k not in EVENT_KINDS:
                raise ValueError(f"unknown event kind {k!r}")
        return self


def _auto_dt(p: RotSymProfile, s: FlowSettings) -> float:
    if s.scheme == "explicit":
        return explicit_dt_limit(p, min(s.cfl, 0.25))
    if p.is_graph:
        r = float(np.min(p.rho))
        return s.cfl * min(p.dx, r) * r
    ds = p.arclength[-1] / (p.size - 1)
    r, _ = p.min_radius()
    return s.cfl * ds * min(r, 1.0 / max(np.max(np.abs(p.H)), 1e-12))


def simulate(initial: RotSymProfile, settings: FlowSettings) -> FlowTrajectory:
    """Evolve until t_end, a stopping event, or a refused step."""
    settings.validate()
    rho_min = 1e-6 * float(np.max(initial.rho))
    r_init, _ = initial.min_radius()
    snaps, dts, events = [initial], [], []
    seen = set()
    p = initial
    convex0 = bool(np.all(p.lam_axial >= -convexity_tol(1.0) * np.abs(p.H)))
    prev_neck = p.neck_radius()[0]
    stopped = "t_end"
    t_end = initial.time + settings.t_end
    for step in range(settings.max_steps):
        if p.time >= t_end - 1e-15 * max(1.0, abs(t_end)):
            break
        dt = settings.dt if settings.dt is not None else _auto_dt(p, settings)
        dt = min(dt, t_end - p.time)
        try:
            q = step_mcf(p, dt, settings.scheme, rho_min=rho_min)
        except SingularityError as err:
            events.append(FlowEvent(err.time, "min-radius-threshold", err.location, str(err)))
            stopped = "singularity"
            break
        dts.append(dt)
        p = q
        new = _detect_events(p, settings, r_init, convex0, seen, prev_neck)
        prev_neck = p.neck_radius()[0]
        events.extend(new)
        done = any(e.kind in settings.stop_on for e in new)
        if done or (step + 1) % settings.snapshot_every == 0:
            snaps.append(p)
        if done:
            stopped = next(e.kind for e in new if e.kind in settings.stop_on)
            break
    else:
        stopped = "max-steps"
    if snaps[-1] is not p:
        snaps.append(p)
    return FlowTrajectory(snaps, dts, events, stopped)


def _detect_events(p, settings, r_init, convex0, seen, prev_neck):
    out = []
    r, j = p.min_radius()
    loc = float(p.x[j])
    if "min-radius-threshold" not in seen and r <= settings.min_radius_fraction * r_init:
        seen.add("min-radius-threshold")
        out.append(FlowEvent(p.time, "min-radius-threshold", loc, f"radius {r:.6g}"))
    if convex0 and "convexity-lost" not in seen:
        bad = p.lam_axial < -convexity_tol(1.0) * np.abs(p.H)
        if np.any(bad):
            i = int(np.argmax(bad))
            seen.add("convexity-lost")
            out.append(FlowEvent(p.time, "convexity-lost", float(p.x[i]),
                                 f"lam_axial {p.lam_axial[i]:.3e}"))
    if "neck-formed" not in seen:
        rn, jn = p.neck_radius()
        if jn >= 0 and rn <= settings.neck_fraction * r_init:
            seen.add("neck-formed")
            out.append(FlowEvent(p.time, "neck-formed", float(p.x[jn]), f"neck radius {rn:.6g}"))
    return out


# --- initial data --------------------------------------------------------

def cylinder_profile(n: int, radius: float = 1.0, length: float = 2 * np.pi,
                     points: int = 256, amplitude: float = 0.0, mode: int = 1) -> RotSymProfile:
    """Periodic tube rho = radius (1 + amplitude cos(2 pi mode x / length))."""
    x = np.arange(points) * (length / points)
    rho = radius * (1.0 + amplitude * np.cos(2 * np.pi * mode * x / length))
    return RotSymProfile(n=n, x=x, rho=rho, boundary="periodic")


def sphere_profile(n: int, radius: float = 1.0, points: int = 257) -> RotSymProfile:
    th = np.linspace(0.0, np.pi, points)
    rho = radius * np.sin(th)
    rho[[0, -1]] = 0.0
    return RotSymProfile(n=n, x=-radius * np.cos(th), rho=rho, boundary="closed-caps")


def closed_profile(n: int, sq_radius, x_lo: float, x_hi: float, points: int = 513,
                   fine: int = 20001) -> RotSymProfile:
    """Closed-caps meridian from a squared-radius function w(x).

    w must have simple zeros bracketed in [x_lo, x_hi] near each end; then
    sqrt(w) meets the axis orthogonally and the reflected curve is smooth.
    Nodes are placed at equal arclength.
    """
    mid = 0.5 * (x_lo + x_hi)
    if sq_radius(mid) <= 0:
        raise ValueError("squared radius must be positive at the middle")
    a = brentq(sq_radius, x_lo, mid, xtol=1e-15)
    b = brentq(sq_radius, mid, x_hi, xtol=1e-15)
    th = np.linspace(0.0, np.pi, fine)
    x = a + (b - a) * 0.5 * (1.0 - np.cos(th))
    w = np.asarray(sq_radius(x), dtype=float)
    w[[0, -1]] = 0.0
    if np.any(w[1:-1] <= 0):
        raise ValueError("squared radius vanishes between the tips")
    r = np.sqrt(w)
    curve = CubicSpline(th, np.column_stack([x, r]))
    vel = curve.derivative()(th)
    s = cumulative_simpson(np.hypot(vel[:, 0], vel[:, 1]), x=th, initial=0.0)
    th_of_s = CubicSpline(s, th)
    P = curve(th_of_s(np.linspace(0.0, s[-1], points)))
    P[[0, -1], 1] = 0.0
    P[[0, -1], 0] = a, b
    return RotSymProfile(n=n, x=P[:, 0], rho=P[:, 1], boundary="closed-caps")


def dumbbell_profile(n: int, bulb: float = 1.0, tube: float = 0.3, tube_half: float = 8.0,
                     blend: float = 0.15, waist: float = 0.02,
                     points: int = 1025) -> RotSymProfile:
    """Two round bulbs joined by a long thin tube, blended by a smooth maximum.

    The squared radius is the log-sum-exp (width `blend`) of the two bulb
    terms and an analytic tube term that closes off beyond the bulb centres.  The tube
    narrows by the relative amount `waist` toward its middle so that the
    thinnest point is well defined.
    """
    c = tube_half + np.sqrt(bulb ** 2 - tube ** 2)

    def w(x):
        x = np.asarray(x, dtype=float)
        u = x / c
        r_tube = tube * (1.0 - waist * (1.0 - u * u))
        terms = np.stack([bulb ** 2 - (x - c) ** 2, bulb ** 2 - (x + c) ** 2,
                          r_tube ** 2 * (1.0 - u ** 40)])
        top = np.max(terms, axis=0)
        return top + blend * np.log(np.sum(np.exp((terms - top) / blend), axis=0))

    lo, hi = -c - bulb - 1.0, c + bulb + 1.0
    return closed_profile(n, w, lo, hi, points=points)


# --- sampled surfaces and derivative norms ------------------------------

def profile_surface(p: RotSymProfile) -> SampledSurface:
    """Meridian sample of a profile; periodic tubes are tiled three times."""
    la, lr, nx, nr, s = p._geometry
    label = f"profile(n={p.n}, {p.boundary}, t={p.time:.6g})"
    meta = {"time": p.time, "boundary": p.boundary}
    if p.boundary == "closed-caps":
        return SampledSurface(n=p.n, s=s, x=p.x, rho=p.rho, nu_x=nx, nu_rho=nr, lam_axial=la,
                              lam_rot=lr, ends=("tip", "tip"), label=label, meta=meta)
    if p.boundary == "clamped":
        return SampledSurface(n=p.n, s=s, x=p.x, rho=p.rho, nu_x=nx, nu_rho=nr, lam_axial=la,
                              lam_rot=lr, ends=("open", "open"), label=label, meta=meta)
    N = p.size
    period = N * p.dx
    w = 1.0 / nr
    per_len = _periodic_length(w, p.dx)
    s_per = np.concatenate([s, [per_len]])[:N]
    tile = lambda a: np.concatenate([a, a, a])
    S = np.concatenate([s_per - per_len, s_per, s_per + per_len])
    X = np.concatenate([p.x - period, p.x, p.x + period])
    return SampledSurface(n=p.n, s=S, x=X, rho=tile(p.rho), nu_x=tile(nx), nu_rho=tile(nr),
                          lam_axial=tile(la), lam_rot=tile(lr), ends=("open", "open"),
                          core=slice(N, 2 * N), label=label, meta=meta)


def _periodic_length(w: np.ndarray, dx: float) -> float:
    # trapezoid on a periodic grid is spectrally accurate
    return float(np.sum(w) * dx)


def derivative_norms(profile: RotSymProfile, i: int, k: int) -> float:
    """|nabla^k h| at node i, k = 1..8 (k >= 3 is a meridional surrogate)."""
    if not 1 <= k <= 8:
        raise ValueError("k must be in 1..8")
    surf = profile.surface
    j = i + surf.core_indices[0] if profile.boundary == "periodic" else i
    return float(surf.derivative_norms[j, k - 1])


@dataclass(frozen=True)
class GammaEstimate:
    gamma1: float
    gamma2: float
    at1: tuple  # (snapshot index, node index)
    at2: tuple
    noise_flag: bool
    sup_A2_over_H2: float

    def to_dict(self) -> dict:
        return {"gamma1": self.gamma1, "gamma2": self.gamma2, "at1": list(self.at1),
                "at2": list(self.at2), "noise_flag": self.noise_flag,
                "sup_A2_over_H2": self.sup_A2_over_H2}


def estimate_gammas(trajectory, stride: int = 1, noise_tol: float = 0.1) -> GammaEstimate:
    """Suprema of |nabla h|/H^2 and |nabla^2 h|/H^3 over sampled spacetime.

    Accepts a FlowTrajectory or a sequence of SampledSurface snapshots.  The
    noise flag is raised when coarser fitting windows change either supremum
    by more than noise_tol relative.
    """
    snaps = trajectory.snapshots if isinstance(trajectory, FlowTrajectory) else list(trajectory)
    g1 = g2 = 0.0
    c1 = c2 = 0.0
    a1 = a2 = (-1, -1)
    A2 = 0.0
    for si, snap in enumerate(snaps[::stride]):
        surf = snap if isinstance(snap, SampledSurface) else snap.surface
        idx = surf.core_indices
        H = surf.H[idx]
        ok = H > 0
        if not np.any(ok):
            continue
        idx, H = idx[ok], H[ok]
        N1 = surf.derivative_norms[idx, 0] / H ** 2
        N2 = surf.derivative_norms[idx, 1] / H ** 3
        C1 = surf.derivative_norms_coarse[idx, 0] / H ** 2
        C2 = surf.derivative_norms_coarse[idx, 1] / H ** 3
        lam = surf.lambdas[idx]
        A2 = max(A2, float(np.max(np.sum(lam * lam, axis=1) / H ** 2)))
        j1, j2 = int(np.argmax(N1)), int(np.argmax(N2))
        if N1[j1] > g1:
            g1, a1 = float(N1[j1]), (si * stride, int(idx[j1]))
        if N2[j2] > g2:
            g2, a2 = float(N2[j2]), (si * stride, int(idx[j2]))
        c1, c2 = max(c1, float(C1.max())), max(c2, float(C2.max()))
    flag = any(abs(c - g) > noise_tol * max(g, 1e-300) for g, c in ((g1, c1), (g2, c2)) if g > 1e-10)
    return GammaEstimate(g1, g2, a1, a2, bool(flag), A2)


# --- curvature control in parabolic neighbourhoods ----------------------

def r_hat_from_gammas(n: int, gamma1: float, gamma2: float, sup_A2_over_H2: float = 1.0):
    """(r1, r2, r_hat) from the two-stage gradient and time-derivative argument.

    With c1 = n gamma1 bounding |nabla H|/H^2 and c2 = n gamma2 + max(1, |A|^2/H^2)
    bounding |dH/dt|/H^3, in units where H(p0, t0) = n - 1:
      r1 = 1 / (2 c1 (n-1))          keeps H within a factor 2 on the ball,
      r2 = 3 / (32 c2 (n-1)^2)       keeps H within a factor 2 over the time window,
    and r_hat = min(r1, sqrt(r2)) so the window r_hat^2 fits inside r2.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    c1 = n * gamma1
    c2 = n * gamma2 + max(1.0, sup_A2_over_H2)
    r1 = np.inf if c1 == 0 else 1.0 / (2.0 * c1 * (n - 1))
    r2 = 3.0 / (32.0 * c2 * (n - 1) ** 2)
    return float(r1), float(r2), float(min(r1, np.sqrt(r2)))


@dataclass(frozen=True)
class ParabolicCheck:
    holds: bool
    min_ratio: float
    max_ratio: float
    points: int
    snapshots: int
    partial_coverage: bool
    radius: float
    window: float

    @property
    def extremal_ratio(self) -> float:
        """The ratio farthest from 1 in the multiplicative sense."""
        return self.min_ratio if 1.0 / self.min_ratio > self.max_ratio else self.max_ratio

    def to_dict(self) -> dict:
        return dict(self.__dict__)


BALL_SAMPLES = 41
TIME_LEVELS = 5


def _meridian_h_spline(surf: SampledSurface) -> CubicSpline:
    """s -> (x, rho, H), continued across tips by reflection."""
    S, (X, Hh), (R,) = surf._augmented([surf.x, surf.H], [surf.rho])
    return CubicSpline(S, np.column_stack([X, R, Hh]))


def _project_H(surf: SampledSurface, spl: CubicSpline, pts: np.ndarray) -> np.ndarray:
    """H at the nearest meridian points of surf to each (x, rho) in pts."""
    tree = cKDTree(np.column_stack([surf.x, surf.rho]))
    _, j = tree.query(pts)
    s = surf.s
    out = np.empty(len(pts))
    for k, (q, i) in enumerate(zip(pts, j)):
        a, b = s[max(i - 1, 0)], s[min(i + 1, s.size - 1)]
        res = minimize_scalar(lambda u: float(np.sum((spl(u)[:2] - q) ** 2)), bounds=(a, b),
                              method="bounded", options={"xatol": 1e-13})
        out[k] = spl(res.x)[2]
    return out


def parabolic_neighborhood_check(trajectory: FlowTrajectory, snapshot: int, node: int,
                                 r_hat: float, scale: float = 1.0) -> ParabolicCheck:
    """Is H(p, t)/H(p0, t0) within [1/4, 4] on the rescaled parabolic neighbourhood?

    The neighbourhood is the meridian arc of length 2R, R = scale r_hat (n-1)/H0,
    around the node at t0 (curvature is constant on orbits, so the arc carries
    every value on the intrinsic ball) over the time window [t0 - R^2, t0].
    The arc is sampled at BALL_SAMPLES points and the window at TIME_LEVELS
    levels.  At earlier times each point is followed by nearest-point
    projection onto the bracketing snapshots, and H is interpolated linearly
    in time between them.
    """
    snaps = trajectory.snapshots
    p0 = snaps[snapshot]
    surf0 = p0.surface
    i0 = node + surf0.core_indices[0] if p0.boundary == "periodic" else node
    H0 = float(surf0.H[i0])
    if H0 <= 0:
        raise ValueError("the centre must have H > 0")
    n = p0.n
    R = scale * r_hat * (n - 1) / H0
    T = R ** 2
    spl0 = _meridian_h_spline(surf0)
    lo_s, hi_s = surf0.meridian_range()
    s0 = surf0.s[i0]
    partial = (s0 - R < lo_s) or (s0 + R > hi_s)
    arc = np.linspace(max(s0 - R, lo_s), min(s0 + R, hi_s), BALL_SAMPLES)
    vals = spl0(arc)
    pts = vals[:, :2]
    ratios = [vals[:, 2] / H0]
    t0 = p0.time
    times = np.array([s.time for s in snaps])
    if t0 - T < times[0] - 1e-15:
        partial = True
    cache = {}

    def H_at(k):
        if k not in cache:
            sk = snaps[k].surface
            cache[k] = _project_H(sk, _meridian_h_spline(sk), pts)
        return cache[k]

    used = {snapshot}
    for t in np.linspace(t0, t0 - T, TIME_LEVELS)[1:]:
        if t < times[0]:
            break
        kb = int(np.searchsorted(times[:snapshot + 1], t, side="left"))
        ka = max(kb - 1, 0)
        if times[kb] == t or kb == ka:
            Ht = H_at(kb) if kb != snapshot else vals[:, 2]
            used.add(kb)
        else:
            w = (t - times[ka]) / (times[kb] - times[ka])
            Hb = vals[:, 2] if kb == snapshot else H_at(kb)
            Ht = (1 - w) * H_at(ka) + w * Hb
            used.update((ka, kb))
        ratios.append(Ht / H0)
    r = np.concatenate(ratios)
    mn, mx = float(np.min(r)), float(np.max(r))
    holds = bool(mn >= 0.25 and mx <= 4.0)
    return ParabolicCheck(holds, mn, mx, int(r.size), len(used), bool(partial), float(R), float(T))
