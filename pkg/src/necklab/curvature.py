"""Pointwise curvature algebra: principal curvatures and pinching ratios."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SYMMETRY_TOL = 1e-10
MULTIPLICITY_GAP = 1e-8
H_FLOOR = 1e-12


def convexity_tol(H: float) -> float:
    return 1e-9 * max(1.0, abs(H))


@dataclass(frozen=True)
class CurvatureSpectrum:
    """Sorted principal curvatures at one surface point."""

    n: int
    lambdas: tuple
    H: float
    A2: float

    def __post_init__(self):
        if self.n < 2 or len(self.lambdas) != self.n:
            raise ValueError(f"spectrum needs n >= 2 curvatures, got {len(self.lambdas)} for n={self.n}")
        if any(self.lambdas[i] > self.lambdas[i + 1] for i in range(self.n - 1)):
            raise ValueError("principal curvatures must be sorted ascending")

    @classmethod
    def from_lambdas(cls, lambdas) -> "CurvatureSpectrum":
        lam = np.sort(np.asarray(lambdas, dtype=float))
        return cls(n=lam.size, lambdas=tuple(float(x) for x in lam),
                   H=float(lam.sum()), A2=float(np.dot(lam, lam)))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.lambdas)

    @property
    def weakly_convex(self) -> bool:
        return self.lambdas[0] >= -convexity_tol(self.H)

    @property
    def spectral_radius(self) -> float:
        return max(abs(self.lambdas[0]), abs(self.lambdas[-1]))

    def multiplicities(self) -> list[tuple[float, int]]:
        """Distinct eigenvalues with multiplicity, grouped by a relative gap threshold."""
        gap = MULTIPLICITY_GAP * max(self.spectral_radius, np.finfo(float).tiny)
        groups: list[list[float]] = [[self.lambdas[0]]]
        for lam in self.lambdas[1:]:
            if lam - groups[-1][-1] < gap:
                groups[-1].append(lam)
            else:
                groups.append([lam])
        return [(float(np.mean(g)), len(g)) for g in groups]

    def scaled(self, s: float) -> "CurvatureSpectrum":
        return CurvatureSpectrum.from_lambdas(s * self.array)


@dataclass(frozen=True)
class PinchingReport:
    n: int
    ratio_lambda1: float
    ratio_two_convex: float
    ratio_cyl: float
    ratio_gap: float

    @property
    def two_convexity_margin(self) -> float:
        return self.ratio_two_convex - 1.0 / (self.n - 1)


def principal_curvatures(shape_operator) -> CurvatureSpectrum:
    """Eigen-decompose a shape operator given in an orthonormal tangent frame."""
    S = np.asarray(shape_operator, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"shape operator must be square, got shape {S.shape}")
    asym = np.max(np.abs(S - S.T)) if S.size else 0.0
    if asym > SYMMETRY_TOL:
        raise ValueError(f"shape operator not symmetric: max |S - S^T| = {asym:.3e} > {SYMMETRY_TOL}")
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    recon = (V * w) @ V.T
    err = np.max(np.abs(recon - S))
    if err > SYMMETRY_TOL * max(1.0, np.max(np.abs(S))):
        raise ArithmeticError(f"eigen-reconstruction error {err:.3e}")
    return CurvatureSpectrum.from_lambdas(w)


def pinching_constant(n: int) -> float:
    if n < 5:
        raise ValueError(f"pinching constant is defined for n >= 5, got n={n}")
    if n >= 8:
        return 1.0 / (n - 2)
    return 3.0 * (n + 1) / (2.0 * n * (n + 2))


def pinching_report(spectrum: CurvatureSpectrum) -> PinchingReport:
    H = spectrum.H
    if H <= 0:
        raise ValueError(f"pinching ratios need H > 0, got H={H:.3e}")
    if H < H_FLOOR:
        raise ValueError(f"mean curvature {H:.3e} is numerically degenerate")
    lam = spectrum.lambdas
    return PinchingReport(
        n=spectrum.n,
        ratio_lambda1=lam[0] / H,
        ratio_two_convex=(lam[0] + lam[1]) / H,
        ratio_cyl=spectrum.A2 / H**2,
        ratio_gap=(lam[-1] - lam[1]) / H,
    )


def rotational_lambdas(lam_axial, lam_rot, n: int) -> np.ndarray:
    """Sorted spectra (m, n) for surfaces of revolution: one axial and n-1 rotational curvatures."""
    a = np.atleast_1d(np.asarray(lam_axial, dtype=float))
    r = np.atleast_1d(np.asarray(lam_rot, dtype=float))
    out = np.empty((a.size, n))
    out[:, 0] = a
    out[:, 1:] = r[:, None]
    return np.sort(out, axis=1)
