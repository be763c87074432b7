"""Explicit constants and the inequalities they certify."""

from __future__ import annotations

import json
import math
import sys
from dataclasses import asdict, dataclass

A_HAT_MARGIN = 1e-6
SATURATED = sys.float_info.max


def hat_ab(eta0: float, c1: float) -> tuple[float, float, bool]:
    """Ball-search constants (a_hat, b_hat, overflowed).

    a_hat is the smallest a with (eta0/c1) log(1 + c1 a / 100) >= 2 pi,
    inflated by a fixed relative margin so the inequality is strict.
    Overflow returns the largest float for both values with the flag set.
    """
    if eta0 <= 0 or c1 <= 0:
        raise ValueError(f"need eta0 > 0 and c1 > 0, got eta0={eta0}, c1={c1}")
    x = 2.0 * math.pi * c1 / eta0
    try:
        a = (100.0 / c1) * math.expm1(x) * (1.0 + A_HAT_MARGIN)
        b = 2.0 + 100.0 * c1 * a
    except OverflowError:
        return SATURATED, SATURATED, True
    if not math.isfinite(a) or not math.isfinite(b):
        return SATURATED, SATURATED, True
    return a, b, False


def ball_search_margin(eta0: float, c1: float, a_hat: float) -> float:
    """(eta0/c1) log(1 + c1 a_hat/100) - 2 pi; positive means admissible."""
    return (eta0 / c1) * math.log1p(c1 * a_hat / 100.0) - 2.0 * math.pi


def theta_hat(n: int, gamma1: float) -> float:
    if n < 2 or gamma1 < 0:
        raise ValueError(f"need n >= 2 and gamma1 >= 0, got n={n}, gamma1={gamma1}")
    return 1.0 / (2.0 + 2.0 * (2.0 + math.pi) * n * (n - 1) * gamma1)


def curvature_lower_bound(H_p: float, d: float, n: int, gamma1: float) -> float:
    """Lower bound on H at intrinsic distance d from a point with curvature H_p."""
    if H_p <= 0 or d < 0:
        raise ValueError(f"need H_p > 0 and d >= 0, got H_p={H_p}, d={d}")
    return 1.0 / (1.0 / H_p + n * gamma1 * d)


C0_TERMS = ("inv_eta2", "theta", "two_b_hat", "ball_search")


def structure_C0(eta2: float, theta: float, b_hat: float, a_hat: float,
                 n: int, L: float) -> tuple[float, str]:
    """Cap structure constant and the name of the term attaining the max.

    theta enters exactly as written in the formula, without inversion.
    """
    for name, val in (("eta2", eta2), ("theta", theta), ("b_hat", b_hat),
                      ("a_hat", a_hat), ("n", n), ("L", L)):
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val}")
    terms = (1.0 / eta2, theta, 2.0 * b_hat, 2.0 * (a_hat * theta + 100.0 * n * L))
    k = max(range(4), key=lambda i: terms[i])
    return min(terms[k], SATURATED), C0_TERMS[k]


def cap_alpha_bound(C0: float) -> tuple[float, float]:
    """(alpha_tilde, alpha_case1) = (C0^-5 / 32, C0^-2 / 2)."""
    if not C0 >= 1:
        raise ValueError(f"C0 must be >= 1, got {C0}")
    return C0 ** -5 / 32.0, C0 ** -2 / 2.0


@dataclass(frozen=True)
class ConstantBundle:
    n: int
    gamma1: float
    gamma2: float
    eta0: float
    eta2: float
    L: float
    c1: float
    a_hat: float
    b_hat: float
    theta_hat: float
    C0: float
    C0_term: str
    alpha_tilde: float
    alpha_case1: float
    overflow: bool

    @classmethod
    def build(cls, n: int, gamma1: float, gamma2: float, eta0: float,
              eta2: float, L: float) -> "ConstantBundle":
        if n < 2:
            raise ValueError(f"n must be >= 2, got {n}")
        if gamma1 <= 0:
            raise ValueError("gamma1 must be positive (c1 = n*gamma1 enters a logarithm)")
        if gamma2 < 0:
            raise ValueError("gamma2 must be nonnegative")
        c1 = n * gamma1
        a, b, overflow = hat_ab(eta0, c1)
        th = theta_hat(n, gamma1)
        C0, term = structure_C0(eta2, th, b, a, n, L)
        at, a1 = cap_alpha_bound(C0)
        return cls(n=n, gamma1=gamma1, gamma2=gamma2, eta0=eta0, eta2=eta2, L=L,
                   c1=c1, a_hat=a, b_hat=b, theta_hat=th, C0=C0, C0_term=term,
                   alpha_tilde=at, alpha_case1=a1, overflow=overflow)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ConstantBundle":
        return cls(**json.loads(text))
