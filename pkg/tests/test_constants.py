import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from necklab.constants import (SATURATED, ConstantBundle, ball_search_margin, cap_alpha_bound,
                               curvature_lower_bound, hat_ab, structure_C0, theta_hat)


@given(st.floats(1e-3, 10.0), st.floats(1e-2, 5.0))
def test_hat_ab_is_strictly_admissible(eta0, c1):
    a, b, overflow = hat_ab(eta0, c1)
    assume(not overflow)
    assert ball_search_margin(eta0, c1, a) > 0
    assert b == 2 + 100 * c1 * a


def test_hat_ab_saturates():
    assert hat_ab(1e-4, 1.0) == (SATURATED, SATURATED, True)
    with pytest.raises(ValueError):
        hat_ab(0.0, 1.0)


def test_theta_hat_values():
    assert theta_hat(3, 0.1) == pytest.approx(1 / (2 + 1.2 * (2 + math.pi)), abs=1e-12)
    assert theta_hat(4, 0.0) == 0.5
    with pytest.raises(ValueError):
        theta_hat(1, 0.1)


def test_cap_alpha_bound_values():
    assert cap_alpha_bound(2.0) == (1 / 1024, 1 / 8)
    assert cap_alpha_bound(1.0) == (1 / 32, 1 / 2)
    with pytest.raises(ValueError):
        cap_alpha_bound(0.5)


def test_structure_C0_picks_the_largest_term():
    assert structure_C0(0.01, 0.1, 10.0, 1.0, 3, 1.0) == (pytest.approx(600.2), "ball_search")
    assert structure_C0(1e-6, 0.1, 10.0, 1.0, 3, 1.0) == (pytest.approx(1e6), "inv_eta2")
    assert structure_C0(0.5, 0.1, 1e4, 1.0, 3, 1.0) == (2e4, "two_b_hat")
    with pytest.raises(ValueError):
        structure_C0(0.0, 0.1, 1.0, 1.0, 3, 1.0)


def test_bundle_round_trip():
    b = ConstantBundle.build(3, 0.1, 0.1, 1.0, 0.01, 5.0)
    assert ConstantBundle.from_json(b.to_json()) == b
    assert not b.overflow
    assert b.alpha_tilde == b.C0 ** -5 / 32


def test_bundle_flags_overflow():
    b = ConstantBundle.build(3, 0.2031348, 0.1490712, 1.9e-4, 0.01, 5.0)
    assert b.overflow and b.C0 == SATURATED


@given(st.floats(0.01, 100), st.floats(0, 100), st.integers(2, 6), st.floats(0, 10))
def test_curvature_lower_bound_is_decreasing(H, d, n, g):
    lo = curvature_lower_bound(H, d, n, g)
    assert 0 < lo <= H * (1 + 1e-15)
    assert curvature_lower_bound(H, d + 1.0, n, g) <= lo


def test_curvature_lower_bound_on_bowl(bowl3_small, rng):
    from necklab.flow import estimate_gammas
    s = bowl3_small
    g1 = estimate_gammas([s]).gamma1
    idx = s.core_indices
    p = rng.choice(idx, 1000)
    q = rng.choice(idx, 1000)
    d = np.abs(s.s[p] - s.s[q])  # same meridian: intrinsic distance
    lo = np.array([curvature_lower_bound(s.H[i], di, 3, g1) for i, di in zip(p, d)])
    assert np.all(s.H[q] >= lo * (1 - 1e-9))
