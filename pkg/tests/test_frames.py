import numpy as np
import pytest
from hypothesis import given, strategies as st

from necklab.frames import (TwoFrameQuery, brute_force_frame_membership,
                            eigenspace_sum_membership, min_two_frame_value,
                            minimizing_frame_membership, random_instance, validate_claim)

E = np.eye(3)


@pytest.mark.parametrize("v, expected", [
    (E[0], True), (E[1], True), (E[2], False),
    ((E[0] + E[1]) / np.sqrt(2), True), ((E[0] + E[2]) / np.sqrt(2), False),
])
def test_distinct_spectrum_examples(v, expected):
    h = np.diag([1.0, 2.0, 3.0])
    assert minimizing_frame_membership(h, v) is expected
    assert eigenspace_sum_membership(h, v) is expected
    assert brute_force_frame_membership(h, v, rng=0).member is expected


def test_repeated_bottom_eigenvalue():
    h = np.diag([1.0, 1.0, 2.0])
    assert minimizing_frame_membership(h, (E[0] + E[1]) / np.sqrt(2))
    assert not minimizing_frame_membership(h, E[2])
    assert min_two_frame_value(h) == 2.0


def test_query_validation():
    with pytest.raises(ValueError):
        TwoFrameQuery(np.eye(3), np.array([1.0, 1.0, 0.0]))
    with pytest.raises(ValueError):
        TwoFrameQuery(np.array([[1.0, 2.0], [0.0, 1.0]]), np.array([1.0, 0.0]))


def test_batch_oracle_small():
    rows = validate_claim((3, 4, 5, 6), count=100, seed=7, n_candidates=20_000)
    assert all(r.passed for r in rows)
    assert all(0 < r.members < r.instances for r in rows)


@given(st.integers(3, 6), st.integers(0, 2 ** 31), st.floats(0.1, 10), st.floats(-5, 5))
def test_membership_invariant_under_conjugation_scaling_and_shift(n, seed, c, shift):
    rng = np.random.default_rng(seed)
    h, v, _ = random_instance(n, rng)
    Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    base = minimizing_frame_membership(h, v)
    assert minimizing_frame_membership(Q @ h @ Q.T, Q @ v) == base
    assert minimizing_frame_membership(c * h, v) == base
    assert minimizing_frame_membership(h + shift * np.eye(n), v) == base


def test_instance_kinds_behave():
    rng = np.random.default_rng(3)
    for _ in range(20):
        h, v, _ = random_instance(4, rng, "inside")
        assert minimizing_frame_membership(h, v)
        h, v, _ = random_instance(4, rng, "perturbed")
        assert not eigenspace_sum_membership(h, v)
