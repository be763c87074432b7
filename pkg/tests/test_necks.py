from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import special_ortho_group

from necklab.models import bowl_surface, cylinder_surface, sphere_surface
from necklab.necks import (CoverageError, NeckCertificate, axis_alignment_check, calibrate_eta0,
                           decompose, detect_neck, estimate_axis, neck_measures, neck_quality,
                           trace_height_curves)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_cylinder_is_a_neck_everywhere(n):
    c = cylinder_surface(n)
    for i in c.core_indices[::20]:
        cert = detect_neck(c, int(i), 1e-6, 10.0)
        assert cert.accepted and cert.epsilon_achieved == 0.0
        assert np.allclose(cert.axis, c.placement.axis)
        assert cert.radius_scale == pytest.approx(1.0)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_sphere_is_never_a_neck(n):
    s = sphere_surface(n, m=201)
    m = neck_measures(s, 1.0)
    assert np.all(m.quality >= 1.0 / n - 1e-12)
    for i in range(0, 201, 25):
        assert not detect_neck(s, i, 1.0 / n - 1e-3, 1.0).accepted


def test_open_sample_without_room_is_a_coverage_failure():
    c = replace(cylinder_surface(3, half_length=10.0), translation_invariant=False)
    rej = detect_neck(c, 200, 0.1, 5.0)
    assert not rej.accepted and rej.reason == "coverage"
    with pytest.raises(CoverageError):
        neck_quality(c, 200, 5.0)


def test_epsilon_must_be_positive():
    with pytest.raises(ValueError):
        detect_neck(cylinder_surface(3), 10, 0.0, 1.0)


@settings(max_examples=25)
@given(st.floats(0.5, 4.0), st.floats(1.0, 2.0))
def test_quality_is_monotone_in_L(bowl3_small, L, factor):
    idx = bowl3_small.core_indices[::15]
    a = neck_measures(bowl3_small, L, idx)
    b = neck_measures(bowl3_small, L * factor, idx)
    both = a.covered & b.covered
    assert np.all(b.quality[both] >= a.quality[both] * (1 - 1e-12))


@given(st.floats(0.05, 20.0))
def test_quality_is_scale_invariant(bowl3_small, c):
    idx = bowl3_small.core_indices[::25]
    a = neck_measures(bowl3_small, 2.0, idx).quality
    b = neck_measures(bowl3_small.scaled(c), 2.0, idx).quality
    fin = np.isfinite(a)
    assert np.array_equal(fin, np.isfinite(b))
    assert np.allclose(a[fin], b[fin], rtol=1e-8)


def test_rigid_motion_moves_the_axis(bowl3):
    Q = special_ortho_group.rvs(4, random_state=11)
    moved = bowl3.moved(Q, [0.5, -1.0, 2.0, 0.0])
    i = int(bowl3.core_indices[-10])
    a = detect_neck(bowl3, i, 0.1, 5.0)
    b = detect_neck(moved, i, 0.1, 5.0)
    assert a.accepted and b.accepted
    assert b.epsilon_achieved == pytest.approx(a.epsilon_achieved, rel=1e-12)
    assert abs(b.axis @ (Q @ a.axis)) == pytest.approx(1.0, abs=1e-12)


def test_tilted_bowl_axis_is_recovered(bowl3_small):
    Q = special_ortho_group.rvs(4, random_state=3)
    moved = bowl3_small.moved(Q, [1.0, 2.0, 3.0, 4.0])
    est = estimate_axis(moved)
    assert np.linalg.norm(est.omega + Q @ bowl3_small.placement.axis) < 1e-5
    assert est.min_dot > 0


def test_axis_estimate_rejects_closed_surfaces():
    with pytest.raises(ValueError):
        estimate_axis(sphere_surface(3, m=101))


def test_bowl_decomposition(bowl3):
    rep = decompose(bowl3, 0.1, 0.05, 5.0)
    assert rep.topology == "noncompact"
    assert len(rep.caps) == 1 and rep.caps[0].tip_end == 0
    assert rep.all_passed
    t = rep.transition_points[0]
    assert rep.quality[t] <= 0.05
    assert rep.caps[0].diameter <= rep.C0_measured * 2 / bowl3.H[t]


def test_decomposition_rejects_bad_tolerances(bowl3_small):
    with pytest.raises(ValueError):
        decompose(bowl3_small, 0.05, 0.1, 5.0)
    with pytest.raises(ValueError):
        decompose(bowl3_small, 0.1, 0.05, 0.0)


def test_dumbbell_decomposition(dumbbell_snapshot):
    rep = decompose(dumbbell_snapshot, 0.1, 0.05, 5.0)
    assert rep.topology == "compact"
    assert sorted(c.tip_end for c in rep.caps) == [0, 1]
    assert rep.neck_fraction > 0.3
    status = {c.name: c.status for c in rep.checks}
    assert "fail" not in status.values()


def test_dumbbell_neck_axes_align(dumbbell_snapshot):
    rep = decompose(dumbbell_snapshot, 0.1, 0.05, 5.0)
    certs = [detect_neck(dumbbell_snapshot, int(i), 0.1, 5.0) for i in rep.neck_points[::10]]
    assert all(isinstance(c, NeckCertificate) for c in certs)
    res = axis_alignment_check(certs)
    assert res.max_angle <= max(5 * 0.1, np.radians(2))
    with pytest.raises(ValueError):
        axis_alignment_check(certs[:1])


def test_calibrated_eta_is_consistent(bowl3_small):
    cal = calibrate_eta0(bowl3_small, 0.3, 2.0)
    m = neck_measures(bowl3_small, 2.0)
    below = m.covered & (m.ratio_lambda1 < cal.eta0)
    assert np.all(m.quality[below] <= 0.3)
    assert cal.rejected > 0 and cal.limiting_node is not None


def test_height_curves_on_models(bowl3_small):
    s = sphere_surface(3, m=801)
    fam = trace_height_curves(s, 200, s.placement.axis)
    assert fam.monitors["terminals"] == ["critical-point"]
    assert not fam.monitors["monotone_flagged"] and not fam.monitors["shrinking_flagged"]
    end = fam.curves[0].nu_dot_omega
    assert end[0] == pytest.approx(-np.cos(np.pi / 4), abs=1e-12) and end[-1] > 1 - 1e-6

    c = cylinder_surface(3)
    fam = trace_height_curves(c, 200, c.placement.axis)
    assert fam.monitors["terminals"] == ["left-sample"]
    assert np.all(np.abs(np.concatenate([cv.nu_dot_omega for cv in fam.curves])) < 1e-12)

    b = bowl3_small
    fam = trace_height_curves(b, 100, -b.placement.axis, gamma1=0.2031348)
    assert fam.monitors["theta_bound_holds"]
    assert not fam.monitors["monotone_flagged"]
