"""Constitutive matrix, yield functions and visco-plastic step tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from igabem.kernels import IsotropicMaterial
from igabem.materials import (YieldModel, constitutive, cormeau_time_step,
                              elastic_mismatch_initial_stress, flow_direction,
                              viscoplastic_step, yield_value)


def test_constitutive_plane_stress_uniaxial():
    mat = IsotropicMaterial(100.0, 0.3, mode="plane_stress")
    C = constitutive(mat)
    eps = np.linalg.solve(C, [1.0, 0.0, 0.0])
    assert abs(eps[0] - 1.0 / 100.0) < 1e-14       # E direct
    assert abs(eps[1] + 0.3 / 100.0) < 1e-14       # -nu/E
    assert abs(eps[2]) < 1e-15


def test_constitutive_plane_strain_stiffer():
    ps = constitutive(IsotropicMaterial(100.0, 0.3, mode="plane_stress"))
    pe = constitutive(IsotropicMaterial(100.0, 0.3, mode="plane_strain"))
    assert pe[0, 0] > ps[0, 0]
    mu = 100.0 / (2 * 1.3)
    assert abs(ps[2, 2] - mu) < 1e-12 and abs(pe[2, 2] - mu) < 1e-12


def test_elastic_mismatch_vanishes_for_equal_materials():
    C = constitutive(IsotropicMaterial(100.0, 0.3))
    s0 = elastic_mismatch_initial_stress(C, C, np.array([0.1, -0.2, 0.05]))
    assert np.abs(s0).max() < 1e-14


def test_normal_cap_yield_value():
    ym = YieldModel("normal_cap", limit=0.5, component="y", tension_only=True)
    assert yield_value(np.array([0.0, 0.7, 0.0]), ym) == pytest.approx(0.2)
    assert yield_value(np.array([0.0, -0.7, 0.0]), ym) < 0.0   # compression free
    ym2 = YieldModel("normal_cap", limit=0.5, component="y", tension_only=False)
    assert yield_value(np.array([0.0, -0.7, 0.0]), ym2) == pytest.approx(0.2)


def test_mohr_coulomb_yield_against_principal_formula():
    phi = np.radians(30.0)
    c = 0.73
    ym = YieldModel("mohr_coulomb", friction_angle_deg=30.0, cohesion=c)
    mat = IsotropicMaterial(6000.0, 0.25, mode="plane_strain")
    sig = np.array([-4.0, -8.0, 1.0])
    center = 0.5 * (sig[0] + sig[1])
    rad = np.hypot(0.5 * (sig[0] - sig[1]), sig[2])
    sz = mat.poisson_ratio * (sig[0] + sig[1])
    vals = sorted([center + rad, center - rad, sz])
    s1, s3 = vals[-1], vals[0]
    expected = (s1 - s3) + (s1 + s3) * np.sin(phi) - 2 * c * np.cos(phi)
    assert yield_value(sig, ym, mat) == pytest.approx(expected, rel=1e-12)


@given(sx=st.floats(-10, 10), sy=st.floats(-10, 10), txy=st.floats(0.5, 5))
@settings(max_examples=60, deadline=None)
def test_mc_flow_direction_matches_fd_gradient(sx, sy, txy):
    ym = YieldModel("mohr_coulomb", friction_angle_deg=30.0, cohesion=0.73)
    sig = np.array([sx, sy, txy])
    center = 0.5 * (sx + sy)
    rad = np.hypot(0.5 * (sx - sy), txy)
    if center + rad < 0.1 or center - rad > -0.1:
        return  # keep sigma_z = 0 strictly between the in-plane principals
    a = flow_direction(sig, ym)[0]
    h = 1e-6
    fd = np.empty(3)
    for k in range(3):
        d = np.zeros(3)
        d[k] = h
        fd[k] = (yield_value(sig + d, ym) - yield_value(sig - d, ym)) / (2 * h)
    assert np.abs(a - fd).max() < 1e-4


def test_viscoplastic_step_zero_below_yield():
    ym = YieldModel("normal_cap", limit=1.0, component="y", time_step=0.1)
    C = constitutive(IsotropicMaterial(100.0, 0.0))
    s0 = viscoplastic_step(np.array([[0.0, 0.5, 0.0]]), ym, C, None)
    assert np.abs(s0).max() == 0.0


def test_viscoplastic_step_proportional_to_overshoot_and_dt():
    C = constitutive(IsotropicMaterial(100.0, 0.0))
    sig = np.array([[0.0, 1.5, 0.0]])
    one = viscoplastic_step(sig, YieldModel("normal_cap", limit=1.0,
                                            component="y", time_step=0.1), C, None)
    two = viscoplastic_step(sig, YieldModel("normal_cap", limit=1.0,
                                            component="y", time_step=0.2), C, None)
    assert np.allclose(two, 2.0 * one)
    assert one[0, 1] > 0.0   # relaxation pushes sigma_y toward the cap


def test_cormeau_step_formula():
    mat = IsotropicMaterial(6000.0, 0.25)
    assert cormeau_time_step(mat, 1.0) == pytest.approx(4 * 1.25 / (3 * 6000.0))


def test_yield_model_validation():
    with pytest.raises(ValueError):
        YieldModel("normal_cap")                       # no limit at all
    with pytest.raises(ValueError):
        YieldModel("mohr_coulomb", friction_angle_deg=95.0)
    with pytest.raises(ValueError):
        YieldModel("unknown_kind", limit=1.0)
