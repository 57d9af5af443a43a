import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from geoflap.liegroup import (AlgebraElement, GroupElement, ad_star, ad_star6,
                              ad_star9, attitude_step, check_rotation, cross3,
                              exp_so3, hat, log_so3, orthonormality_error,
                              project_so3, rotation_angle, vee)

rng = np.random.default_rng(42)

vec3 = st.tuples(*[st.floats(-3.0, 3.0) for _ in range(3)]).map(np.array)


def test_hat_vee_roundtrip():
    u = np.array([0.3, -1.2, 2.5])
    assert np.allclose(vee(hat(u)), u)


def test_hat_acts_as_cross_product():
    u, y = rng.normal(size=3), rng.normal(size=3)
    assert np.allclose(hat(u) @ y, np.cross(u, y))


def test_vee_rejects_non_skew():
    with pytest.raises(ValueError):
        vee(np.eye(3))


def test_cross3_matches_numpy():
    a = rng.normal(size=(7, 3))
    b = rng.normal(size=(7, 3))
    assert np.allclose(cross3(a, b), np.cross(a, b))
    assert np.allclose(cross3(a[0], b[0]), np.cross(a[0], b[0]))


@settings(max_examples=60, deadline=None)
@given(vec3)
def test_exp_so3_matches_scipy(u):
    R = exp_so3(u)
    R_ref = Rotation.from_rotvec(u).as_matrix()
    assert np.allclose(R, R_ref, atol=1e-12)


def test_exp_so3_small_angle_branch():
    u = np.array([1e-10, -2e-10, 5e-11])
    R = exp_so3(u)
    assert orthonormality_error(R) < 1e-15
    assert np.allclose(vee((R - R.T) / 2.0), u, atol=1e-18)


@settings(max_examples=60, deadline=None)
@given(vec3)
def test_log_exp_roundtrip(u):
    n = np.linalg.norm(u)
    if n >= np.pi:
        u = u * (np.pi - 1e-3) / n
    assert np.allclose(log_so3(exp_so3(u)), u, atol=1e-9)


def test_log_near_pi():
    axis = np.array([1.0, 2.0, -0.5])
    axis /= np.linalg.norm(axis)
    u = (np.pi - 1e-8) * axis
    v = log_so3(exp_so3(u))
    assert np.allclose(v, u, atol=1e-6)


def test_rotation_angle():
    assert rotation_angle(np.eye(3)) == 0.0
    assert np.isclose(rotation_angle(exp_so3(np.array([0.0, 0.7, 0.0]))), 0.7)


def test_attitude_step_stays_on_group():
    R = exp_so3(rng.normal(size=3))
    w = rng.normal(size=3)
    R2 = attitude_step(R, w, 1e-2)
    assert orthonormality_error(R2) < 1e-13
    with pytest.raises(ValueError):
        attitude_step(R, w, 0.0)


def test_project_so3():
    R = exp_so3(rng.normal(size=3))
    noisy = R + 1e-6 * rng.normal(size=(3, 3))
    P = project_so3(noisy)
    assert orthonormality_error(P) < 1e-14
    assert np.linalg.norm(P - R) < 1e-5


def test_check_rotation_rejects_reflection():
    refl = np.diag([1.0, 1.0, -1.0])
    with pytest.raises(ValueError):
        check_rotation(refl)


def test_group_element_validate():
    g = GroupElement.identity()
    g.validate()
    g.R = 1.1 * np.eye(3)
    with pytest.raises(ValueError):
        g.validate()


def test_algebra_element_roundtrip():
    xi = rng.normal(size=15)
    a = AlgebraElement.from_vector(xi)
    assert np.allclose(a.as_vector(), xi)
    with pytest.raises(ValueError):
        AlgebraElement.from_vector(np.full(15, np.nan))


def test_ad_star_blocks():
    xi = rng.normal(size=15)
    A = ad_star(xi)
    assert np.allclose(A[0:3, 0:3], 0.0)
    assert np.allclose(A[3:6, 3:6], -hat(xi[3:6]))
    assert np.allclose(A[6:9, 6:9], -hat(xi[6:9]))
    # consistency of the partitioned forms
    assert np.allclose(ad_star6(xi[0:6]), A[0:6, 0:6])
    assert np.allclose(ad_star9(xi[6:15]), A[6:15, 6:15])


def test_ad_star_annihilates_kinetic_pairing():
    # xi . ad*_xi(p) = 0 when p is parallel within each rotational slot;
    # more generally the rotational terms are w . (p x w)-type and vanish
    xi = rng.normal(size=15)
    p = rng.normal(size=15)
    val = xi @ (ad_star(xi) @ p)
    assert abs(val) < 1e-12 * max(1.0, np.linalg.norm(p) * np.linalg.norm(xi) ** 2)
