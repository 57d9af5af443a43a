import numpy as np
import pytest

from geoflap.aero import (AeroEvaluator, AeroModel, drag_coeff_default,
                          lift_coeff_default, load_coeff_table,
                          tabulated_coeff, total_aero_wrench, wing_aero)
from geoflap.liegroup import GroupElement, exp_so3
from geoflap.morphology import default_morphology

rng = np.random.default_rng(11)


@pytest.fixture(scope="module")
def morph():
    return default_morphology()


def pure_translation_xi(v):
    xi = np.zeros(15)
    xi[0:3] = v
    return xi


def test_default_coefficients_transcription():
    # spot values recomputed by hand from the published fit formulas
    assert lift_coeff_default(0.0) == pytest.approx(0.0270, abs=2e-4)
    assert lift_coeff_default(np.pi / 4) == pytest.approx(1.8046, abs=2e-4)
    assert drag_coeff_default(0.0) == pytest.approx(0.3927, abs=2e-4)
    assert drag_coeff_default(np.pi / 4) == pytest.approx(1.7037, abs=2e-4)
    # lift peaks near 45 deg and is small at 0 and 90
    a = np.linspace(0.0, np.pi / 2, 91)
    cl = lift_coeff_default(a)
    assert 40 < np.degrees(a[np.argmax(cl)]) < 50
    assert cl[0] < 0.1 and cl[-1] < 0.3


def test_force_scales_with_density_and_speed_squared(morph):
    g = GroupElement.identity()
    xi = pure_translation_xi([1.0, 0.0, 0.4])
    F1, M1 = wing_aero(AeroModel(), morph, g, xi, "right")
    F2, _ = wing_aero(AeroModel(rho=2.0 * 1.225), morph, g, xi, "right")
    assert np.allclose(F2, 2.0 * F1, rtol=1e-12)
    # doubling speed at fixed direction keeps alpha, quadruples the load
    F4, M4 = wing_aero(AeroModel(), morph, g, 2.0 * xi, "right")
    assert np.allclose(F4, 4.0 * F1, rtol=1e-12)
    assert np.allclose(M4, 4.0 * M1, rtol=1e-12)


def test_strip_convergence(morph):
    g = GroupElement.identity()
    xi = np.zeros(15)
    xi[0:3] = [0.8, 0.0, 0.3]
    xi[3:6] = [0.2, 0.1, -0.4]
    xi[6:9] = [0.0, 1.0, 40.0]
    F_coarse, _ = wing_aero(AeroModel(n_strips=20), morph, g, xi, "right")
    F_mid, _ = wing_aero(AeroModel(n_strips=200), morph, g, xi, "right")
    F_fine, _ = wing_aero(AeroModel(n_strips=4000), morph, g, xi, "right")
    scale = np.linalg.norm(F_fine)
    assert np.linalg.norm(F_mid - F_fine) < 1e-3 * scale
    assert np.linalg.norm(F_coarse - F_fine) < 2e-2 * scale


def test_zero_velocity_gives_zero_load(morph):
    g = GroupElement.identity()
    F, M = wing_aero(AeroModel(), morph, g, np.zeros(15), "right")
    assert np.all(np.isfinite(F)) and np.all(np.isfinite(M))
    assert np.allclose(F, 0.0) and np.allclose(M, 0.0)


def test_drag_opposes_in_plane_motion(morph):
    g = GroupElement.identity()
    for _ in range(10):
        v = rng.normal(size=3)
        F, _ = wing_aero(AeroModel(), morph, g, pure_translation_xi(v), "right")
        # wing frame == body frame here; lift is perpendicular to the
        # in-plane velocity, so the power is pure drag and negative
        assert F @ np.array([v[0], 0.0, v[2]]) < 0.0
        assert F[1] == 0.0  # strip model produces no spanwise force


def test_mirror_symmetry_of_wrench(morph):
    # symmetric configuration and motion: no side force, roll or yaw moment
    refl = np.array([-1.0, 1.0, -1.0])
    Q_R = exp_so3(np.array([0.3, 0.5, -0.2]))
    S = np.diag([1.0, -1.0, 1.0])
    g = GroupElement(x=np.zeros(3), R=exp_so3(np.array([0.0, 0.6, 0.0])),
                     Q_R=Q_R, Q_L=S @ Q_R @ S, Q_A=np.eye(3))
    xi = np.zeros(15)
    xi[0:3] = [0.7, 0.0, -0.3]
    xi[3:6] = [0.0, 1.2, 0.0]
    xi[6:9] = [2.0, -1.0, 30.0]
    xi[9:12] = refl * xi[6:9]
    f = total_aero_wrench(AeroModel(), morph, g, xi)
    assert abs(f[1]) < 1e-15 * max(1.0, np.linalg.norm(f))
    assert abs(f[3]) < 1e-15 and abs(f[5]) < 1e-15
    # wing-frame loads of the two wings mirror each other
    F_R, M_R = wing_aero(AeroModel(), morph, g, xi, "right")
    F_L, M_L = wing_aero(AeroModel(), morph, g, xi, "left")
    assert np.allclose(F_L, np.array([1.0, -1.0, 1.0]) * F_R, atol=1e-15)
    assert np.allclose(M_L, refl * M_R, atol=1e-15)


def test_wrench_layout(morph):
    rots = [exp_so3(rng.normal(scale=0.5, size=3)) for _ in range(4)]
    g = GroupElement(x=rng.normal(size=3), R=rots[0], Q_R=rots[1],
                     Q_L=rots[2], Q_A=rots[3])
    xi = rng.normal(size=15)
    model = AeroModel()
    f = total_aero_wrench(model, morph, g, xi)
    F_R, M_R = wing_aero(model, morph, g, xi, "right")
    F_L, M_L = wing_aero(model, morph, g, xi, "left")
    assert np.allclose(f[0:3], g.R @ (g.Q_R @ F_R + g.Q_L @ F_L))
    assert np.allclose(f[6:9], M_R)
    assert np.allclose(f[9:12], M_L)
    assert np.allclose(f[12:15], 0.0)  # abdomen generates no aero load


def test_alpha_stays_in_first_quadrant(morph):
    # the effective angle of attack never leaves [0, pi/2], whatever the
    # velocity signs are
    seen = []
    model = AeroModel(C_L=lambda a: seen.append(np.asarray(a)) or
                      lift_coeff_default(a))
    g = GroupElement.identity()
    for _ in range(5):
        wing_aero(model, morph, g, rng.normal(size=15), "right")
    a = np.concatenate(seen)
    assert np.all(a >= 0.0) and np.all(a <= np.pi / 2 + 1e-15)


def test_rotational_force_branch(morph):
    # pure translation plus pitch rate: the added force is analytic
    model_on = AeroModel(rotational_force=True, n_strips=30)
    model_off = AeroModel(rotational_force=False, n_strips=30)
    g = GroupElement.identity()
    xi = pure_translation_xi([0.9, 0.0, 0.25])
    w = 35.0
    xi[6:9] = [0.0, w, 0.0]  # pitch rate does not move the station points
    F_on, M_on = wing_aero(model_on, morph, g, xi, "right")
    F_off, M_off = wing_aero(model_off, morph, g, xi, "right")
    ev = AeroEvaluator(model_on, morph)
    speed = np.hypot(xi[0], xi[2])
    dfz = -model_on.C_rot * model_on.rho * (ev.c**2 * ev.dr) * w * speed \
        * np.sign(xi[0])
    assert np.allclose(F_on - F_off, [0.0, 0.0, dfz.sum()], rtol=1e-12)
    assert np.allclose(M_on[0] - M_off[0], (ev.r * dfz).sum(), rtol=1e-12)
    # zero onflow: the sign() guard must leave the load finite and zero
    F0, M0 = wing_aero(model_on, morph, g,
                       np.concatenate([np.zeros(6), [0.0, w, 0.0],
                                       np.zeros(6)]), "right")
    assert np.allclose(F0, 0.0) and np.allclose(M0, 0.0)


def test_tabulated_coeff():
    table = [[0.0, 0.1], [np.pi / 4, 1.5], [np.pi / 2, 0.4]]
    fn = tabulated_coeff(table)
    assert fn(0.0) == pytest.approx(0.1)
    assert fn(np.pi / 8) == pytest.approx(0.8)
    with pytest.raises(ValueError):
        tabulated_coeff(np.zeros((3, 3)))


def test_load_coeff_table(tmp_path):
    path = tmp_path / "cl.txt"
    path.write_text("# angle coeff\n0.0, 0.1\n0.7853981633974483 1.5\n")
    fn = load_coeff_table(path)
    assert fn(np.pi / 4) == pytest.approx(1.5)


def test_model_with_strips_override(morph):
    model = AeroModel(n_strips=7)
    ev = AeroEvaluator(model, morph)
    assert len(ev.r) == 7
    assert len(AeroEvaluator(model.with_strips(13), morph).r) == 13
