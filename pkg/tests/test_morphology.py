import numpy as np
import pytest
import yaml

from geoflap.morphology import (AppendageParams, MIRROR, Planform, SchemaError,
                                ValidationError, default_morphology, from_dict,
                                load_morphology, save_morphology, to_dict)


@pytest.fixture
def morph():
    return default_morphology()


def test_default_loads_and_validates(morph):
    morph.validate()
    assert morph.total_mass > 0
    assert morph.right.m == morph.left.m


def test_mirror_is_involutive(morph):
    twice = morph.right.mirrored().mirrored()
    assert np.allclose(twice.mu, morph.right.mu)
    assert np.allclose(twice.nu, morph.right.nu)
    assert np.allclose(twice.J, morph.right.J)


def test_mirror_reflects_y(morph):
    left = morph.right.mirrored()
    assert np.allclose(left.mu, MIRROR @ morph.right.mu)
    assert np.allclose(left.J, MIRROR @ morph.right.J @ MIRROR)


def test_left_wing_constructed_by_mirror(morph):
    assert np.allclose(morph.left.mu, MIRROR @ morph.right.mu)
    assert np.allclose(morph.left.nu, MIRROR @ morph.right.nu)


def test_negative_mass_rejected(morph):
    cfg = to_dict(morph)
    cfg["body"]["mass"] = -1.0
    with pytest.raises(ValidationError):
        from_dict(cfg)


def test_non_spd_inertia_rejected(morph):
    cfg = to_dict(morph)
    cfg["body"]["inertia"][0][0] = -1e-8
    with pytest.raises(ValidationError):
        from_dict(cfg)


def test_asymmetric_left_wing_rejected(morph):
    cfg = to_dict(morph)
    cfg["left_wing"]["mass_center"][1] *= 0.9
    with pytest.raises(ValidationError):
        from_dict(cfg)


def test_unrealizable_inertia_rejected(morph):
    # largest principal moment about the mass center must not exceed the sum
    # of the other two; no mass distribution can violate that
    cfg = to_dict(morph)
    # still positive definite, but the x-z block becomes too plate-like for
    # the mass-center offset
    cfg["abdomen"]["inertia"][0][0] = 8e-10
    with pytest.raises(ValidationError):
        from_dict(cfg)


def test_missing_field_is_schema_error(morph):
    cfg = to_dict(morph)
    del cfg["body"]
    with pytest.raises(SchemaError):
        from_dict(cfg)


def test_yaml_roundtrip(tmp_path, morph):
    path = tmp_path / "m.yaml"
    save_morphology(morph, path)
    again = load_morphology(path)
    assert np.allclose(again.right.J, morph.right.J)
    assert again.total_mass == pytest.approx(morph.total_mass)


def test_elliptic_planform_area_converges():
    exact = np.pi / 4.0 * 0.06 * 0.03  # quarter-ellipse chord distribution
    coarse = Planform(span=0.06, n_strips=50, max_chord=0.03).area()
    fine = Planform(span=0.06, n_strips=5000, max_chord=0.03).area()
    assert abs(fine - exact) < 1e-3 * exact
    assert abs(coarse - exact) < 2e-2 * exact


def test_stations_cover_span():
    plan = Planform(span=0.05, n_strips=17, max_chord=0.02)
    r, c, dr = plan.stations()
    assert np.isclose(dr.sum(), plan.span)
    assert np.all((r > 0) & (r < plan.span))
    assert len(r) == 17


def test_rectangular_planform():
    plan = Planform(span=0.05, n_strips=10, max_chord=0.02, shape="rectangular")
    assert np.isclose(plan.area(), 0.001)


def test_unknown_shape_rejected():
    with pytest.raises(SchemaError):
        Planform(span=0.05, n_strips=10, max_chord=0.02, shape="hex").stations()


def test_wing_inertia_from_planform_option(morph):
    cfg = to_dict(morph)
    cfg["wing_inertia_from_planform"] = True
    del cfg["left_wing"]
    built = from_dict(cfg)
    # thin plate: J33 approx J11 + J22 (perpendicular axis theorem)
    J = built.right.J
    assert np.isclose(J[2, 2], J[0, 0] + J[1, 1], rtol=1e-10)
    assert built.right.nu[1] > 0  # spanwise mass center on the +y side
