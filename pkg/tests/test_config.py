import numpy as np
import pytest
import yaml

from geoflap.config import RunConfig, orbit_params_from_config
from geoflap.morphology import SchemaError
from geoflap.optimization import default_seed


def test_defaults_present():
    cfg = RunConfig.load()
    assert cfg.get("gravity") == 9.81
    assert cfg.get("sim.steps_per_period") == 1200
    assert cfg.get("aero.rho") == 1.225
    assert cfg.get("missing.key", "fallback") == "fallback"


def test_file_merge(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("gravity: 3.71\nsim:\n  periods: 2\n")
    cfg = RunConfig.load(path)
    assert cfg.get("gravity") == 3.71
    assert cfg.get("sim.periods") == 2
    # untouched siblings keep their defaults
    assert cfg.get("sim.steps_per_period") == 1200


def test_dotted_overrides():
    cfg = RunConfig.load(overrides=["search.maxfev=25", "plots=false",
                                    "aero.rho=1.0"])
    assert cfg.get("search.maxfev") == 25
    assert cfg.get("plots") is False
    assert cfg.get("aero.rho") == 1.0


def test_bad_override_rejected():
    with pytest.raises(SchemaError):
        RunConfig.load(overrides=["no_equals_sign"])
    with pytest.raises(SchemaError):
        RunConfig.load(overrides=["gravity.sub=1"])  # scalar has no children


def test_non_mapping_config_rejected(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("- just\n- a list\n")
    with pytest.raises(SchemaError):
        RunConfig.load(path)


def test_snapshot_roundtrip(tmp_path):
    cfg = RunConfig.load(overrides=["seed=7"])
    snap = tmp_path / "snap.yaml"
    cfg.snapshot(snap)
    again = RunConfig.load(snap)
    assert again.data == cfg.data


def test_copy_is_independent():
    cfg = RunConfig.load()
    other = cfg.copy()
    other.data["sim"]["periods"] = 99
    assert cfg.get("sim.periods") == 1


def test_orbit_params_from_config_seed_source():
    cfg = RunConfig.load(overrides=["orbit.source=seed"])
    p, und = orbit_params_from_config(cfg)
    assert und is True
    assert np.allclose(p.to_array(), default_seed(True).to_array())


def test_orbit_params_explicit_override():
    cfg = RunConfig.load(overrides=["orbit.source=seed", "orbit.f=9.5"])
    p, _ = orbit_params_from_config(cfg)
    assert p.f == 9.5


def test_orbit_params_no_undulation():
    cfg = RunConfig.load(overrides=["orbit.source=seed",
                                    "orbit.undulation=false"])
    p, und = orbit_params_from_config(cfg)
    assert und is False
    assert p.theta_Am == 0.0 and p.theta_Aa == 0.0
