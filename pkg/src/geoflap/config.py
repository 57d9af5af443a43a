"""Run configuration: defaults, file merging, dotted overrides, snapshots.

Every CLI run resolves its configuration once (defaults <- config file <-
--set overrides) and writes the resolved snapshot next to its outputs, so
any result directory can be rerun exactly.
"""

from __future__ import annotations

import copy
import importlib.resources
from dataclasses import dataclass, field

import yaml

from .morphology import SchemaError


def _defaults():
    return {
        "seed": 0,
        "gravity": 9.81,
        "morphology": None,          # None: bundled default set
        "plots": True,
        "sim": {
            "steps_per_period": 1200,
            "samples_per_period": 200,
            "periods": 1,
        },
        "aero": {
            "rho": 1.225,
            "rotational_force": False,
            "n_strips": None,        # None: planform strip count
            "coeff_table_lift": None,
            "coeff_table_drag": None,
        },
        "orbit": {
            "source": "bundled",     # bundled solution, else 'seed' values
            "undulation": True,
        },
        "search": {
            "n_restarts": 4,
            "maxfev": 800,
            "n_steps": 150,
            "n_strips": 10,
            "w1": 1.0,
            "w2": 0.1,
            "eps_x": 1.0e-3,
            "eps_v": 1.0e-2,
            "penalty": 50.0,
            "restart_scale": 0.15,
        },
        "sensitivity": {
            "delta": 0.05,
            "n_steps": 400,
        },
        "mpc": {
            "n_periods": 4,
            "maxfev": 400,
            "steps_per_period": 80,
            "n_strips": 8,
            "delta_bound": 0.3,
        },
    }


def _deep_merge(base, over):
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_merge(base[k], v)
        else:
            base[k] = v
    return base


@dataclass
class RunConfig:
    """Resolved, fully serializable run settings."""

    data: dict = field(default_factory=_defaults)

    @classmethod
    def load(cls, path=None, overrides=()):
        cfg = cls()
        if path is not None:
            with open(path) as fh:
                try:
                    loaded = yaml.safe_load(fh) or {}
                except yaml.YAMLError as exc:
                    raise SchemaError(f"cannot parse config: {exc}") from exc
            if not isinstance(loaded, dict):
                raise SchemaError("config file must hold a mapping")
            _deep_merge(cfg.data, loaded)
        for item in overrides:
            cfg.set_dotted(item)
        return cfg

    def set_dotted(self, item):
        """Apply one 'a.b.c=value' override; values parse as YAML scalars."""
        if "=" not in item:
            raise SchemaError(f"--set needs key=value, got '{item}'")
        key, _, raw = item.partition("=")
        node = self.data
        parts = key.strip().split(".")
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise SchemaError(f"cannot descend into scalar '{p}'")
            node = nxt
        node[parts[-1]] = yaml.safe_load(raw)

    def get(self, dotted, default=None):
        node = self.data
        for p in dotted.split("."):
            if not isinstance(node, dict) or p not in node:
                return default
            node = node[p]
        return node

    def copy(self):
        return RunConfig(copy.deepcopy(self.data))

    def snapshot(self, path):
        with open(path, "w") as fh:
            yaml.safe_dump(self.data, fh, sort_keys=False)


def bundled_orbit_params():
    """The packaged periodic-orbit solution for the default morphology.

    Falls back to None when no solution file is bundled; callers then use
    the built-in seed parameters.
    """
    ref = importlib.resources.files("geoflap") / "data" / "default_orbit.yaml"
    try:
        raw = yaml.safe_load(ref.read_text())
    except FileNotFoundError:
        return None
    return raw


def orbit_params_from_config(cfg: RunConfig):
    """OrbitParameterVector implied by the config's orbit section."""
    from .optimization import PARAM_NAMES, OrbitParameterVector, default_seed

    section = cfg.get("orbit", {}) or {}
    explicit = {k: float(v) for k, v in section.items() if k in PARAM_NAMES}
    source = section.get("source", "bundled")
    undulation = bool(section.get("undulation", True))
    base = None
    if source == "bundled":
        raw = bundled_orbit_params()
        if raw is not None:
            key = "undulating" if undulation else "fixed"
            params = raw.get(key, raw.get("undulating"))
            if params:
                base = OrbitParameterVector(
                    **{k: float(v) for k, v in params.items()
                       if k in PARAM_NAMES})
    if base is None:
        base = default_seed(undulating=undulation)
    if explicit:
        from dataclasses import replace
        base = replace(base, **explicit)
    if not undulation:
        base = base.frozen_abdomen()
    return base, undulation
