"""Physical-parameter model of the vehicle: masses, inertias, offsets.

Parameters are loaded from a YAML config (units: kg, m, s, rad).  The
bundled default set is representative of large-butterfly scale (total mass about
half a gram, wing span a few centimeters) but is not reproduced from any
measured dataset; everything downstream that depends on it is tested by
properties, not value matching.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

import numpy as np
import yaml

MIRROR = np.diag([1.0, -1.0, 1.0])  # reflection across the body x-z plane

OFFSET_BOUND = 1.0  # m, sanity bound for insect scale


class SchemaError(ValueError):
    """A required config field is missing or malformed."""


class ValidationError(ValueError):
    """A physical invariant does not hold; message names the predicate."""


def _require(mapping, key, where):
    if key not in mapping:
        raise SchemaError(f"missing field '{where}.{key}'")
    return mapping[key]


def _as_matrix3(value, where):
    M = np.asarray(value, dtype=float)
    if M.shape != (3, 3):
        raise SchemaError(f"'{where}' must be a 3x3 matrix")
    return M


def _check_spd(J, name):
    if np.linalg.norm(J - J.T) > 1e-12 * max(1.0, np.linalg.norm(J)):
        raise ValidationError(f"{name} symmetric")
    try:
        np.linalg.cholesky(J)
    except np.linalg.LinAlgError:
        raise ValidationError(f"{name} positive definite") from None


def _check_realizable(m, nu, J, name):
    """Require the inertia about the mass center to satisfy the triangle
    inequality (largest principal moment <= sum of the other two), which any
    actual mass distribution obeys.  Planar bodies sit exactly on the bound,
    so a small relative slack is allowed for roundoff."""
    hnu = _hat(nu)
    lam = np.linalg.eigvalsh(J + m * (hnu @ hnu))
    slack = 1e-9 * lam[-1]
    if lam[-1] > lam[0] + lam[1] + slack:
        raise ValidationError(f"{name} realizable (triangle inequality)")


def _hat(u):
    return np.array([[0.0, -u[2], u[1]],
                     [u[2], 0.0, -u[0]],
                     [-u[1], u[0], 0.0]])


@dataclass
class BodyParams:
    m_B: float
    J_B: np.ndarray

    def validate(self):
        if not self.m_B > 0:
            raise ValidationError("m_B > 0")
        _check_spd(self.J_B, "J_B")
        _check_realizable(self.m_B, np.zeros(3), self.J_B, "J_B")
        return self


@dataclass
class AppendageParams:
    """One wing or the abdomen.

    mu is the joint offset from the body-frame origin (body frame); nu the
    mass-center location in the appendage frame; J the inertia about the
    appendage-frame origin.
    """

    m: float
    mu: np.ndarray
    nu: np.ndarray
    J: np.ndarray
    name: str = ""

    def validate(self):
        tag = self.name or "appendage"
        if not self.m > 0:
            raise ValidationError(f"m_{tag} > 0")
        _check_spd(self.J, f"J_{tag}")
        _check_realizable(self.m, self.nu, self.J, f"J_{tag}")
        if np.linalg.norm(self.mu) >= OFFSET_BOUND:
            raise ValidationError(f"||mu_{tag}|| < 1 m")
        if np.linalg.norm(self.nu) >= OFFSET_BOUND:
            raise ValidationError(f"||nu_{tag}|| < 1 m")
        return self

    def mirrored(self, name=""):
        """The y-reflection of this appendage (left from right)."""
        return AppendageParams(
            m=self.m,
            mu=MIRROR @ self.mu,
            nu=MIRROR @ self.nu,
            J=MIRROR @ self.J @ MIRROR,
            name=name,
        )


@dataclass
class Planform:
    """Wing outline sampled at strip stations; feeds the aero module."""

    span: float
    n_strips: int
    max_chord: float
    shape: str = "elliptic"

    def stations(self):
        """Midpoint strip stations r, chords c(r), widths dr."""
        edges = np.linspace(0.0, self.span, self.n_strips + 1)
        r = 0.5 * (edges[:-1] + edges[1:])
        dr = np.diff(edges)
        if self.shape == "elliptic":
            c = self.max_chord * np.sqrt(np.clip(1.0 - (r / self.span) ** 2, 0.0, None))
        elif self.shape == "rectangular":
            c = np.full_like(r, self.max_chord)
        else:
            raise SchemaError(f"unknown planform shape '{self.shape}'")
        return r, c, dr

    def area(self):
        r, c, dr = self.stations()
        return float(np.sum(c * dr))

    def validate(self):
        if not self.span > 0:
            raise ValidationError("span > 0")
        if not self.max_chord > 0:
            raise ValidationError("max_chord > 0")
        if self.n_strips < 2:
            raise ValidationError("n_strips >= 2")
        return self


@dataclass
class Morphology:
    body: BodyParams
    right: AppendageParams
    left: AppendageParams
    abdomen: AppendageParams
    planform: Planform
    f_natural: float = 10.2247  # Hz, recorded as metadata
    label: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def total_mass(self):
        return self.body.m_B + self.right.m + self.left.m + self.abdomen.m

    def appendages(self):
        """(right, left, abdomen) in the canonical block order."""
        return (self.right, self.left, self.abdomen)

    def validate(self):
        self.body.validate()
        for app in self.appendages():
            app.validate()
        self.planform.validate()
        mirror = self.right.mirrored()
        for got, want, what in (
            (self.left.mu, mirror.mu, "mu_L is the y-reflection of mu_R"),
            (self.left.nu, mirror.nu, "nu_L is the y-reflection of nu_R"),
            (self.left.J, mirror.J, "J_L is the y-reflection of J_R"),
        ):
            if not np.allclose(got, want, rtol=1e-12, atol=1e-15):
                raise ValidationError(what)
        if abs(self.left.m - self.right.m) > 1e-15:
            raise ValidationError("m_L equals m_R")
        return self


def _parse_appendage(section, name):
    m = float(_require(section, "mass", name))
    mu = np.asarray(_require(section, "joint_offset", name), dtype=float)
    nu = np.asarray(_require(section, "mass_center", name), dtype=float)
    J = _as_matrix3(_require(section, "inertia", name), f"{name}.inertia")
    if mu.shape != (3,) or nu.shape != (3,):
        raise SchemaError(f"'{name}' offsets must be 3-vectors")
    return AppendageParams(m=m, mu=mu, nu=nu, J=J, name=name)


def _wing_inertia_from_planform(planform, mass, chord_offset=0.0):
    """Thin-plate inertia and mass center from the planform at uniform
    areal density.  The plate lies in the wing x-y plane, leading edge
    along +y, chord extending toward -x from chord_offset."""
    r, c, dr = planform.stations()
    dA = c * dr
    area = float(np.sum(dA))
    sigma = mass / area
    dm = sigma * dA
    xc = chord_offset - 0.5 * c  # chordwise centroid of each strip
    nu = np.array([float(np.sum(dm * xc)) / mass, float(np.sum(dm * r)) / mass, 0.0])
    # second moments of each strip: uniform in chord, point-like in span
    Ixx = float(np.sum(dm * r**2))
    Iyy = float(np.sum(dm * (xc**2 + c**2 / 12.0)))
    Ixy = float(np.sum(dm * xc * r))
    J = np.array([[Ixx, -Ixy, 0.0],
                  [-Ixy, Iyy, 0.0],
                  [0.0, 0.0, Ixx + Iyy]])
    return nu, J


def from_dict(cfg):
    """Build a validated Morphology from a parsed config mapping."""
    if not isinstance(cfg, dict):
        raise SchemaError("morphology config must be a mapping")
    body_cfg = _require(cfg, "body", "morphology")
    body = BodyParams(
        m_B=float(_require(body_cfg, "mass", "body")),
        J_B=_as_matrix3(_require(body_cfg, "inertia", "body"), "body.inertia"),
    )
    plan_cfg = _require(cfg, "planform", "morphology")
    planform = Planform(
        span=float(_require(plan_cfg, "span", "planform")),
        n_strips=int(plan_cfg.get("n_strips", 40)),
        max_chord=float(_require(plan_cfg, "max_chord", "planform")),
        shape=plan_cfg.get("shape", "elliptic"),
    )
    right = _parse_appendage(_require(cfg, "right_wing", "morphology"), "right_wing")
    if cfg.get("wing_inertia_from_planform", False):
        nu, J = _wing_inertia_from_planform(
            planform, right.m, chord_offset=float(cfg.get("wing_chord_offset", 0.0)))
        right = AppendageParams(m=right.m, mu=right.mu, nu=nu, J=J, name="right_wing")
    if "left_wing" in cfg:
        left = _parse_appendage(cfg["left_wing"], "left_wing")
    else:
        left = right.mirrored(name="left_wing")
    abdomen = _parse_appendage(_require(cfg, "abdomen", "morphology"), "abdomen")
    meta = dict(cfg.get("meta", {}))
    morph = Morphology(
        body=body, right=right, left=left, abdomen=abdomen, planform=planform,
        f_natural=float(meta.get("f_natural_hz", 10.2247)),
        label=str(meta.get("label", "")),
        meta=meta,
    )
    return morph.validate()


def to_dict(morph):
    def app(a):
        return {
            "mass": float(a.m),
            "joint_offset": [float(v) for v in a.mu],
            "mass_center": [float(v) for v in a.nu],
            "inertia": [[float(v) for v in row] for row in a.J],
        }

    return {
        "meta": {**morph.meta,
                 "f_natural_hz": float(morph.f_natural),
                 "label": morph.label},
        "body": {
            "mass": float(morph.body.m_B),
            "inertia": [[float(v) for v in row] for row in morph.body.J_B],
        },
        "right_wing": app(morph.right),
        "left_wing": app(morph.left),
        "abdomen": app(morph.abdomen),
        "planform": {
            "span": float(morph.planform.span),
            "n_strips": int(morph.planform.n_strips),
            "max_chord": float(morph.planform.max_chord),
            "shape": morph.planform.shape,
        },
    }


def load_morphology(path):
    """Load and validate a morphology config file."""
    with open(path, "r") as fh:
        try:
            cfg = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise SchemaError(f"cannot parse morphology config: {exc}") from exc
    return from_dict(cfg)


def save_morphology(morph, path):
    with open(path, "w") as fh:
        yaml.safe_dump(to_dict(morph), fh, sort_keys=False)


def default_morphology():
    """The bundled representative butterfly-scale parameter set."""
    ref = importlib.resources.files("geoflap") / "data" / "default_morphology.yaml"
    return from_dict(yaml.safe_load(ref.read_text()))


def default_morphology_path():
    return str(importlib.resources.files("geoflap") / "data" / "default_morphology.yaml")
