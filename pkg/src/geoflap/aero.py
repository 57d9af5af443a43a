"""Quasi-steady blade-element aerodynamics for the two wings.

Each wing is sliced into spanwise strips; a strip sees the local velocity
of its station point, from which the angle of attack between the velocity
projection and the chord line gives lift/drag through empirical
coefficient curves.  The body and abdomen generate no aerodynamic force.

Default coefficient curves are the translational quasi-steady fits from
revolving-wing fruit-fly experiments (angle of attack in degrees inside
the fits):

    C_L(a) = 0.225 + 1.58 sin(2.13 a - 7.20 deg)
    C_D(a) = 1.92 - 1.55 cos(2.04 a - 9.82 deg)

They are defaults, not measured properties of this vehicle, and can be
replaced by a tabulated curve.  Induced-flow and wake effects are omitted;
a rotational (pitch-rate) force term exists behind a switch, off by
default.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynamics import aero_wrench
from .liegroup import GroupElement, cross3
from .morphology import Morphology

RHO_DEFAULT = 1.225  # kg/m^3

_WING_INDEX = {"right": 0, "left": 1}


def lift_coeff_default(alpha):
    """Default C_L(alpha), alpha in radians in [0, pi/2]."""
    a = np.degrees(np.asarray(alpha, dtype=float))
    return 0.225 + 1.58 * np.sin(np.radians(2.13 * a - 7.20))


def drag_coeff_default(alpha):
    """Default C_D(alpha), alpha in radians in [0, pi/2]."""
    a = np.degrees(np.asarray(alpha, dtype=float))
    return 1.92 - 1.55 * np.cos(np.radians(2.04 * a - 9.82))


def tabulated_coeff(table):
    """Linear interpolant over a (n, 2) angle/coefficient table (radians)."""
    table = np.asarray(table, dtype=float)
    if table.ndim != 2 or table.shape[1] != 2:
        raise ValueError("coefficient table must have two columns (angle, value)")
    ang, val = table[:, 0], table[:, 1]
    order = np.argsort(ang)
    ang, val = ang[order], val[order]
    return lambda a: np.interp(a, ang, val)


def load_coeff_table(path):
    """Read a two-column whitespace/comma text table of (angle rad, coeff)."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip().replace(",", " ")
            if line:
                parts = line.split()
                rows.append((float(parts[0]), float(parts[1])))
    return tabulated_coeff(np.array(rows))


@dataclass
class AeroModel:
    """Air properties, coefficient curves and discretization switches."""

    rho: float = RHO_DEFAULT
    C_L: Callable = field(default=lift_coeff_default)
    C_D: Callable = field(default=drag_coeff_default)
    rotational_force: bool = False
    C_rot: float = 1.55
    n_strips: Optional[int] = None  # None: use the planform's strip count

    def with_strips(self, n):
        return AeroModel(rho=self.rho, C_L=self.C_L, C_D=self.C_D,
                         rotational_force=self.rotational_force,
                         C_rot=self.C_rot, n_strips=n)


class AeroEvaluator:
    """Strip grid and wing-load evaluation bound to one morphology."""

    def __init__(self, model: AeroModel, morph: Morphology):
        self.model = model
        self.morph = morph
        plan = morph.planform
        if model.n_strips is not None and model.n_strips != plan.n_strips:
            from dataclasses import replace
            plan = replace(plan, n_strips=model.n_strips)
        r, c, dr = plan.stations()
        self.r, self.c, self.dr = r, c, dr
        # station points in the wing frame; left wing spans -y
        self.nu_strips = (
            np.column_stack([np.zeros_like(r), r, np.zeros_like(r)]),
            np.column_stack([np.zeros_like(r), -r, np.zeros_like(r)]),
        )
        self.mus = (morph.right.mu, morph.left.mu)

    def wing_loads(self, wing, R, Q, xdot, Om, Om_w):
        """Net force and root moment of one wing, in the wing frame.

        wing: 0 right, 1 left.  The strip velocity is the wing-frame
        expression of xdot + R Om^ (mu + Q nu) + R Q Om_w^ nu.
        """
        nu = self.nu_strips[wing]
        mu = self.mus[wing]
        base = Q.T @ (R.T @ xdot + cross3(Om, mu))
        v = (base[None, :]
             + (cross3(Om, (Q @ nu.T).T) @ Q)  # Q^T (Om x Q nu) per strip
             + cross3(Om_w, nu))
        vx, vz = v[:, 0], v[:, 2]
        speed2 = vx * vx + vz * vz
        speed = np.sqrt(speed2)
        ok = speed > 1e-12
        inv = np.where(ok, 1.0 / np.where(ok, speed, 1.0), 0.0)

        alpha = np.arctan2(np.abs(vz), np.abs(vx))
        cl = self.model.C_L(alpha)
        cd = self.model.C_D(alpha)

        dx, dz = -vx * inv, -vz * inv          # drag direction (unit, in-plane)
        lx, lz = -dz, dx                        # candidate lift direction
        flip = np.where(lz * vz > 0.0, -1.0, 1.0)
        lx, lz = flip * lx, flip * lz

        q = 0.5 * self.model.rho * speed2 * self.c * self.dr
        fx = q * (cl * lx + cd * dx)
        fz = q * (cl * lz + cd * dz)

        if self.model.rotational_force:
            # pitch-rate force normal to the chord plane, opposing none of
            # the translational terms; sign couples rate and onflow
            omega_pitch = Om_w[1]
            frot = self.model.C_rot * self.model.rho * self.c**2 * self.dr \
                * omega_pitch * speed
            fz = fz - frot * np.sign(vx, where=ok, out=np.zeros_like(vx))

        dF = np.column_stack([fx, np.zeros_like(fx), fz])
        F = dF.sum(axis=0)
        M = cross3(nu, dF).sum(axis=0)
        return F, M

    def wrench(self, R, Qs, xdot, Om, Om2):
        """15-slot aero wrench plus the per-wing wing-frame forces.

        The abdomen slots are identically zero: only the wings generate
        aerodynamic force.
        """
        F_R, M_R = self.wing_loads(0, R, Qs[0], xdot, Om, Om2[0])
        F_L, M_L = self.wing_loads(1, R, Qs[1], xdot, Om, Om2[1])
        f = np.zeros(15)
        QFR = Qs[0] @ F_R
        QFL = Qs[1] @ F_L
        f[0:3] = R @ (QFR + QFL)
        f[3:6] = cross3(self.mus[0], QFR) + cross3(self.mus[1], QFL)
        f[6:9] = M_R
        f[9:12] = M_L
        return f, F_R, F_L


def wing_aero(model: AeroModel, morph: Morphology, g: GroupElement, xi, side):
    """Net aerodynamic force and root moment of one wing (wing frame)."""
    k = _WING_INDEX[side]
    ev = AeroEvaluator(model, morph)
    xi = np.asarray(xi, dtype=float)
    Q = g.Q_R if k == 0 else g.Q_L
    Om_w = xi[6:9] if k == 0 else xi[9:12]
    return ev.wing_loads(k, g.R, Q, xi[0:3], xi[3:6], Om_w)


def total_aero_wrench(model: AeroModel, morph: Morphology, g: GroupElement, xi):
    """Aero wrench of both wings; abdomen force and moment are zero."""
    F_R, M_R = wing_aero(model, morph, g, xi, "right")
    F_L, M_L = wing_aero(model, morph, g, xi, "left")
    zero = np.zeros(3)
    return aero_wrench(morph, g, F_R, F_L, zero, M_R, M_L, zero)
