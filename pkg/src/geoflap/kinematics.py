"""Prescribed wing and abdomen motion programs.

Wing attitude relative to the stroke plane uses 1-3-2 Euler angles
(flapping phi, deviation psi, pitch theta); the stroke plane is tilted by
beta about the body y axis.  Right wing:

    Q_R = exp(beta e2^) exp(phi e1^) exp(-psi e3^) exp(theta e2^)

and the left wing flips the signs of phi and psi.  Angular velocity and
acceleration are produced analytically from the chain rule; finite
differences exist only in the tests.

All evaluators accept scalar or 1-D arrays of times; the array path is the
fast path used to pre-tabulate appendage kinematics on an integrator grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

TWO_PI = 2.0 * math.pi

# additive control-offset order shared with the optimization module:
# [d_phi_m_sym, d_theta_0_sym, d_phi_m_anti, d_phi_0_sym, d_theta_0_anti, d_psi_0_anti]
N_DELTA = 6


class WaveformError(ValueError):
    """A waveform parameter violates its feasibility constraint."""


@dataclass
class WingWaveform:
    """Parameters of the three wing Euler-angle signals."""

    f: float                 # flapping frequency, Hz
    beta: float = 0.0        # stroke-plane angle, rad
    phi_m: float = 0.5       # flapping amplitude
    phi_K: float = 0.9       # flapping shape, in (0, 1]
    phi_0: float = 0.0       # flapping offset
    theta_m: float = 0.5     # pitch amplitude
    theta_C: float = 2.0     # pitch shape, > 0
    theta_0: float = 0.0     # pitch offset
    theta_a: float = 0.0     # pitch phase
    psi_m: float = 0.0       # deviation amplitude
    psi_N: int = 2           # deviation frequency multiple (fixed, not optimized)
    psi_0: float = 0.0       # deviation offset
    psi_a: float = 0.0       # deviation phase

    def __post_init__(self):
        if not self.f > 0:
            raise WaveformError("f > 0")
        if not (0.0 < self.phi_K <= 1.0):
            raise WaveformError("0 < phi_K <= 1")
        if not self.theta_C > 0:
            raise WaveformError("theta_C > 0")
        for name in ("theta_a", "psi_a"):
            if not (-math.pi < getattr(self, name) < math.pi):
                raise WaveformError(f"{name} in (-pi, pi)")
        if not abs(self.phi_m) + abs(self.phi_0) < math.pi / 2:
            raise WaveformError("|phi_m| + |phi_0| < pi/2")

    @property
    def period(self):
        return 1.0 / self.f


@dataclass
class AbdomenWaveform:
    """Abdomen pitch program theta_A(t) = theta_Am cos(2 pi f t + theta_Aa) + theta_A0."""

    f: float
    theta_Am: float = 0.0
    theta_Aa: float = 0.0
    theta_A0: float = 0.0
    undulation_enabled: bool = True

    @property
    def amplitude(self):
        return self.theta_Am if self.undulation_enabled else 0.0

    def angle(self, t):
        """theta_A and its first two time derivatives."""
        t = np.asarray(t, dtype=float)
        w = TWO_PI * self.f
        a = self.amplitude
        ph = w * t + self.theta_Aa
        th = a * np.cos(ph) + self.theta_A0
        thd = -a * w * np.sin(ph)
        thdd = -a * w * w * np.cos(ph)
        return th, thd, thdd


def euler_angles(w: WingWaveform, t, delta=None):
    """Wing Euler angles (phi, theta, psi) and their first and second time
    derivatives at times t.

    delta, when given, is a mapping with per-parameter additive offsets and
    offset rates (keys 'phi_m', 'phi_0', 'theta_0', 'psi_0' and the same
    with suffix '_dot'); offsets are piecewise linear in time, so their own
    second derivatives vanish between knots.

    Returns a dict with keys phi, phid, phidd, theta, thetad, thetadd,
    psi, psid, psidd (arrays broadcast to the shape of t).
    """
    t = np.asarray(t, dtype=float)
    d = delta or {}
    zero = np.zeros_like(t)

    wf = TWO_PI * w.f

    # flapping: arcsin-shaped cosine
    phi_m = w.phi_m + d.get("phi_m", 0.0)
    phi_m_dot = d.get("phi_m_dot", 0.0)
    asin_k = math.asin(w.phi_K)
    u = w.phi_K * np.cos(wf * t)
    ud = -w.phi_K * wf * np.sin(wf * t)
    udd = -w.phi_K * wf * wf * np.cos(wf * t)
    den = np.sqrt(np.clip(1.0 - u * u, 1e-300, None))
    shape = np.arcsin(u) / asin_k
    shape_d = ud / den / asin_k
    shape_dd = (udd / den + ud * ud * u / den**3) / asin_k
    phi = phi_m * shape + w.phi_0 + d.get("phi_0", 0.0)
    phid = phi_m * shape_d + phi_m_dot * shape + d.get("phi_0_dot", 0.0)
    phidd = phi_m * shape_dd + 2.0 * phi_m_dot * shape_d

    # pitch: tanh-shaped sine
    amp = w.theta_m / math.tanh(w.theta_C)
    s = np.sin(wf * t + w.theta_a)
    sd = wf * np.cos(wf * t + w.theta_a)
    sdd = -wf * wf * s
    v = w.theta_C * s
    sech2 = 1.0 / np.cosh(v) ** 2
    theta = amp * np.tanh(v) + w.theta_0 + d.get("theta_0", 0.0)
    thetad = amp * w.theta_C * sd * sech2 + d.get("theta_0_dot", 0.0)
    thetadd = amp * w.theta_C * sech2 * (sdd - 2.0 * w.theta_C * sd * sd * np.tanh(v))

    # deviation: plain cosine at multiple psi_N of the flapping frequency
    wn = TWO_PI * w.psi_N * w.f
    ph = wn * t + w.psi_a
    psi = w.psi_m * np.cos(ph) + w.psi_0 + d.get("psi_0", 0.0)
    psid = -w.psi_m * wn * np.sin(ph) + d.get("psi_0_dot", 0.0)
    psidd = -w.psi_m * wn * wn * np.cos(ph)

    return {
        "phi": phi, "phid": phid, "phidd": phidd + zero,
        "theta": theta, "thetad": thetad + zero, "thetadd": thetadd,
        "psi": psi, "psid": psid + zero, "psidd": psidd,
    }


def _rot_basis(axis, ang):
    """Stack of rotations exp(ang * e_axis^) for an array of angles."""
    ang = np.asarray(ang, dtype=float)
    c, s = np.cos(ang), np.sin(ang)
    out = np.zeros(ang.shape + (3, 3))
    i, j, k = axis, (axis + 1) % 3, (axis + 2) % 3
    out[..., i, i] = 1.0
    out[..., j, j] = c
    out[..., k, k] = c
    out[..., j, k] = -s
    out[..., k, j] = s
    return out


def chain_attitude(factors):
    """Attitude, body angular velocity and acceleration of a product of
    basis-axis rotations.

    factors: sequence of (axis, angle, angle_dot, angle_ddot) with angle
    arrays of a common shape.  For Q = A_1 ... A_N with A_k = exp(a_k e^),
    Omega = vee(Q^T Qdot) accumulates as sum_k a_k_dot B_k^T n_k with
    B_k = A_{k+1} ... A_N, and Omegadot follows from B_k_dot = B_k w_k^
    with w_k the angular velocity of the tail subchain.
    """
    n = len(factors)
    As = [_rot_basis(ax, a) for ax, a, _, _ in factors]
    shape = np.broadcast_shapes(*[A.shape[:-2] for A in As])
    eye = np.broadcast_to(np.eye(3), shape + (3, 3))

    B = [None] * n
    B[n - 1] = eye
    for k in range(n - 2, -1, -1):
        B[k] = As[k + 1] @ B[k + 1]
    Q = As[0] @ B[0]

    Om = np.zeros(shape + (3,))
    Omd = np.zeros(shape + (3,))
    w_tail = np.zeros(shape + (3,))  # angular velocity of A_{k+1}..A_N
    for k in range(n - 1, -1, -1):
        ax, _, ad, add = factors[k]
        bcol = B[k][..., ax, :]  # B_k^T e_ax
        ad = np.asarray(ad, dtype=float)[..., None]
        add = np.asarray(add, dtype=float)[..., None]
        Om = Om + ad * bcol
        Omd = Omd + add * bcol - ad * np.cross(w_tail, bcol)
        w_tail = w_tail + ad * bcol
    return Q, Om, Omd


def wing_attitude(w: WingWaveform, side, t, delta=None):
    """Attitude Q_i of one wing relative to the body, with angular velocity
    and acceleration resolved in the wing frame.

    side is 'right' or 'left'; the left wing flips the signs of the
    flapping and deviation angles per the mirrored frame convention.
    """
    if side not in ("right", "left"):
        raise ValueError("side must be 'right' or 'left'")
    e = euler_angles(w, t, delta=delta)
    t = np.asarray(t, dtype=float)
    beta = np.broadcast_to(w.beta, t.shape)
    zero = np.zeros_like(t)
    if side == "right":
        factors = [
            (1, beta, zero, zero),
            (0, e["phi"], e["phid"], e["phidd"]),
            (2, -e["psi"], -e["psid"], -e["psidd"]),
            (1, e["theta"], e["thetad"], e["thetadd"]),
        ]
    else:
        factors = [
            (1, beta, zero, zero),
            (0, -e["phi"], -e["phid"], -e["phidd"]),
            (2, e["psi"], e["psid"], e["psidd"]),
            (1, e["theta"], e["thetad"], e["thetadd"]),
        ]
    return chain_attitude(factors)


def abdomen_attitude(a: AbdomenWaveform, t):
    """Q_A = exp(theta_A e2^) with single-axis angular velocity theta_Ad e2."""
    th, thd, thdd = a.angle(t)
    Q = _rot_basis(1, th)
    shape = np.asarray(th, dtype=float).shape
    Om = np.zeros(shape + (3,))
    Omd = np.zeros(shape + (3,))
    Om[..., 1] = thd
    Omd[..., 1] = thdd
    return Q, Om, Omd


@dataclass
class PrescribedMotion:
    """Wing and abdomen programs plus an optional control-offset schedule.

    delta_schedule, when present, must expose values_at(t) returning the
    6-vector of additive control offsets and their time derivatives (see
    the optimization module).
    """

    right: WingWaveform
    left: WingWaveform
    abdomen: AbdomenWaveform
    delta_schedule: Optional[object] = None

    @property
    def period(self):
        return self.right.period

    def _deltas(self, t):
        if self.delta_schedule is None:
            return None, None
        d, dd = self.delta_schedule.values_at(t)
        right = {
            "phi_m": d[..., 0] + d[..., 2], "phi_m_dot": dd[..., 0] + dd[..., 2],
            "theta_0": d[..., 1] + d[..., 4], "theta_0_dot": dd[..., 1] + dd[..., 4],
            "phi_0": d[..., 3], "phi_0_dot": dd[..., 3],
            "psi_0": d[..., 5], "psi_0_dot": dd[..., 5],
        }
        left = {
            "phi_m": d[..., 0] - d[..., 2], "phi_m_dot": dd[..., 0] - dd[..., 2],
            "theta_0": d[..., 1] - d[..., 4], "theta_0_dot": dd[..., 1] - dd[..., 4],
            "phi_0": d[..., 3], "phi_0_dot": dd[..., 3],
            "psi_0": -d[..., 5], "psi_0_dot": -dd[..., 5],
        }
        return right, left

    def evaluate(self, t):
        """Appendage attitudes, angular velocities and accelerations at t.

        Returns (Q2, xi2, xi2dot): Q2 stacked (..., 3, 3, 3) in (R, L, A)
        order, xi2 and xi2dot with trailing dimension 9.
        """
        dr, dl = self._deltas(t)
        QR, OmR, OmRd = wing_attitude(self.right, "right", t, delta=dr)
        QL, OmL, OmLd = wing_attitude(self.left, "left", t, delta=dl)
        QA, OmA, OmAd = abdomen_attitude(self.abdomen, t)
        Q2 = np.stack([QR, QL, QA], axis=-3)
        xi2 = np.concatenate([OmR, OmL, OmA], axis=-1)
        xi2dot = np.concatenate([OmRd, OmLd, OmAd], axis=-1)
        return Q2, xi2, xi2dot


def symmetric_motion(wave: WingWaveform, abdomen: AbdomenWaveform,
                     delta_schedule=None):
    """Prescribed motion with identical left/right waveforms."""
    return PrescribedMotion(right=wave, left=wave, abdomen=abdomen,
                            delta_schedule=delta_schedule)
