"""Configuration-dependent inertia, its derivative, and generalized forces.

The 15x15 inertia tensor J_g, its left-trivialized directional derivative
K_g, and the gravity / aerodynamic / joint-torque wrenches are assembled
from closed-form 3x3 blocks.  The finite-difference characterization of
K_g (dJ along group directions) lives in the tests and is the arbiter for
any transcription doubt here.

Block order everywhere: (xdot, Omega, Omega_R, Omega_L, Omega_A).
Mixed SI units are kept as-is (kg, kg m, kg m^2); conditioning at insect
scale is acceptable and no nondimensionalization is applied.
"""

from __future__ import annotations

import numpy as np

from .liegroup import GroupElement, cross3, hat
from .morphology import AppendageParams, Morphology

GRAVITY_DEFAULT = 9.81  # m/s^2, overridable in config

E3 = np.array([0.0, 0.0, 1.0])

_APP_SLICES = (slice(6, 9), slice(9, 12), slice(12, 15))


def _bhat(v):
    """hat() over a stack of 3-vectors: (..., 3) -> (..., 3, 3)."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


class DynamicsModel:
    """Precomputed morphology stacks for fast tensor assembly.

    Appendages are stacked along a leading axis in (right, left, abdomen)
    order so that all three sets of blocks come out of a handful of batched
    matmuls per evaluation.
    """

    def __init__(self, morph: Morphology, grav: float = GRAVITY_DEFAULT):
        self.morph = morph
        self.grav = float(grav)
        apps = morph.appendages()
        self.m = np.array([a.m for a in apps])
        self.mu = np.stack([a.mu for a in apps])
        self.nu = np.stack([a.nu for a in apps])
        self.Jm = np.stack([a.J for a in apps])
        self.hmu = _bhat(self.mu)
        self.m_B = morph.body.m_B
        self.J_B = morph.body.J_B
        self.m_total = morph.total_mass
        self.hnu = _bhat(self.nu)

    def tensors(self, R, Qs, xdot, Om, Om2):
        """J_g (15x15), K_g (15x15) and f_g (15,) at one configuration.

        Qs is the (3, 3, 3) stack of appendage attitudes, Om2 the (3, 3)
        stack of appendage angular velocities.
        """
        m = self.m[:, None, None]
        mv = self.m[:, None]
        QsT = np.swapaxes(Qs, -1, -2)

        Qnu = (Qs @ self.nu[:, :, None])[..., 0]
        hQnu = _bhat(Qnu)
        hmuQnu = self.hmu + hQnu
        RQ = R @ Qs
        QJm = Qs @ self.Jm
        Qhnu = Qs @ self.hnu

        J12 = -m * (R @ hmuQnu)
        J13 = -m * (RQ @ self.hnu)
        # hmu^T = -hmu, hQnu^T = -hQnu
        J22 = (m * (-self.hmu @ self.hmu)
               + QJm @ QsT
               + m * (-self.hmu @ hQnu - hQnu @ self.hmu))
        J23 = QJm + m * (-self.hmu @ Qhnu)

        J = np.zeros((15, 15))
        J[0:3, 0:3] = self.m_total * np.eye(3)
        J[0:3, 3:6] = J12.sum(axis=0)
        J[3:6, 3:6] = self.J_B + J22.sum(axis=0)
        for k, s in enumerate(_APP_SLICES):
            J[0:3, s] = J13[k]
            J[3:6, s] = J23[k]
            J[s, s] = self.Jm[k]
            J[s, 0:3] = J13[k].T
            J[s, 3:6] = J23[k].T
        J[3:6, 0:3] = J[0:3, 3:6].T

        # K blocks; state-dependent intermediates
        a = R.T @ xdot
        ha = hat(a)
        hOm = hat(Om)
        QtOm = (QsT @ Om[None, :, None])[..., 0]
        hQtOm = _bhat(QtOm)
        nuxOmi = cross3(self.nu, Om2)
        hnuxOmi = _bhat(nuxOmi)
        muxOm = cross3(self.mu, Om[None, :])
        Qta = (QsT @ a[None, :, None])[..., 0]
        JmOmi = (self.Jm @ Om2[:, :, None])[..., 0]
        JmQtOm = (self.Jm @ QtOm[:, :, None])[..., 0]

        K12 = m * (R @ _bhat((hmuQnu @ Om[None, :, None])[..., 0]
                             + (Qs @ nuxOmi[:, :, None])[..., 0]))
        K13 = m * (-(R @ hOm) @ Qhnu + RQ @ hnuxOmi)
        K22 = m * (hmuQnu @ ha)
        K23 = (m * (ha[None] @ Qhnu)
               - Qs @ _bhat(JmQtOm)
               + QJm @ hQtOm
               - m * ((self.hmu @ hOm) @ Qhnu)
               - m * (_bhat(muxOm) @ Qhnu)
               - Qs @ _bhat(JmOmi)
               + m * (self.hmu @ (Qs @ hnuxOmi)))
        K32 = m * (self.hnu @ (QsT @ ha))
        K33 = (m * (self.hnu @ _bhat(Qta))
               + self.Jm @ hQtOm
               - m * (self.hnu @ _bhat((QsT @ (self.hmu @ Om[None, :, None]))[..., 0])))

        K = np.zeros((15, 15))
        K[0:3, 3:6] = K12.sum(axis=0)
        K[3:6, 3:6] = K22.sum(axis=0)
        for k, s in enumerate(_APP_SLICES):
            K[0:3, s] = K13[k]
            K[3:6, s] = K23[k]
            K[s, 3:6] = K32[k]
            K[s, s] = K33[k]

        # gravity wrench
        Rte3 = R[2, :]
        fg = np.zeros(15)
        fg[0:3] = self.m_total * self.grav * E3
        fg[3:6] = self.grav * (mv * cross3(self.mu + Qnu, Rte3[None, :])).sum(axis=0)
        QtRte3 = (QsT @ Rte3[None, :, None])[..., 0]
        fgi = self.grav * mv * cross3(self.nu, QtRte3)
        for k, s in enumerate(_APP_SLICES):
            fg[s] = fgi[k]
        return J, K, fg

    def potential_energy(self, x, R, Qs):
        """Total gravitational potential (NED: z down, U = -m g e3.x ...)."""
        Qnu = (Qs @ self.nu[:, :, None])[..., 0]
        pos = x[None, :] + (R @ (self.mu + Qnu)[:, :, None])[..., 0]
        U = -self.m_B * self.grav * (E3 @ x)
        U -= float(self.grav * (self.m * (pos @ E3)).sum())
        return float(U)


def _qs(g: GroupElement):
    return np.stack([g.Q_R, g.Q_L, g.Q_A])


def _xi_parts(xi):
    xi = np.asarray(xi, dtype=float)
    return xi[0:3], xi[3:6], xi[6:15].reshape(3, 3)


def appendage_inertia(app: AppendageParams, R, Q):
    """9x9 configuration-dependent inertia of one appendage, blocked over
    (xdot, Omega, Omega_i)."""
    m, mu, nu, Jm = app.m, app.mu, app.nu, app.J
    hmu, hnu = hat(mu), hat(nu)
    Qnu = Q @ nu
    hQnu = hat(Qnu)
    M = np.zeros((9, 9))
    M[0:3, 0:3] = m * np.eye(3)
    M[0:3, 3:6] = -m * R @ (hmu + hQnu)
    M[0:3, 6:9] = -m * R @ Q @ hnu
    M[3:6, 3:6] = (m * hmu.T @ hmu + Q @ Jm @ Q.T
                   + m * (hmu.T @ hQnu + hQnu.T @ hmu))
    M[3:6, 6:9] = Q @ Jm + m * hmu.T @ Q @ hnu
    M[6:9, 6:9] = Jm
    M[3:6, 0:3] = M[0:3, 3:6].T
    M[6:9, 0:3] = M[0:3, 6:9].T
    M[6:9, 3:6] = M[3:6, 6:9].T
    return M


def assemble_Jg(morph: Morphology, g: GroupElement):
    """Full 15x15 inertia tensor at configuration g."""
    model = DynamicsModel(morph)
    J, _, _ = model.tensors(g.R, _qs(g), np.zeros(3), np.zeros(3), np.zeros((3, 3)))
    return J


def assemble_Kg(morph: Morphology, g: GroupElement, xi):
    """Left-trivialized derivative K_g(xi) as a 15x15 matrix (linear in xi).

    Satisfies K_g(xi) chi = d/de|0 J_{g exp(e chi)}(xi); the first block
    column is zero because kinetic energy is translation invariant.
    """
    model = DynamicsModel(morph)
    xdot, Om, Om2 = _xi_parts(xi)
    _, K, _ = model.tensors(g.R, _qs(g), xdot, Om, Om2)
    return K


def Lg_from_Kg(K):
    """Inertial-coupling matrix L_g = K_g - K_g^T / 2."""
    return K - 0.5 * K.T


def gravity_wrench(morph: Morphology, g: GroupElement, grav: float = GRAVITY_DEFAULT):
    """Generalized gravity force, the negative differential of U."""
    model = DynamicsModel(morph, grav=grav)
    _, _, fg = model.tensors(g.R, _qs(g), np.zeros(3), np.zeros(3), np.zeros((3, 3)))
    return fg


def potential_energy(morph: Morphology, g: GroupElement, grav: float = GRAVITY_DEFAULT):
    model = DynamicsModel(morph, grav=grav)
    return model.potential_energy(g.x, g.R, _qs(g))


def aero_wrench(morph: Morphology, g: GroupElement, F_R, F_L, F_A, M_R, M_L, M_A):
    """Generalized force of appendage-frame aerodynamic loads (F_i, M_i)."""
    f = np.zeros(15)
    forces = (np.asarray(F_R, float), np.asarray(F_L, float), np.asarray(F_A, float))
    moments = (M_R, M_L, M_A)
    mus = (morph.right.mu, morph.left.mu, morph.abdomen.mu)
    Qs = g.rotations()
    for k, s in enumerate(_APP_SLICES):
        QF = Qs[k] @ forces[k]
        f[0:3] += g.R @ QF
        f[3:6] += cross3(mus[k], QF)
        f[s] = moments[k]
    return f


def torque_wrench(g: GroupElement, tau_R, tau_L, tau_A):
    """Generalized force of body-frame joint torques, with reaction -tau_i
    on the body."""
    f = np.zeros(15)
    taus = (np.asarray(tau_R, float), np.asarray(tau_L, float), np.asarray(tau_A, float))
    Qs = g.rotations()
    for k, s in enumerate(_APP_SLICES):
        f[3:6] -= taus[k]
        f[s] = Qs[k].T @ taus[k]
    return f


def coupling_matrix(Qs):
    """C in f_tau1 = C f_tau2: maps appendage torque slots onto the free part."""
    C = np.zeros((6, 9))
    for k in range(3):
        C[3:6, 3 * k:3 * k + 3] = -Qs[k]
    return C
