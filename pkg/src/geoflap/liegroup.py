"""Rotation-group primitives and product-group operators.

The vehicle configuration lives on R^3 x SO(3)^4 (position, body attitude,
two wing attitudes, abdomen attitude).  Velocities and generalized forces
are carried as 15-vectors ordered (xdot, Omega, Omega_R, Omega_L, Omega_A).
Everything here is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHONORMALITY_TOL = 1e-9
SMALL_ANGLE = 1e-8

# index slices of the 15-dimensional algebra, in block order
TRANS = slice(0, 3)
BODY = slice(3, 6)
RIGHT = slice(6, 9)
LEFT = slice(9, 12)
ABDOMEN = slice(12, 15)
ROT_SLICES = (BODY, RIGHT, LEFT, ABDOMEN)


def cross3(a, b):
    """Cross product over trailing axes of length 3.

    Same result as np.cross for (..., 3) inputs but without its axis
    bookkeeping, which dominates the runtime of small-vector calls.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    c0 = a1 * b2 - a2 * b1
    out = np.empty(c0.shape + (3,))
    out[..., 0] = c0
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


def hat(u):
    """Map u in R^3 to the skew matrix with hat(u) @ y = u x y."""
    u0, u1, u2 = u
    return np.array([[0.0, -u2, u1],
                     [u2, 0.0, -u0],
                     [-u1, u0, 0.0]])


def vee(A):
    """Inverse of hat.  Rejects inputs that are not skew-symmetric."""
    A = np.asarray(A, dtype=float)
    if np.linalg.norm(A + A.T) >= ORTHONORMALITY_TOL:
        raise ValueError("vee: input is not skew-symmetric")
    return np.array([A[2, 1], A[0, 2], A[1, 0]])


def exp_so3(u):
    """Rotation matrix exp(hat(u)) via the Rodrigues formula.

    Below ||u|| = 1e-8 the sinc-like coefficients switch to their
    second-order Taylor expansions to avoid 0/0.
    """
    u = np.asarray(u, dtype=float)
    th2 = float(u @ u)
    th = np.sqrt(th2)
    if th < SMALL_ANGLE:
        a = 1.0 - th2 / 6.0
        b = 0.5 - th2 / 24.0
    else:
        a = np.sin(th) / th
        b = (1.0 - np.cos(th)) / th2
    U = hat(u)
    return np.eye(3) + a * U + b * (U @ U)


def log_so3(R):
    """Rotation vector of R.  Test/metric utility, not used in hot loops."""
    tr = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    th = np.arccos(tr)
    if th < SMALL_ANGLE:
        return vee((R - R.T) / 2.0)
    if np.pi - th < 1e-6:
        # axis from the symmetric part; sign fixed by the skew part
        B = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.clip(np.diag(B), 0.0, None))
        k = int(np.argmax(axis))
        axis = B[:, k] / B[k, k] * axis[k]
        axis = axis / np.linalg.norm(axis)
        s = vee((R - R.T) / 2.0)
        if s @ axis < 0.0:
            axis = -axis
        return th * axis
    return th / (2.0 * np.sin(th)) * vee(R - R.T)


def rotation_angle(R):
    """Geodesic distance of R from the identity, in [0, pi]."""
    return float(np.arccos(np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)))


def attitude_step(R, w, h):
    """Advance an attitude by the group increment exp(h w).

    Multiplicative update: the result stays on SO(3) up to floating error
    regardless of step size, unlike additive R + h*R*hat(w).
    """
    if h <= 0.0:
        raise ValueError("attitude_step: h must be positive")
    return R @ exp_so3(h * np.asarray(w, dtype=float))


def project_so3(R):
    """Nearest rotation matrix (polar projection via SVD)."""
    U, _, Vt = np.linalg.svd(R)
    D = np.diag([1.0, 1.0, np.linalg.det(U @ Vt)])
    return U @ D @ Vt


def orthonormality_error(R):
    return float(np.linalg.norm(R.T @ R - np.eye(3)))


def check_rotation(R, tol=ORTHONORMALITY_TOL):
    """Raise if R is not a rotation matrix within tol."""
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError("rotation must be a 3x3 matrix")
    if orthonormality_error(R) > tol:
        raise ValueError("rotation fails R^T R = I within tolerance")
    if abs(np.linalg.det(R) - 1.0) > tol:
        raise ValueError("rotation fails det(R) = 1 within tolerance")
    return R


@dataclass
class GroupElement:
    """Configuration (x, R, Q_R, Q_L, Q_A) on R^3 x SO(3)^4.

    x is the body position in the inertial NED frame; R the body attitude;
    Q_i the wing/abdomen attitudes relative to the body.
    """

    x: np.ndarray
    R: np.ndarray
    Q_R: np.ndarray
    Q_L: np.ndarray
    Q_A: np.ndarray

    def validate(self, tol=ORTHONORMALITY_TOL):
        for Q in (self.R, self.Q_R, self.Q_L, self.Q_A):
            check_rotation(Q, tol)
        return self

    def rotations(self):
        return (self.Q_R, self.Q_L, self.Q_A)

    @classmethod
    def identity(cls):
        I = np.eye(3)
        return cls(np.zeros(3), I.copy(), I.copy(), I.copy(), I.copy())


@dataclass
class AlgebraElement:
    """Left-trivialized velocity (xdot, Omega, Omega_R, Omega_L, Omega_A).

    The same 15-slot layout is reused for covectors (generalized forces):
    the algebra and its dual are identified through the Euclidean pairing.
    """

    v: np.ndarray
    w: np.ndarray
    w_R: np.ndarray
    w_L: np.ndarray
    w_A: np.ndarray

    def as_vector(self):
        return np.concatenate([self.v, self.w, self.w_R, self.w_L, self.w_A])

    @classmethod
    def from_vector(cls, xi):
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (15,):
            raise ValueError("algebra element must have 15 components")
        if not np.all(np.isfinite(xi)):
            raise ValueError("algebra element has non-finite entries")
        return cls(xi[TRANS].copy(), xi[BODY].copy(), xi[RIGHT].copy(),
                   xi[LEFT].copy(), xi[ABDOMEN].copy())

    @classmethod
    def zero(cls):
        return cls.from_vector(np.zeros(15))


def ad_star(xi):
    """Co-adjoint operator on the product algebra as a 15x15 matrix.

    Block diagonal: zero on the translational slot, -hat(w) on each
    rotational slot.
    """
    if isinstance(xi, AlgebraElement):
        xi = xi.as_vector()
    xi = np.asarray(xi, dtype=float)
    out = np.zeros((15, 15))
    for s in ROT_SLICES:
        out[s, s] = -hat(xi[s])
    return out


def ad_star6(xi1):
    """6x6 co-adjoint block for the free part (xdot, Omega)."""
    out = np.zeros((6, 6))
    out[3:6, 3:6] = -hat(xi1[3:6])
    return out


def ad_star9(xi2):
    """9x9 co-adjoint block for the prescribed part (Omega_R, Omega_L, Omega_A)."""
    out = np.zeros((9, 9))
    for k in range(3):
        out[3 * k:3 * k + 3, 3 * k:3 * k + 3] = -hat(xi2[3 * k:3 * k + 3])
    return out
