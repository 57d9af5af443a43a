"""Time integration of the vehicle dynamics.

Two systems are integrated:

  * reduced: the free part (x, R, xdot, Omega) with wing/abdomen motion
    prescribed, after eliminating the unknown joint torques through the
    coupling matrix C;
  * full: all fifteen velocity components, either conservative (gravity
    only; used by the energy-conservation oracle) or driven by torques
    reconstructed online so the appendages track the prescribed motion
    (used by the elimination and round-trip oracles).

The integrator is a fixed-step 4-stage Runge-Kutta of Munthe-Kaas type:
attitudes are advanced by group multiplication with exp_so3 of an
incremental rotation vector, never by componentwise addition, so
orthonormality is preserved to floating error.  Fixed stepping keeps
objective evaluations deterministic: identical inputs give bit-identical
sample streams on one platform.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .aero import AeroEvaluator, AeroModel
from .dynamics import GRAVITY_DEFAULT, DynamicsModel
from .kinematics import PrescribedMotion
from .liegroup import cross3, exp_so3, orthonormality_error

BINARY_MAGIC = b"GFW1"

_APP = (slice(6, 9), slice(9, 12), slice(12, 15))


class SimulationError(RuntimeError):
    """Integration aborted; carries the last good time and state."""

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


@dataclass
class ReducedState:
    """Free part of the configuration: body pose and velocity."""

    x: np.ndarray
    R: np.ndarray
    v: np.ndarray
    Om: np.ndarray

    def copy(self):
        return ReducedState(self.x.copy(), self.R.copy(), self.v.copy(), self.Om.copy())


@dataclass
class FullState:
    """Complete configuration and 15-dimensional velocity."""

    x: np.ndarray
    R: np.ndarray
    Qs: np.ndarray      # (3, 3, 3) appendage attitudes, (R, L, A)
    xi: np.ndarray      # (15,)

    def copy(self):
        return FullState(self.x.copy(), self.R.copy(), self.Qs.copy(), self.xi.copy())


# CSV column layout: stable, documented, one TrajectorySample per row.
CSV_COLUMNS = (
    ["t"]
    + [f"x{i}" for i in "123"]
    + [f"v{i}" for i in "123"]
    + [f"R{i}{j}" for i in "123" for j in "123"]
    + [f"Om{i}" for i in "123"]
    + [f"QR{i}{j}" for i in "123" for j in "123"]
    + [f"QL{i}{j}" for i in "123" for j in "123"]
    + [f"QA{i}{j}" for i in "123" for j in "123"]
    + [f"OmR{i}" for i in "123"]
    + [f"OmL{i}" for i in "123"]
    + [f"OmA{i}" for i in "123"]
    + ["E", "Edot"]
    + [f"tauR{i}" for i in "123"]
    + [f"tauL{i}" for i in "123"]
    + [f"tauA{i}" for i in "123"]
    + ["PR", "PL", "PA"]
    + [f"FRw{i}" for i in "123"]
    + [f"FLw{i}" for i in "123"]
    + [f"MRw{i}" for i in "123"]
    + [f"MLw{i}" for i in "123"]
    + [f"Fnet{i}" for i in "123"]
)


@dataclass
class Trajectory:
    """Sample stream of a run, columns as in CSV_COLUMNS."""

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    R: np.ndarray
    Om: np.ndarray
    Q2: np.ndarray       # (N, 3, 3, 3)
    xi2: np.ndarray      # (N, 9)
    E: np.ndarray
    Edot: np.ndarray
    tau: np.ndarray      # (N, 3, 3): tau_R, tau_L, tau_A rows
    P: np.ndarray        # (N, 3): P_R, P_L, P_A
    F_R: np.ndarray      # (N, 3) wing-frame
    F_L: np.ndarray
    M_R: np.ndarray      # (N, 3) wing-frame root aero moments
    M_L: np.ndarray
    F_net: np.ndarray    # (N, 3) inertial net aero force

    def __len__(self):
        return len(self.t)

    def xi(self):
        """(N, 15) velocity including the prescribed slots."""
        return np.concatenate([self.v, self.Om, self.xi2], axis=1)

    def as_matrix(self):
        n = len(self.t)
        return np.column_stack([
            self.t, self.x, self.v, self.R.reshape(n, 9), self.Om,
            self.Q2[:, 0].reshape(n, 9), self.Q2[:, 1].reshape(n, 9),
            self.Q2[:, 2].reshape(n, 9),
            self.xi2,
            self.E, self.Edot,
            self.tau.reshape(n, 9), self.P,
            self.F_R, self.F_L, self.M_R, self.M_L, self.F_net,
        ])

    def write_csv(self, path):
        M = self.as_matrix()
        with open(path, "w") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for row in M:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    def write_binary(self, path):
        """Compact dump: magic 'GFW1', row/col counts, little-endian f64."""
        M = np.ascontiguousarray(self.as_matrix(), dtype="<f8")
        with open(path, "wb") as fh:
            fh.write(BINARY_MAGIC)
            fh.write(struct.pack("<QQ", M.shape[0], M.shape[1]))
            fh.write(M.tobytes())

    @staticmethod
    def read_binary(path):
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != BINARY_MAGIC:
                raise ValueError("not a geoflap binary trajectory")
            nrow, ncol = struct.unpack("<QQ", fh.read(16))
            data = np.frombuffer(fh.read(), dtype="<f8").reshape(nrow, ncol)
        return data


def energy_power(m_total, grav, x, v, vdot, taus, Qs, Om2):
    """Body energy E, its analytic rate, and per-appendage torque powers.

    E = 1/2 m ||v||^2 - m g e3.x (NED, z down); P_i = tau_i . (Q_i Om_i).
    """
    E = 0.5 * m_total * float(v @ v) - m_total * grav * x[2]
    Edot = m_total * float(v @ vdot) - m_total * grav * v[2]
    P = np.array([float(taus[k] @ (Qs[k] @ Om2[k])) for k in range(3)])
    return E, Edot, P


class Simulator:
    """Dynamics evaluation and integration bound to one model setup."""

    def __init__(self, morph, motion: PrescribedMotion,
                 aero_model: Optional[AeroModel] = None,
                 grav: float = GRAVITY_DEFAULT, aero_on: bool = True):
        self.morph = morph
        self.motion = motion
        self.grav = grav
        self.model = DynamicsModel(morph, grav=grav)
        self.aero_on = aero_on and aero_model is not None
        self.aero = AeroEvaluator(aero_model or AeroModel(), morph)
        self._reorth_events = 0

    # -- pointwise evaluations ------------------------------------------------

    def _tensors_forces(self, R, Qs, v, Om, xi2, with_aero=None):
        Om2 = xi2.reshape(3, 3)
        J, K, fg = self.model.tensors(R, Qs, v, Om, Om2)
        L = K - 0.5 * K.T
        if with_aero is None:
            with_aero = self.aero_on
        if with_aero:
            fa, F_Rw, F_Lw = self.aero.wrench(R, Qs, v, Om, Om2)
        else:
            fa = np.zeros(15)
            F_Rw = F_Lw = np.zeros(3)
        return J, L, fg, fa, F_Rw, F_Lw

    @staticmethod
    def _ad_star_apply(xi, p):
        """ad*_xi applied to a covector p (block diagonal, -w x on rotations)."""
        out = np.zeros(15)
        out[3:6] = -cross3(xi[3:6], p[3:6])
        for s in _APP:
            out[s] = -cross3(xi[s], p[s])
        return out

    def _reduced_pieces(self, R, Qs, v, Om, xi2, xi2dot, with_aero=None):
        """xi1dot plus everything needed for torque reconstruction."""
        J, L, fg, fa, F_Rw, F_Lw = self._tensors_forces(R, Qs, v, Om, xi2,
                                                        with_aero=with_aero)
        xi = np.concatenate([v, Om, xi2])
        adJ = self._ad_star_apply(xi, J @ xi)
        f = fa + fg
        rhs15 = adJ - L @ xi + f
        # project through (row1 - C row2) to eliminate the joint torques
        C = np.zeros((6, 9))
        for k in range(3):
            C[3:6, 3 * k:3 * k + 3] = -Qs[k]
        A = J[:, 0:6]
        B = J[:, 6:15]
        Ared = A[0:6] - C @ A[6:15]
        rhs = (rhs15[0:6] - C @ rhs15[6:15]) - (B[0:6] - C @ B[6:15]) @ xi2dot
        try:
            xi1dot = np.linalg.solve(Ared, rhs)
        except np.linalg.LinAlgError as exc:
            cond = np.linalg.cond(Ared)
            raise SimulationError(
                f"singular reduced mass matrix (cond ~ {cond:.3e})") from exc
        return xi1dot, (J, L, fg, fa, F_Rw, F_Lw, xi, adJ, C)

    def reduced_accel(self, t, state: ReducedState):
        """xi1dot = (vdot, Omdot) of the reduced dynamics at time t."""
        Q2, xi2, xi2dot = self.motion.evaluate(t)
        xi1dot, _ = self._reduced_pieces(state.R, Q2, state.v, state.Om,
                                         xi2, xi2dot)
        return xi1dot

    def reconstruct_torques(self, t, state: ReducedState, xi1dot=None):
        """Joint torques (body frame) realizing the prescribed motion.

        Solves the prescribed block of the equations of motion for f_tau2
        and maps back through tau_i = Q_i f_tau2_i.
        """
        Q2, xi2, xi2dot = self.motion.evaluate(t)
        got = self._reduced_pieces(state.R, Q2, state.v, state.Om, xi2, xi2dot)
        if xi1dot is None:
            xi1dot = got[0]
        J, L, fg, fa, _, _, xi, adJ, _ = got[1]
        xidot = np.concatenate([xi1dot, xi2dot])
        ftau2 = (J @ xidot - adJ + L @ xi - fa - fg)[6:15]
        taus = np.stack([Q2[k] @ ftau2[3 * k:3 * k + 3] for k in range(3)])
        return taus[0], taus[1], taus[2]

    def full_accel(self, t, state: FullState, forcing="tracked"):
        """xidot of the full 15-dimensional dynamics.

        forcing 'conservative': gravity only (free appendages);
        forcing 'tracked': aero plus joint torques reconstructed so the
        appendage accelerations follow the prescribed motion.
        """
        xi = state.xi
        v, Om, xi2 = xi[0:3], xi[3:6], xi[6:15]
        if forcing == "conservative":
            J, L, fg, fa, _, _ = self._tensors_forces(state.R, state.Qs, v, Om,
                                                      xi2, with_aero=False)
            adJ = self._ad_star_apply(xi, J @ xi)
            return np.linalg.solve(J, adJ - L @ xi + fg)
        if forcing != "tracked":
            raise ValueError("forcing must be 'conservative' or 'tracked'")
        _, _, xi2dot_star = self.motion.evaluate(t)
        xi1dot, pieces = self._reduced_pieces(state.R, state.Qs, v, Om,
                                              xi2, xi2dot_star)
        J, L, fg, fa, _, _, _, adJ, C = pieces
        xidot_target = np.concatenate([xi1dot, xi2dot_star])
        ftau2 = (J @ xidot_target - adJ + L @ xi - fa - fg)[6:15]
        ftau = np.concatenate([C @ ftau2, ftau2])
        return np.linalg.solve(J, adJ - L @ xi + fa + fg + ftau)

    def total_energy_full(self, state: FullState):
        """Kinetic plus potential energy of the complete multibody system."""
        xi = state.xi
        J, _, _ = self.model.tensors(state.R, state.Qs, xi[0:3], xi[3:6],
                                     xi[6:15].reshape(3, 3))
        U = self.model.potential_energy(state.x, state.R, state.Qs)
        return 0.5 * float(xi @ (J @ xi)) + U

    def initial_full_state(self, ic: ReducedState, t0=0.0):
        """Full state with appendages placed on the prescribed motion at t0."""
        Q2, xi2, _ = self.motion.evaluate(t0)
        xi = np.concatenate([ic.v, ic.Om, xi2])
        return FullState(ic.x.copy(), ic.R.copy(), np.array(Q2), xi)

    # -- integration ----------------------------------------------------------

    @staticmethod
    def _dexpinv(sigma, w):
        """sigma_dot for R = R0 exp(sigma^) with body angular velocity w:
        sigma_dot = w + sigma x w / 2 + sigma x (sigma x w) / 12 + O(|sigma|^4),
        truncation below RK4's order."""
        c1 = cross3(sigma, w)
        return w + 0.5 * c1 + cross3(sigma, c1) / 12.0

    def _precompute_motion(self, t0, n_steps, h):
        times = t0 + 0.5 * h * np.arange(2 * n_steps + 1)
        Q2, xi2, xi2dot = self.motion.evaluate(times)
        return Q2, xi2, xi2dot

    def simulate(self, ic: ReducedState, t0, t1, h,
                 samples_per_period=200, record=True):
        """Integrate the reduced dynamics over [t0, t1].

        Samples land on step boundaries at roughly samples_per_period per
        flapping period; the first and last states are always recorded.
        """
        if h <= 0:
            raise ValueError("h must be positive")
        n_steps = int(round((t1 - t0) / h))
        if abs(t0 + n_steps * h - t1) > 1e-9 * max(1.0, abs(t1)):
            raise ValueError("(t1 - t0) must be an integer number of steps")
        T = self.motion.period
        stride = max(1, int(round(T / (h * samples_per_period))))

        Q2g, xi2g, xi2dg = self._precompute_motion(t0, n_steps, h)

        x, R = ic.x.copy(), ic.R.copy()
        v, Om = ic.v.copy(), ic.Om.copy()

        rec = _Recorder(self) if record else None

        def rhs(idx, x_, R_, v_, Om_, sig, want_extras=False):
            Rloc = R_ @ exp_so3(sig) if sig is not None else R_
            xi1dot, pieces = self._reduced_pieces(Rloc, Q2g[idx], v_, Om_,
                                                  xi2g[idx], xi2dg[idx])
            if want_extras:
                return xi1dot, pieces
            return xi1dot

        t = t0
        for n in range(n_steps):
            i0, i1, i2 = 2 * n, 2 * n + 1, 2 * n + 2
            if rec is not None and n % stride == 0:
                xi1dot, pieces = rhs(i0, x, R, v, Om, None, want_extras=True)
                rec.record(t, x, R, v, Om, Q2g[i0], xi2g[i0], xi2dg[i0],
                           xi1dot, pieces)
            else:
                xi1dot = rhs(i0, x, R, v, Om, None)

            # Munthe-Kaas RK4 stages; sigma is the attitude increment
            k1x, k1v, k1w = v, xi1dot[0:3], xi1dot[3:6]
            k1s = Om  # dexpinv(0, Om)

            s2 = 0.5 * h * k1s
            v2, Om2_ = v + 0.5 * h * k1v, Om + 0.5 * h * k1w
            a2 = rhs(i1, x, R, v2, Om2_, s2)
            k2x, k2v, k2w = v2, a2[0:3], a2[3:6]
            k2s = self._dexpinv(s2, Om2_)

            s3 = 0.5 * h * k2s
            v3, Om3_ = v + 0.5 * h * k2v, Om + 0.5 * h * k2w
            a3 = rhs(i1, x, R, v3, Om3_, s3)
            k3x, k3v, k3w = v3, a3[0:3], a3[3:6]
            k3s = self._dexpinv(s3, Om3_)

            s4 = h * k3s
            v4, Om4_ = v + h * k3v, Om + h * k3w
            a4 = rhs(i2, x, R, v4, Om4_, s4)
            k4x, k4v, k4w = v4, a4[0:3], a4[3:6]
            k4s = self._dexpinv(s4, Om4_)

            x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            v = v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
            Om = Om + (h / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
            sig = (h / 6.0) * (k1s + 2.0 * k2s + 2.0 * k3s + k4s)
            R = R @ exp_so3(sig)
            R = self._maybe_reorthonormalize(R)
            t = t0 + (n + 1) * h

            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))
                    and np.all(np.isfinite(Om))):
                raise SimulationError(
                    f"non-finite state at t = {t:.6g}", t=t0 + n * h,
                    state=ReducedState(x, R, v, Om))

        if rec is not None:
            idx = 2 * n_steps
            xi1dot, pieces = rhs(idx, x, R, v, Om, None, want_extras=True)
            rec.record(t, x, R, v, Om, Q2g[idx], xi2g[idx], xi2dg[idx],
                       xi1dot, pieces)
            return rec.finish()
        return ReducedState(x, R, v, Om)

    def _maybe_reorthonormalize(self, R):
        # geometric stepping keeps drift tiny; project only past tolerance
        if orthonormality_error(R) > 1e-9:
            from .liegroup import project_so3
            self._reorth_events += 1
            return project_so3(R)
        return R

    def simulate_full(self, state0: FullState, t0, t1, h, forcing="tracked",
                      samples_per_period=200, record=True):
        """Integrate the full 15-dimensional dynamics over [t0, t1].

        Returns (times, states) with states recorded FullState snapshots,
        or the final FullState when record is False.
        """
        n_steps = int(round((t1 - t0) / h))
        if abs(t0 + n_steps * h - t1) > 1e-9 * max(1.0, abs(t1)):
            raise ValueError("(t1 - t0) must be an integer number of steps")
        T = self.motion.period
        stride = max(1, int(round(T / (h * samples_per_period))))

        st = state0.copy()
        times, states = [], []

        half = t0 + 0.5 * h * np.arange(2 * n_steps + 1)

        def rhs(tloc, x_, R_, Qs_, xi_, sigs):
            if sigs is not None:
                R_ = R_ @ exp_so3(sigs[0])
                Qs_ = np.stack([Qs_[k] @ exp_so3(sigs[k + 1]) for k in range(3)])
            return self.full_accel(tloc, FullState(x_, R_, Qs_, xi_), forcing)

        def dsig(sigs, xi_):
            out = [self._dexpinv(sigs[0], xi_[3:6])]
            for k in range(3):
                out.append(self._dexpinv(sigs[k + 1], xi_[6 + 3 * k:9 + 3 * k]))
            return out

        zero4 = [np.zeros(3)] * 4
        t = t0
        for n in range(n_steps):
            if record and n % stride == 0:
                times.append(t)
                states.append(st.copy())

            x, R, Qs, xi = st.x, st.R, st.Qs, st.xi
            a1 = rhs(half[2 * n], x, R, Qs, xi, None)
            k1x, k1xi, k1s = xi[0:3], a1, dsig(zero4, xi)

            s2 = [0.5 * h * s for s in k1s]
            xi_2 = xi + 0.5 * h * k1xi
            a2 = rhs(half[2 * n + 1], x, R, Qs, xi_2, s2)
            k2x, k2xi, k2s = xi_2[0:3], a2, dsig(s2, xi_2)

            s3 = [0.5 * h * s for s in k2s]
            xi_3 = xi + 0.5 * h * k2xi
            a3 = rhs(half[2 * n + 1], x, R, Qs, xi_3, s3)
            k3x, k3xi, k3s = xi_3[0:3], a3, dsig(s3, xi_3)

            s4 = [h * s for s in k3s]
            xi_4 = xi + h * k3xi
            a4 = rhs(half[2 * n + 2], x, R, Qs, xi_4, s4)
            k4x, k4xi, k4s = xi_4[0:3], a4, dsig(s4, xi_4)

            st.x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
            st.xi = xi + (h / 6.0) * (k1xi + 2 * k2xi + 2 * k3xi + k4xi)
            sig = [(h / 6.0) * (k1s[j] + 2 * k2s[j] + 2 * k3s[j] + k4s[j])
                   for j in range(4)]
            st.R = self._maybe_reorthonormalize(R @ exp_so3(sig[0]))
            st.Qs = np.stack([
                self._maybe_reorthonormalize(Qs[k] @ exp_so3(sig[k + 1]))
                for k in range(3)])
            t = t0 + (n + 1) * h
            if not np.all(np.isfinite(st.xi)):
                raise SimulationError(f"non-finite state at t = {t:.6g}",
                                      t=t0 + n * h, state=st)

        if record:
            times.append(t)
            states.append(st.copy())
            return np.array(times), states
        return st


class _Recorder:
    """Accumulates TrajectorySample rows during a reduced run."""

    def __init__(self, sim: Simulator):
        self.sim = sim
        self.rows = {k: [] for k in
                     ("t", "x", "v", "R", "Om", "Q2", "xi2", "E", "Edot",
                      "tau", "P", "F_R", "F_L", "M_R", "M_L", "F_net")}

    def record(self, t, x, R, v, Om, Q2, xi2, xi2dot, xi1dot, pieces):
        J, L, fg, fa, F_Rw, F_Lw, xi, adJ, C = pieces
        xidot = np.concatenate([xi1dot, xi2dot])
        ftau2 = (J @ xidot - adJ + L @ xi - fa - fg)[6:15]
        taus = np.stack([Q2[k] @ ftau2[3 * k:3 * k + 3] for k in range(3)])
        Om2 = xi2.reshape(3, 3)
        E, Edot, P = energy_power(self.sim.model.m_total, self.sim.grav,
                                  x, v, xi1dot[0:3], taus, Q2, Om2)
        r = self.rows
        r["t"].append(t)
        r["x"].append(x.copy())
        r["v"].append(v.copy())
        r["R"].append(R.copy())
        r["Om"].append(Om.copy())
        r["Q2"].append(np.array(Q2))
        r["xi2"].append(xi2.copy())
        r["E"].append(E)
        r["Edot"].append(Edot)
        r["tau"].append(taus)
        r["P"].append(P)
        r["F_R"].append(F_Rw.copy())
        r["F_L"].append(F_Lw.copy())
        r["M_R"].append(fa[6:9].copy())
        r["M_L"].append(fa[9:12].copy())
        r["F_net"].append(fa[0:3].copy())

    def finish(self):
        r = self.rows
        return Trajectory(
            t=np.array(r["t"]), x=np.array(r["x"]), v=np.array(r["v"]),
            R=np.array(r["R"]), Om=np.array(r["Om"]), Q2=np.array(r["Q2"]),
            xi2=np.array(r["xi2"]), E=np.array(r["E"]), Edot=np.array(r["Edot"]),
            tau=np.array(r["tau"]), P=np.array(r["P"]),
            F_R=np.array(r["F_R"]), F_L=np.array(r["F_L"]),
            M_R=np.array(r["M_R"]), M_L=np.array(r["M_L"]),
            F_net=np.array(r["F_net"]),
        )
