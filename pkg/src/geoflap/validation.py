"""Self-contained oracle checks exposed through the CLI.

Each check pits a closed-form quantity against an independent numerical
estimate (finite differences, conserved quantities, or an alternative
formulation of the same dynamics) and reports a scalar metric against a
tolerance.  The same routines back the `validate` subcommand and parts of
the test suite.
"""

from __future__ import annotations

import numpy as np

from .dynamics import (assemble_Jg, assemble_Kg, gravity_wrench,
                       potential_energy)
from .liegroup import GroupElement, exp_so3
from .optimization import OrbitParameterVector, default_seed
from .simulation import Simulator


def _random_group_element(rng):
    rots = [exp_so3(rng.normal(scale=0.8, size=3)) for _ in range(4)]
    return GroupElement(x=rng.normal(size=3), R=rots[0], Q_R=rots[1],
                        Q_L=rots[2], Q_A=rots[3])


def _perturb(g, chi, eps):
    w = chi[3:6]
    return GroupElement(
        x=g.x + eps * chi[0:3],
        R=g.R @ exp_so3(eps * w),
        Q_R=g.Q_R @ exp_so3(eps * chi[6:9]),
        Q_L=g.Q_L @ exp_so3(eps * chi[9:12]),
        Q_A=g.Q_A @ exp_so3(eps * chi[12:15]),
    )


def check_Kg_fd(morph, n=50, step=1e-6, seed=0):
    """K_g(xi) chi against the central difference of J_g xi along chi."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        g = _random_group_element(rng)
        xi = rng.normal(size=15)
        chi = rng.normal(size=15)
        K = assemble_Kg(morph, g, xi)
        Jp = assemble_Jg(morph, _perturb(g, chi, step))
        Jm = assemble_Jg(morph, _perturb(g, chi, -step))
        fd = (Jp - Jm) @ xi / (2.0 * step)
        num = np.linalg.norm(K @ chi - fd)
        den = max(np.linalg.norm(fd), 1e-30)
        worst = max(worst, num / den)
    return worst


def check_gravity_fd(morph, n=50, step=1e-7, seed=1):
    """-f_g . chi against the central difference of U along chi."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        g = _random_group_element(rng)
        chi = rng.normal(size=15)
        fg = gravity_wrench(morph, g)
        Up = potential_energy(morph, _perturb(g, chi, step))
        Um = potential_energy(morph, _perturb(g, chi, -step))
        fd = (Up - Um) / (2.0 * step)
        num = abs((-fg @ chi) - fd)
        den = max(abs(fd), 1e-30)
        worst = max(worst, num / den)
    return worst


def _orbit_setup(morph, p: OrbitParameterVector = None):
    p = p or default_seed(undulating=True)
    sim = Simulator(morph, p.motion(), aero_model=None, aero_on=False)
    return p, sim


def check_energy_conservation(morph, p=None, steps=2000):
    """Relative total-energy drift of the conservative full system over
    one period (aero off, appendages free)."""
    p, sim = _orbit_setup(morph, p)
    T = p.period
    st0 = sim.initial_full_state(p.initial_state())
    E0 = sim.total_energy_full(st0)
    st1 = sim.simulate_full(st0, 0.0, T, T / steps, forcing="conservative",
                            record=False)
    E1 = sim.total_energy_full(st1)
    return abs(E1 - E0) / max(abs(E0), 1e-30)


def check_reduced_full_equivalence(morph, p=None, steps=1500, aero_model=None):
    """Max state discrepancy between the reduced integration and the full
    integration driven by reconstructed torques, over one period."""
    from .aero import AeroModel
    p = p or default_seed(undulating=True)
    sim = Simulator(morph, p.motion(), aero_model or AeroModel())
    T = p.period
    ic = p.initial_state()
    h = T / steps
    red = sim.simulate(ic, 0.0, T, h, samples_per_period=50)
    times, states = sim.simulate_full(sim.initial_full_state(ic), 0.0, T, h,
                                      forcing="tracked", samples_per_period=50)
    worst = 0.0
    for k, t in enumerate(times):
        i = int(np.argmin(np.abs(red.t - t)))
        st = states[k]
        worst = max(worst,
                    np.linalg.norm(red.x[i] - st.x)
                    + np.linalg.norm(red.R[i] - st.R)
                    + np.linalg.norm(red.v[i] - st.xi[0:3])
                    + np.linalg.norm(red.Om[i] - st.xi[3:6]))
    return worst


VALIDATION_SUITE = (
    ("K_g finite difference", check_Kg_fd, 1e-5),
    ("gravity finite difference", check_gravity_fd, 1e-6),
    ("energy conservation", check_energy_conservation, 1e-7),
    ("reduced/full equivalence", check_reduced_full_equivalence, 1e-6),
)


def run_validation(morph):
    """Run every oracle suite; returns [(name, metric, tol, passed)]."""
    results = []
    for name, fn, tol in VALIDATION_SUITE:
        metric = fn(morph)
        results.append((name, float(metric), tol, bool(metric < tol)))
    return results
