import numpy as np
import pytest

from geoflap.dynamics import (DynamicsModel, Lg_from_Kg, appendage_inertia,
                              assemble_Jg, assemble_Kg, coupling_matrix,
                              gravity_wrench, potential_energy, torque_wrench)
from geoflap.liegroup import GroupElement, exp_so3, hat
from geoflap.morphology import default_morphology

rng = np.random.default_rng(7)


@pytest.fixture(scope="module")
def morph():
    return default_morphology()


def random_config():
    rots = [exp_so3(rng.normal(scale=0.7, size=3)) for _ in range(4)]
    return GroupElement(x=rng.normal(size=3), R=rots[0], Q_R=rots[1],
                        Q_L=rots[2], Q_A=rots[3])


def perturb(g, chi, eps):
    return GroupElement(
        x=g.x + eps * chi[0:3],
        R=g.R @ exp_so3(eps * chi[3:6]),
        Q_R=g.Q_R @ exp_so3(eps * chi[6:9]),
        Q_L=g.Q_L @ exp_so3(eps * chi[9:12]),
        Q_A=g.Q_A @ exp_so3(eps * chi[12:15]),
    )


def particle_cloud(m, nu, J):
    """Six point masses reproducing (m, mass center nu, inertia J about the
    frame origin) exactly.  Independent route to kinetic/potential energy."""
    hnu = hat(nu)
    J_c = J + m * (hnu @ hnu)          # inertia about the mass center
    lam, V = np.linalg.eigh(J_c)
    c = lam.sum() / 2.0 - lam           # pair strengths, >= 0 for physical J
    assert np.all(c >= -1e-9 * lam[-1]), "inertia not realizable by particles"
    c = np.maximum(c, 0.0)              # planar bodies sit exactly at zero
    offsets = []
    for k in range(3):
        d = np.sqrt(max(3.0 * c[k] / m, 0.0))
        offsets += [d * V[:, k], -d * V[:, k]]
    masses = np.full(6, m / 6.0)
    points = np.array([nu + u for u in offsets])
    return masses, points


def body_cloud(morph):
    return particle_cloud(morph.body.m_B, np.zeros(3), morph.body.J_B)


def energies_from_particles(morph, g, xi, grav=9.81):
    """Kinetic and potential energy summed over point masses with rigid
    kinematics, never touching the block-assembled tensors."""
    v, Om = xi[0:3], xi[3:6]
    T = 0.0
    U = 0.0
    mB, pB = body_cloud(morph)
    for mp, rho in zip(mB, pB):
        r = g.x + g.R @ rho
        rdot = v + g.R @ np.cross(Om, rho)
        T += 0.5 * mp * rdot @ rdot
        U += -mp * grav * r[2]
    Qs = g.rotations()
    mus = (morph.right.mu, morph.left.mu, morph.abdomen.mu)
    apps = morph.appendages()
    for k in range(3):
        Om_k = xi[6 + 3 * k: 9 + 3 * k]
        mq, pq = particle_cloud(apps[k].m, apps[k].nu, apps[k].J)
        for mp, rho in zip(mq, pq):
            arm = mus[k] + Qs[k] @ rho
            r = g.x + g.R @ arm
            rdot = v + g.R @ (np.cross(Om, arm) + Qs[k] @ np.cross(Om_k, rho))
            T += 0.5 * mp * rdot @ rdot
            U += -mp * grav * r[2]
    return T, U


def test_particle_cloud_reproduces_inertia(morph):
    for app in morph.appendages():
        m_, pts = particle_cloud(app.m, app.nu, app.J)
        assert np.isclose(m_.sum(), app.m)
        assert np.allclose((m_[:, None] * pts).sum(axis=0), app.m * app.nu)
        J = sum(mp * ((p @ p) * np.eye(3) - np.outer(p, p))
                for mp, p in zip(m_, pts))
        assert np.allclose(J, app.J, rtol=1e-10)


def test_kinetic_energy_matches_particle_oracle(morph):
    for _ in range(10):
        g = random_config()
        xi = rng.normal(size=15)
        J = assemble_Jg(morph, g)
        T_tensor = 0.5 * xi @ (J @ xi)
        T_cloud, _ = energies_from_particles(morph, g, xi)
        assert np.isclose(T_tensor, T_cloud, rtol=1e-10)


def test_potential_energy_matches_particle_oracle(morph):
    for _ in range(10):
        g = random_config()
        U_tensor = potential_energy(morph, g)
        _, U_cloud = energies_from_particles(morph, g, np.zeros(15))
        assert np.isclose(U_tensor, U_cloud, rtol=1e-10, atol=1e-15)


def test_Jg_symmetric_positive_definite(morph):
    for _ in range(5):
        g = random_config()
        J = assemble_Jg(morph, g)
        assert np.allclose(J, J.T, atol=1e-18)
        np.linalg.cholesky(J)  # raises if not positive definite


def test_Jg_translation_blocks(morph):
    g = random_config()
    J = assemble_Jg(morph, g)
    assert np.allclose(J[0:3, 0:3], morph.total_mass * np.eye(3))
    # no direct coupling between distinct appendages
    assert np.allclose(J[6:9, 9:12], 0.0)
    assert np.allclose(J[9:12, 12:15], 0.0)


def test_appendage_inertia_consistent_with_assembly(morph):
    g = random_config()
    M = appendage_inertia(morph.right, g.R, g.Q_R)
    J = assemble_Jg(morph, g)
    assert np.allclose(M[0:3, 6:9], J[0:3, 6:9])
    assert np.allclose(M[3:6, 6:9], J[3:6, 6:9])
    assert np.allclose(M[6:9, 6:9], J[6:9, 6:9])


def test_Kg_matches_fd_of_Jg(morph):
    step = 1e-6
    for _ in range(10):
        g = random_config()
        xi = rng.normal(size=15)
        chi = rng.normal(size=15)
        K = assemble_Kg(morph, g, xi)
        fd = (assemble_Jg(morph, perturb(g, chi, step))
              - assemble_Jg(morph, perturb(g, chi, -step))) @ xi / (2 * step)
        assert np.allclose(K @ chi, fd,
                           atol=1e-7 * max(1.0, np.linalg.norm(fd)))


def test_Kg_linear_in_xi(morph):
    g = random_config()
    xi1, xi2 = rng.normal(size=15), rng.normal(size=15)
    K1 = assemble_Kg(morph, g, xi1)
    K2 = assemble_Kg(morph, g, xi2)
    K12 = assemble_Kg(morph, g, 2.0 * xi1 - 0.5 * xi2)
    assert np.allclose(K12, 2.0 * K1 - 0.5 * K2, atol=1e-15)


def test_Kg_first_block_column_zero(morph):
    g = random_config()
    K = assemble_Kg(morph, g, rng.normal(size=15))
    assert np.allclose(K[:, 0:3], 0.0)


def test_Lg_quadratic_form_identity(morph):
    # xi^T L_g xi = xi^T K_g xi / 2: the energy bookkeeping behind the
    # work-energy balance
    g = random_config()
    xi = rng.normal(size=15)
    K = assemble_Kg(morph, g, xi)
    L = Lg_from_Kg(K)
    assert np.isclose(xi @ (L @ xi), 0.5 * xi @ (K @ xi), rtol=1e-12)


def test_gravity_wrench_matches_fd_of_potential(morph):
    step = 1e-7
    for _ in range(10):
        g = random_config()
        chi = rng.normal(size=15)
        fg = gravity_wrench(morph, g)
        fd = (potential_energy(morph, perturb(g, chi, step))
              - potential_energy(morph, perturb(g, chi, -step))) / (2 * step)
        assert np.isclose(-fg @ chi, fd, rtol=1e-6, atol=1e-12)


def test_torque_wrench_coupling_identity(morph):
    # free-part slots of the torque wrench equal C applied to the
    # appendage slots, for any torques and configuration
    g = random_config()
    taus = rng.normal(size=(3, 3))
    f = torque_wrench(g, *taus)
    C = coupling_matrix(np.stack(g.rotations()))
    assert np.allclose(f[0:6], C @ f[6:15], atol=1e-14)
    assert np.allclose(f[0:3], 0.0)


def test_torque_wrench_does_no_net_rotational_work_when_rigid(morph):
    # if every appendage rotates with the body (Om_i = Q_i^T Om), internal
    # torques do no work
    g = random_config()
    Om = rng.normal(size=3)
    xi = np.concatenate([rng.normal(size=3), Om,
                         g.Q_R.T @ Om, g.Q_L.T @ Om, g.Q_A.T @ Om])
    f = torque_wrench(g, *rng.normal(size=(3, 3)))
    assert np.isclose(f @ xi, 0.0, atol=1e-14)
