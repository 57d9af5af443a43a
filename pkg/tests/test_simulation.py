import numpy as np
import pytest

from geoflap.aero import AeroModel
from geoflap.liegroup import rotation_angle
from geoflap.morphology import default_morphology
from geoflap.optimization import default_seed
from geoflap.simulation import (CSV_COLUMNS, ReducedState, SimulationError,
                                Simulator, Trajectory)


@pytest.fixture(scope="module")
def morph():
    return default_morphology()


@pytest.fixture(scope="module")
def params():
    return default_seed(True)


@pytest.fixture(scope="module")
def traj(morph, params):
    sim = Simulator(morph, params.motion(), AeroModel(n_strips=10))
    return sim.simulate(params.initial_state(), 0.0, params.period,
                        params.period / 300, samples_per_period=100)


def test_energy_conserved_without_aero(morph, params):
    sim = Simulator(morph, params.motion(), aero_on=False)
    ic = params.initial_state()
    T = params.period
    state0 = sim.initial_full_state(ic, 0.0)
    E0 = sim.total_energy_full(state0)
    _, states = sim.simulate_full(state0, 0.0, T, T / 800,
                                  forcing="conservative",
                                  samples_per_period=20)
    drift = max(abs(sim.total_energy_full(s) - E0) for s in states)
    assert drift < 1e-9 * max(1.0, abs(E0))


def test_fourth_order_convergence_without_aero(morph, params):
    sim = Simulator(morph, params.motion(), aero_on=False)
    ic = params.initial_state()
    T = 0.25 * params.period

    def endpoint(n):
        tr = sim.simulate(ic, 0.0, T, T / n, samples_per_period=2)
        return np.concatenate([tr.x[-1], tr.v[-1], tr.Om[-1],
                               tr.R[-1].ravel()])

    e1 = np.linalg.norm(endpoint(50) - endpoint(400))
    e2 = np.linalg.norm(endpoint(100) - endpoint(400))
    ratio = e1 / e2
    assert 12.0 < ratio < 20.0


def test_reduced_matches_full_tracked(morph, params):
    am = AeroModel(n_strips=8)
    sim = Simulator(morph, params.motion(), am)
    ic = params.initial_state()
    T = 0.5 * params.period
    h = T / 200
    tr = sim.simulate(ic, 0.0, T, h, samples_per_period=10)
    full0 = sim.initial_full_state(ic, 0.0)
    _, states = sim.simulate_full(full0, 0.0, T, h, forcing="tracked",
                                  samples_per_period=10)
    sf = states[-1]
    err = (np.linalg.norm(tr.x[-1] - sf.x) + np.linalg.norm(tr.v[-1] - sf.xi[0:3])
           + np.linalg.norm(tr.Om[-1] - sf.xi[3:6])
           + np.linalg.norm(tr.R[-1] - sf.R))
    assert err < 1e-4


def test_torque_reconstruction_roundtrip(morph, params):
    # torques recovered from the reduced solution reproduce the full
    # acceleration that generated them
    am = AeroModel(n_strips=8)
    sim = Simulator(morph, params.motion(), am)
    ic = params.initial_state()
    for t in (0.0, 0.13 * params.period, 0.61 * params.period):
        xi1dot = sim.reduced_accel(t, ic)
        tau_R, tau_L, tau_A = sim.reconstruct_torques(t, ic, xi1dot)
        full = sim.initial_full_state(ic, t)
        acc = sim.full_accel(t, full, forcing="tracked")
        assert np.allclose(acc[0:6], xi1dot, atol=1e-10)


def test_work_energy_balance(traj):
    # Edot is the analytic rate of the recorded energy
    dt = traj.t[1] - traj.t[0]
    dE_fd = np.gradient(traj.E, dt)
    mid = slice(2, -2)
    scale = np.abs(traj.Edot).max()
    # central differences on the 100-sample grid resolve the flapping-rate
    # oscillation to about 2e-2 relative; the error shrinks quadratically
    # with denser sampling
    assert np.allclose(dE_fd[mid], traj.Edot[mid], atol=2e-2 * scale)
    # trapezoid integral of the rate equals the net energy change
    integral = np.trapezoid(traj.Edot, traj.t)
    assert np.isclose(integral, traj.E[-1] - traj.E[0],
                      atol=1e-5 * max(1.0, scale * (traj.t[-1] - traj.t[0])))


def test_planar_motion_stays_planar(traj):
    # symmetric waveforms and a planar start: no side drift, roll or yaw
    assert np.abs(traj.x[:, 1]).max() < 1e-12
    assert np.abs(traj.v[:, 1]).max() < 1e-12
    assert np.abs(traj.Om[:, [0, 2]]).max() < 1e-10


def test_left_right_power_symmetry(traj):
    assert np.allclose(traj.P[:, 0], traj.P[:, 1], atol=1e-12)
    assert np.allclose(traj.tau[:, 0, 1], traj.tau[:, 1, 1], atol=1e-12)


def test_rotation_matrices_stay_orthonormal(traj):
    from geoflap.liegroup import orthonormality_error
    errs = [orthonormality_error(R) for R in traj.R]
    assert max(errs) < 1e-9


def test_csv_roundtrip(tmp_path, traj):
    path = tmp_path / "run.csv"
    traj.write_csv(path)
    header = path.read_text().splitlines()[0].split(",")
    assert header == list(CSV_COLUMNS)
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    assert data.shape == (len(traj), len(CSV_COLUMNS))
    # %.17g keeps doubles exactly
    assert np.array_equal(data, traj.as_matrix())


def test_binary_roundtrip(tmp_path, traj):
    path = tmp_path / "run.gfw"
    traj.write_binary(path)
    data = Trajectory.read_binary(path)
    assert np.array_equal(data, traj.as_matrix())
    bad = tmp_path / "bad.gfw"
    bad.write_bytes(b"nope" + bytes(32))
    with pytest.raises(ValueError):
        Trajectory.read_binary(bad)


def test_simulation_is_deterministic(morph, params):
    sim = Simulator(morph, params.motion(), AeroModel(n_strips=6))
    ic = params.initial_state()
    T = 0.2 * params.period
    a = sim.simulate(ic, 0.0, T, T / 60, samples_per_period=10)
    b = sim.simulate(ic, 0.0, T, T / 60, samples_per_period=10)
    assert np.array_equal(a.as_matrix(), b.as_matrix())


def test_nonfinite_state_raises_with_context(morph, params):
    # a coefficient curve returning NaN must abort with time and state info
    model = AeroModel(C_L=lambda a: np.full_like(np.asarray(a, float), np.nan))
    sim = Simulator(morph, params.motion(), model)
    with pytest.raises(SimulationError) as err:
        sim.simulate(params.initial_state(), 0.0, params.period,
                     params.period / 100)
    assert err.value.t is not None
    assert err.value.state is not None


def test_sample_grid(traj, params):
    assert len(traj) == 101
    assert traj.t[0] == 0.0
    assert np.isclose(traj.t[-1], params.period)
    assert np.all(np.diff(traj.t) > 0)
