import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from qkoopman import quantum_sim as qs
from qkoopman.errors import ConfigError, DomainError, SizeError, TruncationError
from qkoopman.harness import ExperimentConfig, simulate
from qkoopman.spectral import modulation_oracle


def small_model(kappa=0.1, n=10, ordering="as_printed", bath="independent", wx=2 * math.pi,
                wy=math.pi, chi=(0.0, 0.0, 0.0)):
    spec = qs.HilbertSpec(n, n)
    h = qs.build_qho_hamiltonian(wx, wy, spec, ordering)
    if any(chi):
        h = h + qs.build_kerr_hamiltonian(*chi, spec, ordering)
    jumps = qs.build_jump_operators(qs.BathSpec(2.0, kappa), wx, wy, spec, model=bath)
    return qs.LindbladModel(h, jumps, spec=spec), spec


# -- operators and states -----------------------------------------------------

def test_destroy_action():
    a = qs.destroy(4)
    for n in range(1, 4):
        ket = np.zeros(4)
        ket[n] = 1
        assert np.allclose(a @ ket, math.sqrt(n) * np.eye(4)[n - 1])


def test_operators_read_only():
    ops = qs.operators(qs.HilbertSpec(3, 3))
    with pytest.raises(ValueError):
        ops["a_x"][0, 0] = 1.0


def test_hilbert_spec_rejects_tiny_truncation():
    with pytest.raises(ConfigError):
        qs.HilbertSpec(1, 5)


def test_as_printed_number_operator_shift():
    spec = qs.HilbertSpec(4, 4)
    diff = qs.number_operator(spec, "x", "as_printed") - qs.number_operator(spec, "x", "normal")
    assert np.allclose(diff, np.eye(spec.dim))


def test_bose_einstein():
    assert qs.bose_einstein_occupation(2 * math.pi, 2.0) == pytest.approx(1 / math.expm1(math.pi))
    with pytest.raises(DomainError):
        qs.bose_einstein_occupation(-1.0, 2.0)


def test_modulation_drive_values():
    c, op = qs.build_modulation_drive(4.0, math.pi / math.e, qs.HilbertSpec(3, 3))
    assert c(0.0) == 4.0
    assert abs(c(math.pi / (2 * math.pi / math.e))) < 1e-12
    assert np.allclose(op, qs.operators(qs.HilbertSpec(3, 3))["n_x"])


def test_jump_operators():
    spec = qs.HilbertSpec(3, 3)
    assert qs.build_jump_operators(qs.BathSpec(2.0, 0.0), 1.0, 1.0, spec) == []
    bath = qs.BathSpec(2.0, 0.1)
    jumps = qs.build_jump_operators(bath, 2 * math.pi, math.pi, spec)
    nbar = qs.bose_einstein_occupation(2 * math.pi, 2.0)
    a = qs.operators(spec)["a_x"]
    assert np.allclose(jumps[0], math.sqrt(0.1 * (nbar + 1)) * a)
    common = qs.build_jump_operators(bath, 2 * math.pi, math.pi, spec, model="common")
    assert len(common) == 4
    with pytest.raises(DomainError):
        qs.build_jump_operators(bath, 1.0, 1.0, qs.HilbertSpec(3, 3, True), (-0.1, 0.0))
    with pytest.raises(DomainError):
        qs.BathSpec(2.0, -0.1)


def test_coherent_state():
    spec = qs.HilbertSpec(10, 10)
    vac = qs.coherent_state(0, spec)
    assert vac[0, 0] == 1 and np.trace(vac) == pytest.approx(1)
    rho = qs.coherent_state(1.0, spec)
    assert np.trace(rho).real == pytest.approx(1, abs=1e-12)
    assert np.trace(rho @ qs.operators(spec)["x"]).real == pytest.approx(math.sqrt(2), abs=1e-4)
    with pytest.raises(TruncationError):
        qs.coherent_state(3.0, qs.HilbertSpec(5, 5))


def test_lindblad_model_rejects_non_hermitian():
    with pytest.raises(ConfigError):
        qs.LindbladModel(np.array([[0, 1], [0, 0]], dtype=complex))


# -- integrator ---------------------------------------------------------------

def test_zero_generator_is_stationary():
    spec = qs.HilbertSpec(4, 4)
    rho0 = qs.coherent_state(0.1, spec)
    traj = qs.evolve_lindblad(qs.LindbladModel(np.zeros((16, 16)), spec=spec), rho0, 1.0, 0.1)
    assert len(traj) == 11
    assert np.all(traj.states == rho0)


def test_dt_must_divide():
    spec = qs.HilbertSpec(3, 3)
    model = qs.LindbladModel(np.zeros((9, 9)), spec=spec)
    with pytest.raises(DomainError):
        qs.evolve_lindblad(model, qs.coherent_state(0, spec), 1.0, 0.3)
    with pytest.raises(SizeError):
        qs.evolve_lindblad(model, np.eye(4) / 4, 1.0, 0.1)


def test_density_matrix_invariants_every_frame():
    model, spec = small_model(kappa=0.5, chi=(2.0, 3.0, 0.0))
    traj = qs.evolve_lindblad(model, qs.coherent_state(1.0, spec), 5.0, 0.01)
    for rho in traj.states:
        assert abs(np.trace(rho) - 1) <= 1e-8
        assert np.max(np.abs(rho - rho.conj().T)) <= 1e-10
    for rho in traj.states[::50]:
        assert np.linalg.eigvalsh(rho)[0] >= -1e-7


def test_closed_system_rotation_and_energy():
    model, spec = small_model(kappa=0.0, ordering="normal", n=12)
    ops = qs.operators(spec)
    traj = qs.evolve_lindblad(model, qs.coherent_state(1.0, spec), 50.0, 0.01,
                              e_ops={"a_x": ops["a_x"], "H": model.H0, "n_x": ops["n_x"]})
    exact = np.exp(-1j * 2 * math.pi * traj.times)
    assert np.max(np.abs(traj.expect["a_x"] - exact)) <= 1e-6
    h = traj.expect["H"].real
    assert np.max(np.abs(h - h[0])) <= 1e-6 * abs(h[0])
    assert qs.steady_state_occupation(traj, "x") == pytest.approx(1.0, abs=1e-6)


def test_thermal_fixed_point():
    model, spec = small_model(kappa=0.1)
    traj = qs.evolve_lindblad(model, qs.coherent_state(0, spec), 120.0, 0.05,
                              e_ops={"n_x": qs.operators(spec)["n_x"]})
    nbar = qs.bose_einstein_occupation(2 * math.pi, 2.0)
    assert qs.steady_state_occupation(traj, "x", 0.05) == pytest.approx(nbar, rel=0.05)


def test_truncation_guard():
    # a strong Kerr drive is not needed: an undersized space trips the check at t=0
    spec = qs.HilbertSpec(6, 6)
    model = qs.LindbladModel(np.zeros((36, 36)), spec=spec)
    psi = np.zeros(36)
    psi[5 * 6] = 1.0  # |5, 0>
    with pytest.raises(TruncationError):
        qs.evolve_lindblad(model, np.outer(psi, psi).astype(complex), 0.1, 0.01)


def test_expectation_series_identity_and_vacuum():
    model, spec = small_model(kappa=0.0, n=4)
    traj = qs.evolve_lindblad(model, qs.coherent_state(0, spec), 1.0, 0.01)
    assert np.allclose(qs.expectation_series(traj, np.eye(16)), 1.0)
    assert np.allclose(qs.expectation_series(traj, qs.operators(spec)["x"]), 0.0, atol=1e-14)
    with pytest.raises(SizeError):
        qs.expectation_series(traj, np.eye(3))


def test_steady_state_occupation_options():
    traj = qs.Trajectory(np.arange(4.0), None, {"n_x": np.array([1.0, 2.0, 3.0, 4.0])})
    assert qs.steady_state_occupation(traj, "x", 1.0) == 2.5
    assert qs.steady_state_occupation(traj, "x", 0.25, ordering="as_printed") == 5.0
    with pytest.raises(DomainError):
        qs.steady_state_occupation(traj, "x", 0.0)


@pytest.fixture(scope="module")
def table_one_run():
    return simulate(ExperimentConfig(system="qho"))


def test_linear_ode_oracle(table_one_run):
    """Quadratures of the damped pair follow the closed-form first-moment ODE."""
    series, traj = table_one_run
    kappa, wx, wy = 0.1, 2 * math.pi, math.pi
    g = np.zeros((4, 4))
    # state (x, y, p_x, p_y); x' = w p - k/2 x, p' = -w x - k/2 p
    for i, w in ((0, wx), (1, wy)):
        g[i, i] = g[i + 2, i + 2] = -kappa / 2
        g[i, i + 2], g[i + 2, i] = w, -w
    z0 = series.values()[:, 0]
    exact = np.array([expm(g * t) @ z0 for t in series.times]).T
    rms = np.sqrt(np.mean((series.values() - exact) ** 2))
    assert rms <= 1e-4
    decay = np.abs(traj.expect["a_x"])
    assert np.max(np.abs(decay - np.exp(-kappa * series.times / 2))) <= 1e-4


def test_bessel_oracle():
    cfg = ExperimentConfig(system="modulated", delta=4.0, omega_f=math.pi / math.e, t_f=20.0)
    series, traj = simulate(cfg)
    model = modulation_oracle(1.0, cfg.kappa, cfg.omega_x, cfg.delta, cfg.omega_f, traj.times)
    sim = traj.expect["a_x"]
    rel = np.sqrt(np.mean(np.abs(sim - model) ** 2)) / np.sqrt(np.mean(np.abs(model) ** 2))
    assert rel <= 1e-3


# -- series I/O ---------------------------------------------------------------

@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=20),
       st.sampled_from([0.01, 0.1, 0.5]))
@settings(max_examples=30, deadline=None)
def test_series_csv_round_trip(tmp_path_factory, values, dt):
    path = tmp_path_factory.mktemp("csv") / "s.csv"
    s = qs.MultichannelSeries(dt, {"a": values, "b": values[::-1]})
    s.to_csv(path)
    back = qs.MultichannelSeries.from_csv(path)
    assert back.names == ["a", "b"]
    assert np.array_equal(back.values(), s.values())
    assert back.dt == pytest.approx(dt, rel=1e-12)


def test_series_validation():
    with pytest.raises(SizeError):
        qs.MultichannelSeries(0.1, {"a": [1.0, 2.0], "b": [1.0]})
    with pytest.raises(DomainError):
        qs.MultichannelSeries(0.1, {"a": [1.0, math.nan]})
    with pytest.raises(DomainError):
        qs.MultichannelSeries(0.0, {"a": [1.0]})
