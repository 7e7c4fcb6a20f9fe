import numpy as np
import pytest
from scipy.integrate import solve_ivp

from src.errors import TruncationWarning
from src.model.basis import Representation
from src.model.scenarios import preset_jaynes_cummings, preset_lossy_cavity, preset_rabi
from src.oracle import lindblad
from src.oracle.lindblad import (
    DensityMatrix,
    density_memory_bytes,
    expectation,
    initial_density,
    lindblad_rhs,
    propagate_density,
    trace_distance,
)


def test_maximally_mixed_state_is_stationary_without_losses():
    spec = preset_rabi(kappa=0.0, gamma=0.0, representation=Representation("fock", nu_max=1, n_max=1))
    rho = DensityMatrix(np.eye(4) / 4, spec.dims)
    drho = lindblad_rhs(rho, spec.hamiltonian, spec.channels)
    np.testing.assert_allclose(drho.matrix, 0.0, atol=1e-14)


def test_single_photon_decay_rate():
    kappa = 0.3
    spec = preset_lossy_cavity(kappa=kappa, n0=1, representation=Representation("fock", n_max=1))
    drho = lindblad_rhs(initial_density(spec), spec.hamiltonian, spec.channels)
    np.testing.assert_allclose(drho.matrix, np.diag([kappa, -kappa]), atol=1e-14)


def test_generator_is_traceless():
    spec = preset_rabi(g=0.3, kappa=0.2, gamma=0.1, representation=Representation("fock", nu_max=2, n_max=2))
    rng = np.random.default_rng(0)
    x = rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9))
    rho = x @ x.conj().T
    rho /= np.trace(rho)
    drho = lindblad_rhs(DensityMatrix(rho, spec.dims), spec.hamiltonian, spec.channels)
    assert abs(drho.trace()) < 1e-12
    assert drho.hermiticity_error() < 1e-12


def test_rhs_dimension_mismatch():
    spec = preset_lossy_cavity(n0=1, representation=Representation("fock", n_max=1))
    with pytest.raises(ValueError):
        lindblad_rhs(DensityMatrix(np.eye(3) / 3, (3,)), spec.hamiltonian, spec.channels)


def test_lossy_cavity_matches_exponential_decay():
    kappa = 0.1
    spec = preset_lossy_cavity(kappa=kappa, n0=8, representation=Representation("fock", n_max=8))
    times = np.linspace(0.0, 10.0, 21)
    result = propagate_density(initial_density(spec), spec, times)
    np.testing.assert_allclose(result.series("n_a"), 8.0 * np.exp(-kappa * times), atol=1e-6)
    assert result.truncation_ok
    assert result.min_eigenvalue > -1e-8


def test_purity_is_conserved_without_channels():
    spec = preset_rabi(g=0.2, kappa=0.0, gamma=0.0, representation=Representation("fock", nu_max=2, n_max=2))
    result = propagate_density(initial_density(spec), spec, np.linspace(0.0, 8.0, 9), store_states=True)
    for rho in result.states:
        assert rho.purity() == pytest.approx(1.0, abs=1e-6)
    # populations swap between site and cavity while n_b + n_a stays 1
    np.testing.assert_allclose(result.series("n_b") + result.series("n_a"), 1.0, atol=1e-7)


def test_losses_reduce_purity():
    spec = preset_rabi(g=0.2, kappa=0.3, gamma=0.1, representation=Representation("fock", nu_max=2, n_max=2))
    result = propagate_density(initial_density(spec), spec, [0.0, 3.0], store_states=True)
    assert result.states[-1].purity() < 1.0 - 1e-3


def test_jaynes_cummings_initial_expectations():
    spec = preset_jaynes_cummings(representation=Representation("fock", n_max=40))
    result = propagate_density(initial_density(spec), spec, [0.0])
    assert result.series("W")[0] == pytest.approx(1.0, abs=1e-12)
    assert result.series("n_a")[0] == pytest.approx(5.0, abs=1e-8)


def test_small_truncation_warns():
    spec = preset_rabi(g=0.13, representation=Representation("fock", nu_max=1, n_max=1))
    with pytest.warns(TruncationWarning):
        result = propagate_density(initial_density(spec), spec, np.linspace(0.0, 20.0, 5))
    assert not result.truncation_ok
    assert result.leakage["a"] > 1e-4


def test_propagate_density_validates_inputs():
    spec = preset_lossy_cavity(n0=1, representation=Representation("fock", n_max=2))
    with pytest.raises(ValueError):
        propagate_density(DensityMatrix(np.eye(2) / 2, (2,)), spec, [0.0, 1.0])
    with pytest.raises(ValueError):
        propagate_density(initial_density(spec), spec, [1.0, 0.5])


def test_expectation_accepts_dense_and_operator():
    spec = preset_lossy_cavity(n0=2, representation=Representation("fock", n_max=3))
    rho = initial_density(spec)
    op = spec.observables[0]
    assert expectation(rho, op) == pytest.approx(2.0)
    assert expectation(rho, op.to_dense()) == pytest.approx(2.0)


def test_trace_distance_and_memory():
    zero = DensityMatrix.from_state(np.array([1.0, 0.0]), (2,))
    one = DensityMatrix.from_state(np.array([0.0, 1.0]), (2,))
    assert trace_distance(zero, one) == pytest.approx(1.0)
    assert trace_distance(zero, zero) == pytest.approx(0.0)
    assert density_memory_bytes(10) == 1600


def test_density_matrix_shape_is_checked():
    with pytest.raises(ValueError):
        DensityMatrix(np.eye(3), (2,))
    rho = DensityMatrix.from_state(np.array([3.0, 4.0]), (2,))
    assert rho.trace() == pytest.approx(1.0)


def test_integration_holds_one_state_per_segment(monkeypatch):
    kappa = 0.1
    spec = preset_lossy_cavity(kappa=kappa, n0=4, representation=Representation("fock", n_max=4))
    times = np.linspace(0.0, 5.0, 11)
    calls = []

    def recording(fun, t_span, y0, **kwargs):
        sol = solve_ivp(fun, t_span, y0, **kwargs)
        calls.append((t_span, sol.y.shape))
        return sol

    monkeypatch.setattr(lindblad, "solve_ivp", recording)
    result = propagate_density(initial_density(spec), spec, times)
    assert [span for span, _ in calls] == list(zip(times[:-1], times[1:]))
    assert all(shape == (25, 1) for _, shape in calls)
    assert result.states == []
    np.testing.assert_allclose(result.series("n_a"), 4.0 * np.exp(-kappa * times), atol=1e-6)


def test_single_time_needs_no_integration(monkeypatch):
    spec = preset_lossy_cavity(kappa=0.1, n0=2, representation=Representation("fock", n_max=2))

    def forbidden(*args, **kwargs):
        raise AssertionError("no integration expected")

    monkeypatch.setattr(lindblad, "solve_ivp", forbidden)
    result = propagate_density(initial_density(spec), spec, [0.0], store_states=True)
    assert result.series("n_a")[0] == pytest.approx(2.0)
    assert len(result.states) == 1
