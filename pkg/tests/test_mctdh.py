import numpy as np
import pytest

from src.dvr.grid import OneBodyOperator, coherent_state, fock_state
from src.errors import ZeroProbabilityJumpError
from src.mcwf.backends import ExactBackend, MCTDHBackend
from src.model.basis import Representation
from src.model.operators import JumpChannel, SumOfProductsOperator
from src.model.scenarios import (
    effective_hamiltonian,
    preset_lossy_cavity,
    preset_n_oscillators,
    preset_rabi,
    preset_ring_array,
)
from src.propagators import exact
from src.propagators.mctdh import (
    MCTDHState,
    apply_one_body_jump,
    eom_rhs,
    expectation,
    from_product_state,
    mean_fields,
    reduced_density,
    regularized_inverse,
    step,
)


def grid(n_points):
    return Representation("grid", n_points=n_points)


def initial(spec, n_spf):
    return from_product_state(
        [s.grid for s in spec.spaces],
        spec.initial_functions(),
        n_spf,
        references=[s.reference_functions() for s in spec.spaces],
    )


def random_state(dims, n_spf, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=n_spf) + 1j * rng.normal(size=n_spf)
    spfs = []
    for n, d in zip(n_spf, dims):
        q, _ = np.linalg.qr(rng.normal(size=(d, n)) + 1j * rng.normal(size=(d, n)))
        spfs.append(q.T)
    return MCTDHState(a / np.linalg.norm(a), spfs)


def test_single_configuration_fock_state():
    spec = preset_lossy_cavity(n0=8, representation=grid(20))
    state = initial(spec, [1])
    assert state.norm_squared() == pytest.approx(1.0)
    assert expectation(state, spec.observables[0]).real == pytest.approx(8.0, abs=1e-9)


def test_product_state_with_unoccupied_spfs():
    spec = preset_n_oscillators(representation=grid(6))
    state = initial(spec, [4] * 5)
    assert state.norm_squared() == pytest.approx(1.0)
    assert state.gram_deviation() < 1e-10
    n_b1 = spec.observables[0]
    assert expectation(state, n_b1).real == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(state.to_full(), spec.initial_vector(), atol=1e-10)


def test_too_many_spfs_raise():
    spec = preset_lossy_cavity(n0=1, representation=grid(6))
    with pytest.raises(ValueError):
        initial(spec, [7])


def test_ring_array_equation_count():
    spec = preset_ring_array(representation=grid(41))
    assert MCTDHBackend(spec, 4).equation_count() == 1844


def test_reduced_density_properties():
    state = random_state((5, 4, 3), (3, 2, 2), seed=1)
    for k in range(3):
        rho = reduced_density(state, k)
        np.testing.assert_allclose(rho, rho.conj().T, atol=1e-14)
        assert np.trace(rho).real == pytest.approx(state.norm_squared())
        assert np.linalg.eigvalsh(rho).min() > -1e-10


def test_regularized_inverse_of_well_conditioned_matrix():
    rho = np.array([[0.7, 0.1j], [-0.1j, 0.3]])
    rho_reg, inverse = regularized_inverse(rho)
    np.testing.assert_allclose(rho_reg, rho, atol=1e-12)
    np.testing.assert_allclose(inverse, np.linalg.inv(rho), atol=1e-8)


def test_regularized_inverse_of_singular_matrix_is_finite():
    rho = np.diag([1.0, 0.0])
    _, inverse = regularized_inverse(rho, eps=1e-8)
    assert inverse[1, 1] == pytest.approx(1e8)
    assert np.all(np.isfinite(inverse))


def test_expectation_matches_full_vector():
    spec = preset_rabi(g=0.3, kappa=0.05, gamma=0.02, representation=grid(5))
    h_eff = effective_hamiltonian(spec)
    state = random_state(spec.dims, (3, 2), seed=4)
    full = state.to_full()
    assert expectation(state, h_eff) == pytest.approx(np.vdot(full, h_eff.to_dense() @ full), abs=1e-12)


def test_mean_fields_reproduce_energy():
    spec = preset_rabi(g=0.3, representation=grid(5))
    h = spec.hamiltonian
    state = random_state(spec.dims, (3, 3), seed=7)
    energy = expectation(state, h)
    fields = mean_fields(state, h)
    for k, spf in enumerate(state.spfs):
        y = fields.apply(k, spf)
        assert np.trace(spf.conj() @ y) == pytest.approx(energy, abs=1e-12)
        dense = fields.dense(k)
        np.testing.assert_allclose(np.einsum("jlab,lb->aj", dense, spf), y, atol=1e-12)


def test_complete_basis_matches_exact_propagation():
    spec = preset_rabi(g=0.3, kappa=0.05, gamma=0.02, representation=grid(5))
    h_eff = effective_hamiltonian(spec)
    state = initial(spec, [5, 5])
    out = step(state, h_eff, 2.0)
    reference = exact.propagate_interval(exact.FockStateVector(spec.initial_vector(), spec.dims), h_eff, 2.0)
    np.testing.assert_allclose(out.to_full(), reference.amplitudes, atol=1e-6)


def test_truncated_spfs_follow_single_excitation_dynamics():
    spec = preset_rabi(g=0.2, kappa=0.04, gamma=0.02, representation=grid(8))
    h_eff = effective_hamiltonian(spec)
    out = step(initial(spec, [2, 2]), h_eff, 3.0)
    reference = exact.propagate_interval(exact.FockStateVector(spec.initial_vector(), spec.dims), h_eff, 3.0)
    assert out.gram_deviation() < 1e-8
    assert out.norm_squared() == pytest.approx(reference.norm_squared(), abs=1e-6)
    n_b = spec.observables[0]
    assert expectation(out, n_b).real == pytest.approx(exact.expectation(reference, n_b).real, abs=1e-5)


def test_step_rejects_non_positive_dt():
    spec = preset_lossy_cavity(n0=1, representation=grid(6))
    with pytest.raises(ValueError):
        step(initial(spec, [2]), effective_hamiltonian(spec), 0.0)


def test_jump_lowers_fock_state():
    spec = preset_lossy_cavity(kappa=0.5, n0=3, representation=grid(10))
    state = initial(spec, [2])
    jumped = apply_one_body_jump(state, spec.channels[0])
    assert jumped.norm_squared() == pytest.approx(1.0)
    assert jumped.gram_deviation() < 1e-10
    overlap = np.vdot(fock_state(spec.spaces[0].grid, 2), jumped.to_full())
    assert abs(overlap) == pytest.approx(1.0, abs=1e-10)


def test_jump_on_vacuum_raises():
    spec = preset_lossy_cavity(kappa=0.5, n0=0, representation=grid(10))
    with pytest.raises(ZeroProbabilityJumpError):
        apply_one_body_jump(initial(spec, [1]), spec.channels[0])


def test_jump_needs_single_dof_channel():
    spec = preset_rabi(representation=grid(4))
    two_body = SumOfProductsOperator.product(
        spec.dims, [OneBodyOperator(0, np.eye(4)), OneBodyOperator(1, np.eye(4))], label="L2"
    )
    with pytest.raises(ValueError):
        apply_one_body_jump(initial(spec, [2, 2]), JumpChannel(two_body, label="L2"))


@pytest.fixture(scope="module")
def lossless_rabi():
    spec = preset_rabi(kappa=0.0, gamma=0.0, representation=grid(10))
    h = effective_hamiltonian(spec)
    state = initial(spec, [3, 3])
    return spec, h, state, step(state, h, 20.0)


def test_norm_is_conserved_under_hermitian_hamiltonian(lossless_rabi):
    _, _, _, out = lossless_rabi
    assert abs(out.norm_squared() - 1.0) <= 1e-8 * 20.0


def test_energy_is_conserved_under_hermitian_hamiltonian(lossless_rabi):
    _, h, state, out = lossless_rabi
    e0 = expectation(state, h)
    assert abs(e0.imag) < 1e-12
    assert abs(expectation(out, h) - e0) <= 1e-6


def test_spf_derivatives_keep_the_gauge():
    spec = preset_rabi(g=0.3, kappa=0.05, gamma=0.02, representation=grid(8))
    state = random_state(spec.dims, (3, 3), seed=11)
    _, d_spfs = eom_rhs(state, effective_hamiltonian(spec))
    for spf, d_spf in zip(state.spfs, d_spfs):
        assert np.max(np.abs(spf.conj() @ d_spf.T)) <= 1e-8
        assert np.linalg.norm(d_spf) > 0.0


def test_complement_projector_annihilates_propagated_spfs(lossless_rabi):
    _, _, _, out = lossless_rabi
    for spf in out.spfs:
        u = spf.T
        complement = np.eye(u.shape[0]) - u @ u.conj().T
        np.testing.assert_allclose(complement @ u, 0.0, atol=1e-10)


def test_jump_on_coherent_state_keeps_it():
    spec = preset_lossy_cavity(kappa=0.5, n0=0, representation=grid(30))
    dvr = spec.spaces[0].grid
    alpha = 1.2
    psi = coherent_state(dvr, alpha)
    state = from_product_state([dvr], [psi], [2], references=[spec.spaces[0].reference_functions()])
    jumped = apply_one_body_jump(state, spec.channels[0]).to_full()
    reference = spec.channels[0].operator.to_dense() @ state.to_full()
    reference /= np.linalg.norm(reference)
    assert abs(np.vdot(reference, jumped)) ** 2 >= 1.0 - 1e-6
    assert abs(np.vdot(psi, jumped)) ** 2 >= 1.0 - 1e-6


def test_single_photon_norm_decays_over_one_step():
    kappa, dt = 0.2, 0.7
    spec = preset_lossy_cavity(kappa=kappa, n0=1, representation=grid(10))
    out = step(initial(spec, [2]), effective_hamiltonian(spec), dt)
    assert out.norm_squared() == pytest.approx(np.exp(-kappa * dt), rel=1e-6)
    assert out.gram_deviation() < 1e-8


def test_backends_pick_their_own_tolerances():
    spec = preset_rabi(representation=grid(6))
    backend = MCTDHBackend(spec, 2)
    assert (backend.rtol, backend.atol) == (1e-10, 1e-12)
    assert MCTDHBackend(spec, 2, rtol=1e-6).rtol == 1e-6
    full = ExactBackend(spec)
    assert (full.rtol, full.atol) == (exact.DEFAULT_RTOL, exact.DEFAULT_ATOL)
