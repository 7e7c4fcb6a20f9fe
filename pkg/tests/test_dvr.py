import numpy as np
import pytest
from numpy.polynomial.hermite import hermgauss

from src.dvr.grid import (
    OneBodyOperator,
    build_ho_dvr,
    coherent_state,
    fock_projector,
    fock_state,
    ladder_operators,
    momentum_operator,
    number_operator,
    position_operator,
    spin_grid,
)


def test_points_are_gauss_hermite_nodes():
    grid = build_ho_dvr(10)
    nodes, gh_weights = hermgauss(10)
    np.testing.assert_allclose(grid.points, nodes, atol=1e-12)
    np.testing.assert_allclose(grid.weights, gh_weights * np.exp(nodes**2), rtol=1e-8)


def test_frequency_scales_points():
    grid = build_ho_dvr(8, frequency=4.0)
    nodes, _ = hermgauss(8)
    np.testing.assert_allclose(grid.points, nodes / 2.0, atol=1e-12)


def test_invalid_sizes_raise():
    with pytest.raises(ValueError):
        build_ho_dvr(1)
    with pytest.raises(ValueError):
        build_ho_dvr(10, frequency=0.0)


def test_kinetic_symmetric_and_derivative_antisymmetric():
    grid = build_ho_dvr(15)
    np.testing.assert_allclose(grid.kinetic, grid.kinetic.T, atol=1e-12)
    np.testing.assert_allclose(grid.derivative, -grid.derivative.T, atol=1e-12)
    assert not grid.points.flags.writeable


def test_ground_state_energy():
    grid = build_ho_dvr(20, frequency=2.0)
    h = grid.kinetic + np.diag(0.5 * 4.0 * grid.points**2)
    energies = np.linalg.eigvalsh(h)
    assert energies[0] == pytest.approx(1.0, abs=1e-8)
    assert energies[1] == pytest.approx(3.0, abs=1e-8)


@pytest.mark.parametrize("n_points", [20, 41])
def test_low_spectrum_is_harmonic(n_points):
    grid = build_ho_dvr(n_points)
    energies = np.linalg.eigvalsh(grid.kinetic + np.diag(0.5 * grid.points**2))
    for n_levels in (10, n_points // 2):
        exact_levels = np.arange(n_levels) + 0.5
        np.testing.assert_allclose(energies[:n_levels], exact_levels, rtol=1e-6)


def test_number_operator_spectrum():
    grid = build_ho_dvr(12, frequency=1.5)
    n_op = number_operator(grid)
    np.testing.assert_allclose(np.linalg.eigvalsh(n_op.matrix), np.arange(12), atol=1e-9)


def test_fock_states_are_number_eigenstates():
    grid = build_ho_dvr(20)
    n_op = number_operator(grid).matrix
    for n in (0, 1, 5):
        vec = fock_state(grid, n)
        assert np.linalg.norm(vec) == pytest.approx(1.0)
        assert np.vdot(vec, n_op @ vec).real == pytest.approx(n, abs=1e-9)


def test_ladder_lowers_fock_state():
    grid = build_ho_dvr(20)
    a, adag = ladder_operators(grid)
    lowered = a.matrix @ fock_state(grid, 3)
    overlap = np.vdot(fock_state(grid, 2), lowered)
    assert abs(overlap) == pytest.approx(np.sqrt(3.0), abs=1e-9)
    np.testing.assert_allclose(adag.matrix, a.matrix.conj().T)


def test_commutator_of_position_and_momentum_on_low_states():
    grid = build_ho_dvr(30)
    x = position_operator(grid).matrix
    p = momentum_operator(grid).matrix
    vec = fock_state(grid, 2)
    commutator = x @ p - p @ x
    assert np.vdot(vec, commutator @ vec) == pytest.approx(1j, abs=1e-8)


def test_coherent_state_mean_occupation():
    grid = build_ho_dvr(41)
    vec = coherent_state(grid, np.sqrt(5.0))
    n_op = number_operator(grid).matrix
    assert np.linalg.norm(vec) == pytest.approx(1.0)
    assert np.vdot(vec, n_op @ vec).real == pytest.approx(5.0, abs=1e-6)


def test_complex_coherent_amplitude():
    grid = build_ho_dvr(41)
    alpha = 1.0 + 1.5j
    a, _ = ladder_operators(grid)
    vec = coherent_state(grid, alpha)
    assert np.vdot(vec, a.matrix @ vec) == pytest.approx(alpha, abs=1e-6)


def test_fock_projector_is_idempotent():
    grid = build_ho_dvr(10)
    proj = fock_projector(grid, 2, dof_index=3)
    assert proj.dof_index == 3
    np.testing.assert_allclose(proj.matrix @ proj.matrix, proj.matrix, atol=1e-12)


def test_spin_grid_operators():
    grid, sz, sp, sm = spin_grid(1.0)
    assert grid.kind == "spin" and grid.n_points == 2
    excited = fock_state(grid, 1)
    ground = fock_state(grid, 0)
    np.testing.assert_allclose(sm.matrix @ excited, ground)
    np.testing.assert_allclose(sp.matrix @ ground, excited)
    assert np.vdot(excited, sz.matrix @ excited).real == 1.0
    with pytest.raises(ValueError):
        coherent_state(grid, 1.0)


def test_one_body_operator_validation():
    with pytest.raises(ValueError):
        OneBodyOperator(0, np.zeros((2, 3)))
    a = OneBodyOperator(0, np.eye(2))
    b = OneBodyOperator(1, np.eye(2))
    with pytest.raises(ValueError):
        a @ b
    assert a.is_identity()
