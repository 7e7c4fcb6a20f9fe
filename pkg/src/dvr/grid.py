"""Harmonic-oscillator DVR grids and one-body operator matrices.

Provides:
- DVRGrid: quadrature points, weights and derivative/kinetic matrices for
  one coordinate degree of freedom (or a 2-point spin "grid").
- OneBodyOperator: a matrix acting on a single degree of freedom.
- build_ho_dvr, ladder_operators, number_operator, position_operator,
  momentum_operator, spin_grid
- fock_state, coherent_state, fock_projector: initial functions on a grid.

Units: mass = hbar = 1. Grid points are physical coordinates x; the
dimensionless oscillator coordinate is q = sqrt(omega) * x. Vectors on a grid
hold DVR coefficients (sqrt(w) * psi(x)), so the grid inner product is the
plain Euclidean one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np


def _frozen(array: np.ndarray, dtype=None) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class DVRGrid:
    """Primitive grid basis for one degree of freedom.

    Attributes:
        n_points: Number of grid points N_k.
        points: Strictly increasing coordinates.
        weights: Positive quadrature weights.
        kinetic: Real symmetric kinetic-energy matrix -1/2 d^2/dx^2.
        derivative: Real antisymmetric first-derivative matrix d/dx.
        frequency: Oscillator frequency the grid was built for.
        mass: Always 1 in oscillator units.
        fbr_transform: Orthogonal matrix V with V[n, alpha] = <n|alpha>,
            mapping harmonic-oscillator levels to grid points.
        kind: "oscillator" or "spin".
    """

    n_points: int
    points: np.ndarray
    weights: np.ndarray
    kinetic: np.ndarray
    derivative: np.ndarray
    frequency: float
    mass: float = 1.0
    fbr_transform: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]
    kind: str = "oscillator"

    def __post_init__(self) -> None:
        for name in ("points", "weights", "kinetic", "derivative"):
            object.__setattr__(self, name, _frozen(getattr(self, name), float))
        if self.fbr_transform is not None:
            object.__setattr__(self, "fbr_transform", _frozen(self.fbr_transform, float))
        if self.points.shape != (self.n_points,):
            raise ValueError("points must have length n_points")
        if np.any(np.diff(self.points) <= 0):
            raise ValueError("grid points must be strictly increasing")
        if np.any(self.weights <= 0):
            raise ValueError("grid weights must be positive")


@dataclass(frozen=True)
class OneBodyOperator:
    """Matrix acting on the grid (or truncated basis) of one DOF."""

    dof_index: int
    matrix: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        matrix = _frozen(self.matrix, complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"operator {self.label!r} must be a square matrix")
        if self.dof_index < 0:
            raise ValueError("dof_index must be non-negative")
        object.__setattr__(self, "matrix", matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def adjoint(self) -> "OneBodyOperator":
        return OneBodyOperator(self.dof_index, self.matrix.conj().T, f"{self.label}^dag")

    def __matmul__(self, other: "OneBodyOperator") -> "OneBodyOperator":
        if other.dof_index != self.dof_index:
            raise ValueError("cannot multiply one-body operators of different DOFs")
        return OneBodyOperator(self.dof_index, self.matrix @ other.matrix, f"{self.label}{other.label}")

    def is_identity(self) -> bool:
        return np.allclose(self.matrix, np.eye(self.dim), rtol=0.0, atol=1e-14)


def _hermitize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.conj().T)


def build_ho_dvr(n_points: int, frequency: float = 1.0) -> DVRGrid:
    """Build the harmonic-oscillator DVR for `n_points` Hermite functions.

    The coordinate operator is diagonalized in the truncated oscillator
    basis (its eigenvalues are the Gauss-Hermite nodes); derivative and
    second-derivative operators are the exact finite-basis matrices
    transformed to the grid.

    Raises:
        ValueError: if n_points < 2 or frequency <= 0.
    """
    if int(n_points) != n_points or n_points < 2:
        raise ValueError("n_points must be an integer >= 2")
    if not frequency > 0:
        raise ValueError("frequency must be positive")
    n_points = int(n_points)

    levels = np.arange(n_points, dtype=float)
    off = np.sqrt(levels[1:] / 2.0)
    # q = (a + a^dag)/sqrt(2), d/dq = (a - a^dag)/sqrt(2)
    q_fbr = np.diag(off, 1) + np.diag(off, -1)
    d_fbr = np.diag(off, 1) - np.diag(off, -1)
    off2 = 0.5 * np.sqrt(levels[2:] * (levels[2:] - 1.0))
    d2_fbr = np.diag(-(levels + 0.5)) + np.diag(off2, 2) + np.diag(off2, -2)

    nodes, v = np.linalg.eigh(q_fbr)
    v = v * np.where(v[0, :] < 0, -1.0, 1.0)

    scale = np.sqrt(frequency)
    points = nodes / scale
    # Gauss-Hermite weight relation w_alpha = sqrt(pi) V[0, alpha]^2 e^{q^2}
    weights = np.sqrt(np.pi) * v[0, :] ** 2 * np.exp(nodes**2) / scale

    derivative = scale * (v.T @ d_fbr @ v)
    derivative = 0.5 * (derivative - derivative.T)
    np.fill_diagonal(derivative, 0.0)
    second = frequency * (v.T @ d2_fbr @ v)
    kinetic = -0.5 * 0.5 * (second + second.T)

    return DVRGrid(
        n_points=n_points,
        points=points,
        weights=weights,
        kinetic=kinetic,
        derivative=derivative,
        frequency=float(frequency),
        fbr_transform=v,
    )


def _require_oscillator(grid: DVRGrid) -> None:
    if grid.kind != "oscillator":
        raise ValueError(f"operation requires an oscillator grid, got kind={grid.kind!r}")


def position_operator(grid: DVRGrid, dof_index: int = 0) -> OneBodyOperator:
    """Diagonal coordinate operator x on the grid."""
    return OneBodyOperator(dof_index, np.diag(grid.points), "x")


def momentum_operator(grid: DVRGrid, dof_index: int = 0) -> OneBodyOperator:
    """Momentum p = -i d/dx from the DVR derivative matrix."""
    _require_oscillator(grid)
    return OneBodyOperator(dof_index, _hermitize(-1j * grid.derivative), "p")


def ladder_operators(grid: DVRGrid, dof_index: int = 0) -> Tuple[OneBodyOperator, OneBodyOperator]:
    """Return (a, a^dag) with a = sqrt(omega/2) (x + i p / omega)."""
    _require_oscillator(grid)
    omega = grid.frequency
    x = np.diag(grid.points)
    p = -1j * grid.derivative
    lower = np.sqrt(omega / 2.0) * (x + 1j * p / omega)
    a = OneBodyOperator(dof_index, lower, "a")
    return a, OneBodyOperator(dof_index, lower.conj().T, "a^dag")


def number_operator(grid: DVRGrid, dof_index: int = 0) -> OneBodyOperator:
    """Return a^dag a, hermitized to remove roundoff."""
    a, adag = ladder_operators(grid, dof_index)
    return OneBodyOperator(dof_index, _hermitize(adag.matrix @ a.matrix), "n")


def spin_grid(
    omega0: float, dof_index: int = 0
) -> Tuple[DVRGrid, OneBodyOperator, OneBodyOperator, OneBodyOperator]:
    """Two flat potentials separated by omega0, treated as a 2-point grid.

    Level 0 is the ground state (potential -omega0/2), level 1 the excited
    state (+omega0/2). The kinetic matrix is zero.

    Returns:
        (grid, sigma_z, sigma_plus, sigma_minus)
    """
    if not omega0 > 0:
        raise ValueError("omega0 must be positive")
    grid = DVRGrid(
        n_points=2,
        points=np.array([0.0, 1.0]),
        weights=np.ones(2),
        kinetic=np.zeros((2, 2)),
        derivative=np.zeros((2, 2)),
        frequency=float(omega0),
        fbr_transform=np.eye(2),
        kind="spin",
    )
    sz = OneBodyOperator(dof_index, np.diag([-1.0, 1.0]), "sz")
    sp = OneBodyOperator(dof_index, np.array([[0.0, 0.0], [1.0, 0.0]]), "sp")
    sm = OneBodyOperator(dof_index, np.array([[0.0, 1.0], [0.0, 0.0]]), "sm")
    return grid, sz, sp, sm


def _hermite_functions(q: np.ndarray, n_max: int) -> np.ndarray:
    """Normalized Hermite functions psi_0..psi_{n_max} at q (rows = levels)."""
    psi = np.zeros((n_max + 1, q.size))
    psi[0] = np.pi ** (-0.25) * np.exp(-0.5 * q**2)
    if n_max >= 1:
        psi[1] = np.sqrt(2.0) * q * psi[0]
    for n in range(1, n_max):
        psi[n + 1] = np.sqrt(2.0 / (n + 1)) * q * psi[n] - np.sqrt(n / (n + 1.0)) * psi[n - 1]
    return psi


def _grid_vector(grid: DVRGrid, values_q: np.ndarray) -> np.ndarray:
    # values are sampled in q units; sqrt(w_q) * psi(q) then normalize
    w_q = grid.weights * np.sqrt(grid.frequency)
    vec = np.sqrt(w_q) * values_q
    return vec / np.linalg.norm(vec)


def fock_state(grid: DVRGrid, n: int) -> np.ndarray:
    """Grid representation of oscillator level |n>, normalized."""
    if n < 0 or n >= grid.n_points:
        raise ValueError(f"Fock level {n} outside 0..{grid.n_points - 1}")
    if grid.kind == "spin":
        vec = np.zeros(2, dtype=complex)
        vec[n] = 1.0
        return vec
    q = grid.points * np.sqrt(grid.frequency)
    return _grid_vector(grid, _hermite_functions(q, n)[n]).astype(complex)


def coherent_state(grid: DVRGrid, alpha: complex) -> np.ndarray:
    """Grid representation of the coherent state |alpha> (displaced Gaussian)."""
    _require_oscillator(grid)
    q = grid.points * np.sqrt(grid.frequency)
    center = np.sqrt(2.0) * complex(alpha).real
    kick = np.sqrt(2.0) * complex(alpha).imag
    values = np.pi ** (-0.25) * np.exp(-0.5 * (q - center) ** 2 + 1j * kick * q)
    return _grid_vector(grid, values)


def fock_projector(grid: DVRGrid, n: int, dof_index: int = 0) -> OneBodyOperator:
    """Projector |n><n| onto an oscillator level, on the grid."""
    vec = fock_state(grid, n)
    return OneBodyOperator(dof_index, np.outer(vec, vec.conj()), f"P{n}")


__all__ = [
    "DVRGrid",
    "OneBodyOperator",
    "build_ho_dvr",
    "ladder_operators",
    "number_operator",
    "position_operator",
    "momentum_operator",
    "spin_grid",
    "fock_state",
    "coherent_state",
    "fock_projector",
]
