"""MCTDH wavefunctions and their variational equations of motion.

The wavefunction is a coefficient tensor A (shape n_1 x ... x n_f) times
Hartree products of single-particle functions (SPFs). SPFs of DOF k are the
rows of an n_k x N_k matrix of grid (DVR) coefficients. The constraint
operator is zero, so SPF time derivatives stay orthogonal to the SPF span,
and A and all SPFs are integrated together (variable mean field).

    i dA/dt        = sum_t c_t (h_t^1 (x) ... (x) h_t^f) A
    i dphi^(k)/dt  = rho_reg^(k)^-1 (1 - P^(k)) <H>^(k) phi^(k)

with h_t^k = U_k^dag O_t^k U_k the term factors in the SPF basis.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from src.dvr.grid import DVRGrid
from src.errors import IntegrationError, ZeroProbabilityJumpError
from src.model.operators import JumpChannel, SumOfProductsOperator, apply_local


logger = logging.getLogger(__name__)

REGULARIZATION = 1e-8
ORTHONORMALITY_TOL = 1e-8
ZERO_NORM = 1e-14
# tight enough for norm drift below 1e-8 per unit time under Hermitian H
DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12


@dataclass
class MCTDHState:
    """Coefficient tensor plus per-DOF SPFs (rows) on grids."""

    a_tensor: np.ndarray
    spfs: List[np.ndarray]
    grids: Tuple[Optional[DVRGrid], ...] = field(default=(), repr=False)

    def __post_init__(self) -> None:
        self.a_tensor = np.asarray(self.a_tensor, dtype=complex)
        self.spfs = [np.asarray(s, dtype=complex) for s in self.spfs]
        if self.a_tensor.ndim != len(self.spfs):
            raise ValueError("A tensor rank must equal the number of DOFs")
        for k, (n_k, spf) in enumerate(zip(self.a_tensor.shape, self.spfs)):
            if spf.shape[0] != n_k:
                raise ValueError(f"DOF {k}: A has {n_k} SPFs, matrix has {spf.shape[0]} rows")
            if not 1 <= n_k <= spf.shape[1]:
                raise ValueError(f"DOF {k}: need 1 <= n_k <= N_k, got n_k={n_k}, N_k={spf.shape[1]}")
        if not self.grids:
            self.grids = (None,) * len(self.spfs)

    @property
    def n_spf(self) -> Tuple[int, ...]:
        return tuple(self.a_tensor.shape)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(s.shape[1] for s in self.spfs)

    @property
    def n_dofs(self) -> int:
        return len(self.spfs)

    def equation_count(self) -> int:
        """Number of complex equations of motion: prod(n_k) + sum(n_k N_k)."""
        return int(np.prod(self.n_spf)) + sum(n * d for n, d in zip(self.n_spf, self.dims))

    def norm_squared(self) -> float:
        """sum_J |A_J|^2, valid for orthonormal SPFs."""
        return float(np.vdot(self.a_tensor, self.a_tensor).real)

    def copy(self) -> "MCTDHState":
        return MCTDHState(self.a_tensor.copy(), [s.copy() for s in self.spfs], self.grids)

    def scaled(self, factor: complex) -> "MCTDHState":
        return MCTDHState(self.a_tensor * factor, [s.copy() for s in self.spfs], self.grids)

    def gram_deviation(self) -> float:
        return max(float(np.max(np.abs(s.conj() @ s.T - np.eye(s.shape[0])))) for s in self.spfs)

    def to_full(self) -> np.ndarray:
        """Expand onto the primitive product grid (small systems only)."""
        tensor = self.a_tensor
        for k, spf in enumerate(self.spfs):
            tensor = apply_local(tensor, spf.T, k)
        return tensor.reshape(-1)


def _orthonormal_fill(first: np.ndarray, references: np.ndarray, count: int) -> np.ndarray:
    """Gram-Schmidt `first` then reference columns until `count` functions."""
    basis = [first / np.linalg.norm(first)]
    for j in range(references.shape[1]):
        if len(basis) == count:
            break
        vec = references[:, j].astype(complex)
        for _ in range(2):
            for b in basis:
                vec = vec - b * np.vdot(b, vec)
        norm = np.linalg.norm(vec)
        if norm > 1e-10:
            basis.append(vec / norm)
    if len(basis) < count:
        raise ValueError("could not build enough orthonormal SPFs from the reference functions")
    return np.array(basis)


def from_product_state(
    grids: Sequence[Optional[DVRGrid]],
    functions: Sequence[np.ndarray],
    n_spf: Sequence[int],
    references: Optional[Sequence[np.ndarray]] = None,
) -> MCTDHState:
    """Single-configuration MCTDH state for a product of per-DOF functions.

    The first SPF of each DOF is its initial function; the remaining n_k - 1
    are the lowest reference functions (grid oscillator levels by default)
    orthogonalized against it. A has one unit entry at (0, ..., 0).

    Raises:
        ValueError: n_k > N_k or mismatched argument lengths.
    """
    if not len(grids) == len(functions) == len(n_spf):
        raise ValueError("grids, functions and n_spf must have one entry per DOF")
    spfs = []
    for k, (grid, func, n_k) in enumerate(zip(grids, functions, n_spf)):
        func = np.asarray(func, dtype=complex)
        if n_k > func.size:
            raise ValueError(f"DOF {k}: n_k={n_k} exceeds N_k={func.size}")
        if references is not None:
            ref = np.asarray(references[k], dtype=complex)
        elif grid is not None and grid.fbr_transform is not None:
            ref = grid.fbr_transform.T.astype(complex)
        else:
            ref = np.eye(func.size, dtype=complex)
        spfs.append(_orthonormal_fill(func, ref, n_k))
    a_tensor = np.zeros(tuple(n_spf), dtype=complex)
    a_tensor[(0,) * len(n_spf)] = 1.0
    return MCTDHState(a_tensor, spfs, tuple(grids))


def reduced_density(state: MCTDHState, k: int) -> np.ndarray:
    """rho^(k)_{jl} = <Psi_j^(k)|Psi_l^(k)>: contraction of A* A over all DOFs but k."""
    others = [i for i in range(state.n_dofs) if i != k]
    return np.tensordot(state.a_tensor.conj(), state.a_tensor, axes=(others, others))


def regularized_inverse(rho: np.ndarray, eps: float = REGULARIZATION) -> Tuple[np.ndarray, np.ndarray]:
    """Return (rho_reg, rho_reg^-1) with eigenvalues lambda -> lambda + eps exp(-lambda/eps)."""
    w, v = scipy.linalg.eigh(0.5 * (rho + rho.conj().T))
    w = np.clip(w, 0.0, None)
    w_reg = w + eps * np.exp(-w / eps)
    rho_reg = (v * w_reg) @ v.conj().T
    inverse = (v / w_reg) @ v.conj().T
    return rho_reg, inverse


def _spf_matrices(state: MCTDHState, term) -> dict:
    return {
        f.dof_index: state.spfs[f.dof_index].conj() @ f.matrix @ state.spfs[f.dof_index].T for f in term.factors
    }


@dataclass
class MeanFieldSet:
    """Reduced densities and mean-field blocks per DOF.

    `blocks[k]` holds (weight, operator) pairs with
    <H>^(k)_{jl} = sum weight[j, l] * operator, where operator None means
    the identity on the grid of DOF k.
    """

    densities: List[np.ndarray]
    blocks: List[List[Tuple[np.ndarray, Optional[np.ndarray]]]]
    dims: Tuple[int, ...]

    def dense(self, k: int) -> np.ndarray:
        """<H>^(k) as an (n_k, n_k, N_k, N_k) array."""
        n_k = self.densities[k].shape[0]
        out = np.zeros((n_k, n_k, self.dims[k], self.dims[k]), dtype=complex)
        eye = np.eye(self.dims[k])
        for weight, op in self.blocks[k]:
            out += weight[:, :, None, None] * (eye if op is None else op)[None, None, :, :]
        return out

    def apply(self, k: int, spfs: np.ndarray) -> np.ndarray:
        """Columns Y[:, j] = sum_l <H>^(k)_{jl} phi_l, for SPF rows `spfs`."""
        u = spfs.T
        out = np.zeros_like(u, dtype=complex)
        for weight, op in self.blocks[k]:
            out += (u if op is None else op @ u) @ weight.T
        return out


def mean_fields(
    state: MCTDHState, hamiltonian: SumOfProductsOperator, include_identity: bool = True
) -> MeanFieldSet:
    """Contract single-hole functions with every term of H for each DOF.

    With `include_identity=False`, terms that act as the identity on DOF k
    are left out of the blocks for k; they only contribute within the SPF
    span and vanish under (1 - P^(k)).
    """
    if hamiltonian.dims != state.dims:
        raise ValueError(f"dimension mismatch: operator {hamiltonian.dims} vs state {state.dims}")
    f = state.n_dofs
    a = state.a_tensor
    a_conj = a.conj()
    blocks: List[List[Tuple[np.ndarray, Optional[np.ndarray]]]] = [[] for _ in range(f)]
    for term in hamiltonian.terms:
        local = _spf_matrices(state, term)
        fmap = term.factor_map()
        for k in range(f):
            if k not in fmap and not include_identity:
                continue
            work = a
            for i, h in local.items():
                if i != k:
                    work = apply_local(work, h, i)
            others = [i for i in range(f) if i != k]
            weight = term.coefficient * np.tensordot(a_conj, work, axes=(others, others))
            blocks[k].append((weight, fmap[k].matrix if k in fmap else None))
    densities = [reduced_density(state, k) for k in range(f)]
    return MeanFieldSet(densities, blocks, state.dims)


def apply_in_spf_basis(state: MCTDHState, op: SumOfProductsOperator) -> np.ndarray:
    """sum_t c_t (x)_k h_t^k applied to A."""
    out = np.zeros_like(state.a_tensor)
    for term in op.terms:
        work = state.a_tensor
        for k, h in _spf_matrices(state, term).items():
            work = apply_local(work, h, k)
        out += term.coefficient * work
    return out


def expectation(state: MCTDHState, op: SumOfProductsOperator) -> complex:
    """<Psi|O|Psi> without normalization (orthonormal SPFs assumed)."""
    return complex(np.vdot(state.a_tensor, apply_in_spf_basis(state, op)))


def eom_rhs(
    state: MCTDHState, h_eff: SumOfProductsOperator, eps: float = REGULARIZATION
) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Variational time derivatives (dA/dt, [dSPF_k/dt]) under H_eff."""
    d_a = -1j * apply_in_spf_basis(state, h_eff)
    fields = mean_fields(state, h_eff, include_identity=False)
    d_spfs = []
    for k, spf in enumerate(state.spfs):
        n_k, n_grid = spf.shape
        if n_k == n_grid:
            d_spfs.append(np.zeros_like(spf))
            continue
        u = spf.T
        y = fields.apply(k, spf)
        z = y - u @ (u.conj().T @ y)
        _, inverse = regularized_inverse(fields.densities[k], eps)
        d_u = -1j * z @ inverse.T
        d_spfs.append(d_u.T)
    return d_a, d_spfs


def _pack(a_tensor: np.ndarray, spfs: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([a_tensor.reshape(-1)] + [s.reshape(-1) for s in spfs])


def _unpack(y: np.ndarray, template: MCTDHState) -> MCTDHState:
    size = template.a_tensor.size
    a_tensor = y[:size].reshape(template.a_tensor.shape)
    spfs = []
    offset = size
    for spf in template.spfs:
        spfs.append(y[offset : offset + spf.size].reshape(spf.shape))
        offset += spf.size
    return MCTDHState(a_tensor, spfs, template.grids)


def reorthonormalize(state: MCTDHState) -> MCTDHState:
    """QR each SPF set and absorb the triangular factor into A."""
    a_tensor = state.a_tensor
    spfs = []
    for k, spf in enumerate(state.spfs):
        q, r = np.linalg.qr(spf.T)
        a_tensor = apply_local(a_tensor, r, k)
        spfs.append(q.T)
    return MCTDHState(a_tensor, spfs, state.grids)


def step(
    state: MCTDHState,
    h_eff: SumOfProductsOperator,
    dt: float,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    eps: float = REGULARIZATION,
) -> MCTDHState:
    """Integrate the MCTDH equations over dt; the result is not renormalized.

    Raises:
        ValueError: dt <= 0.
        IntegrationError: the integrator stopped early (carries the time).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")

    def rhs(_t: float, y: np.ndarray) -> np.ndarray:
        d_a, d_spfs = eom_rhs(_unpack(y, state), h_eff, eps)
        return _pack(d_a, d_spfs)

    sol = solve_ivp(rhs, (0.0, dt), _pack(state.a_tensor, state.spfs), method="RK45", rtol=rtol, atol=atol)
    if not sol.success:
        reached = float(sol.t[-1]) if sol.t.size else 0.0
        raise IntegrationError(f"MCTDH propagation failed: {sol.message}", reached)
    result = _unpack(sol.y[:, -1], state)
    deviation = result.gram_deviation()
    if deviation > ORTHONORMALITY_TOL:
        logger.debug("re-orthonormalizing SPFs (Gram deviation %.2e)", deviation)
        result = reorthonormalize(result)
    return result


def apply_one_body_jump(state: MCTDHState, channel: JumpChannel) -> MCTDHState:
    """Apply a single-DOF jump operator and renormalize to unit norm.

    Raises:
        ValueError: the channel touches more than one DOF.
        ZeroProbabilityJumpError: the jump annihilates the state.
    """
    k = channel.dof_index
    if k is None:
        raise ValueError(f"channel {channel.label!r} must act on a single DOF")
    jump = channel.operator.local_matrix(k)
    q, r = np.linalg.qr(jump @ state.spfs[k].T)
    a_tensor = apply_local(state.a_tensor, r, k)
    norm_sq = float(np.vdot(a_tensor, a_tensor).real)
    if norm_sq < ZERO_NORM:
        raise ZeroProbabilityJumpError(
            f"jump {channel.label!r} left norm^2={norm_sq:.3e}; jump probabilities are inconsistent"
        )
    spfs = [s.copy() for s in state.spfs]
    spfs[k] = q.T
    return MCTDHState(a_tensor / np.sqrt(norm_sq), spfs, state.grids)


__all__ = [
    "REGULARIZATION",
    "ORTHONORMALITY_TOL",
    "DEFAULT_RTOL",
    "DEFAULT_ATOL",
    "MCTDHState",
    "MeanFieldSet",
    "from_product_state",
    "reduced_density",
    "regularized_inverse",
    "mean_fields",
    "apply_in_spf_basis",
    "expectation",
    "eom_rhs",
    "reorthonormalize",
    "step",
    "apply_one_body_jump",
]
