"""Dense density-matrix reference solver for the Lindblad master equation.

    drho/dt = -i (H_eff rho - rho H_eff^dag) + sum_j L_j rho L_j^dag,
    H_eff   = H_S - (i/2) sum_j L_j^dag L_j

which is the trace-preserving form -i[H_S, rho] + sum_j D[L_j]rho. The
generator is applied by left and right multiplication with sparse
operators; the d^2 x d^2 superoperator is never built.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from src.errors import ConsistencyError, IntegrationError, TruncationWarning
from src.model.operators import JumpChannel, SumOfProductsOperator
from src.model.scenarios import ScenarioSpec
from src.propagators.exact import DEFAULT_ATOL, DEFAULT_RTOL

logger = logging.getLogger(__name__)

LEAKAGE_THRESHOLD = 1e-4
TRACE_TOL = 1e-8
POSITIVITY_TOL = 1e-8
POSITIVITY_CHECK_MAX_DIM = 64
IMAGINARY_TOL = 1e-10


@dataclass
class DensityMatrix:
    matrix: np.ndarray
    truncations: Tuple[int, ...]

    def __post_init__(self) -> None:
        self.matrix = np.asarray(self.matrix, dtype=complex)
        self.truncations = tuple(int(d) for d in self.truncations)
        d = int(np.prod(self.truncations))
        if self.matrix.shape != (d, d):
            raise ValueError(f"density matrix shape {self.matrix.shape} does not match truncations {self.truncations}")

    @classmethod
    def from_state(cls, vector: np.ndarray, truncations: Sequence[int]) -> "DensityMatrix":
        """|psi><psi| / <psi|psi>."""
        vector = np.asarray(vector, dtype=complex).reshape(-1)
        vector = vector / np.linalg.norm(vector)
        return cls(np.outer(vector, vector.conj()), tuple(truncations))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def purity(self) -> float:
        return float(np.vdot(self.matrix, self.matrix).real)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def min_eigenvalue(self) -> float:
        return float(scipy.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))[0])

    def top_level_populations(self) -> np.ndarray:
        """Marginal population of the highest kept level of each DOF."""
        diag = np.real(np.diag(self.matrix)).reshape(self.truncations)
        out = np.empty(len(self.truncations))
        for k in range(len(self.truncations)):
            out[k] = float(np.take(diag, -1, axis=k).sum())
        return out


class LindbladGenerator:
    """Sparse H_eff and jump operators for repeated application of the generator."""

    def __init__(self, hamiltonian: SumOfProductsOperator, channels: Sequence[JumpChannel]):
        self.dims = hamiltonian.dims
        for channel in channels:
            if channel.operator.dims != self.dims:
                raise ValueError(f"channel {channel.label!r} dimensions do not match the Hamiltonian")
        h_eff = hamiltonian.to_sparse()
        self.jumps: List[sp.csr_matrix] = []
        for channel in channels:
            h_eff = h_eff - 0.5j * channel.ldag_l.to_sparse()
            self.jumps.append(channel.operator.to_sparse())
        self.h_eff = h_eff.tocsr()
        self.h_eff_conj = self.h_eff.conjugate().tocsr()
        self.jumps_conj = [l.conjugate().tocsr() for l in self.jumps]

    @property
    def dim(self) -> int:
        return self.h_eff.shape[0]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        # rho H^dag = (conj(H) rho^T)^T keeps the sparse matrix on the left
        out = -1j * (self.h_eff @ rho - (self.h_eff_conj @ rho.T).T)
        for l, l_conj in zip(self.jumps, self.jumps_conj):
            out += (l_conj @ (l @ rho).T).T
        return out


def lindblad_rhs(
    rho: DensityMatrix, hamiltonian: SumOfProductsOperator, channels: Sequence[JumpChannel]
) -> DensityMatrix:
    """Generator applied once; the result is the derivative drho/dt.

    Raises:
        ValueError: dimension mismatch between rho and the operators.
    """
    if rho.truncations != hamiltonian.dims:
        raise ValueError(f"dimension mismatch: rho {rho.truncations} vs operators {hamiltonian.dims}")
    return DensityMatrix(LindbladGenerator(hamiltonian, channels).apply(rho.matrix), rho.truncations)


def expectation(rho: DensityMatrix, op: SumOfProductsOperator | np.ndarray | sp.spmatrix) -> float:
    """Re Tr[rho O]; logs a warning when the imaginary residue exceeds 1e-10."""
    if isinstance(op, SumOfProductsOperator):
        op = op.to_sparse()
    if sp.issparse(op):
        value = complex((op @ rho.matrix).trace())
    else:
        value = complex(np.sum(rho.matrix.T * np.asarray(op)))
    if abs(value.imag) > IMAGINARY_TOL * max(1.0, abs(value.real)):
        logger.warning("expectation value has imaginary residue %.3e", value.imag)
    return value.real


def trace_distance(rho: DensityMatrix | np.ndarray, sigma: DensityMatrix | np.ndarray) -> float:
    """0.5 * || rho - sigma ||_1 for Hermitian arguments."""
    a = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    b = sigma.matrix if isinstance(sigma, DensityMatrix) else np.asarray(sigma)
    diff = a - b
    return 0.5 * float(np.sum(np.abs(scipy.linalg.eigvalsh(0.5 * (diff + diff.conj().T)))))


def density_memory_bytes(dim: int) -> int:
    """Bytes of one dense complex128 d x d matrix."""
    return int(dim) * int(dim) * np.dtype(complex).itemsize


@dataclass
class OracleResult:
    """Reference time series.

    Attributes:
        times: Output times (internal units).
        expectations: (n_observables, n_times) real values.
        labels: Observable labels in row order.
        leakage: Peak top-level population gain per oscillator DOF label.
        truncation_ok: False once any leakage exceeded the threshold.
        min_eigenvalue: Smallest eigenvalue seen (NaN when not checked).
        states: Density matrices per output time, if requested.
    """

    times: np.ndarray
    expectations: np.ndarray
    labels: Tuple[str, ...]
    leakage: Dict[str, float]
    truncation_ok: bool
    min_eigenvalue: float = float("nan")
    states: Optional[List[DensityMatrix]] = field(default=None, repr=False)

    def series(self, label: str) -> np.ndarray:
        return self.expectations[self.labels.index(label)]


def propagate_density(
    rho0: DensityMatrix,
    spec: ScenarioSpec,
    times: Sequence[float],
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
    store_states: bool = False,
) -> OracleResult:
    """Integrate the master equation and sample observables at `times`.

    One integration per interval between consecutive `times`; checks run as
    each sample is reached and only the current rho is kept unless
    `store_states` is set.

    Emits `TruncationWarning` if population flowing into the highest level
    of any oscillator DOF exceeds 1e-4 (relative to its initial population).

    Raises:
        ValueError: rho0 does not match the scenario dimensions, or bad times.
        IntegrationError: the integrator stopped early.
        ConsistencyError: the trace drifted beyond 1e-8.
    """
    if rho0.truncations != spec.dims:
        raise ValueError(f"dimension mismatch: rho0 {rho0.truncations} vs scenario {spec.dims}")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be a non-empty increasing sequence")
    rtol = DEFAULT_RTOL if rtol is None else rtol
    atol = DEFAULT_ATOL if atol is None else atol
    generator = LindbladGenerator(spec.hamiltonian, spec.channels)
    d = generator.dim
    logger.info("oracle: d=%d, dense rho needs %.1f MiB", d, density_memory_bytes(d) / 2**20)

    def rhs(_t: float, y: np.ndarray) -> np.ndarray:
        return generator.apply(y.reshape(d, d)).reshape(-1)

    observables = [o.to_sparse() for o in spec.observables]
    oscillators = [(k, s.label) for k, s in enumerate(spec.spaces) if s.kind == "oscillator"]
    leakage = {label: 0.0 for _, label in oscillators}
    values = np.empty((len(observables), len(times)))
    states: List[DensityMatrix] = []
    min_eig = float("nan")
    y = rho0.matrix.reshape(-1).copy()
    top_initial = rho0.top_level_populations()
    for i, t in enumerate(times):
        if i > 0:
            # one segment per output time; only the current rho is held
            sol = solve_ivp(rhs, (times[i - 1], t), y, method="RK45", t_eval=[t], rtol=rtol, atol=atol)
            if not sol.success or sol.y.shape[1] == 0:
                reached = float(sol.t[-1]) if sol.t.size else float(times[i - 1])
                raise IntegrationError(f"density propagation failed: {sol.message}", reached)
            y = sol.y[:, -1]
        rho = DensityMatrix(y.reshape(d, d), spec.dims)
        trace_error = abs(rho.trace() - 1.0)
        if trace_error > TRACE_TOL:
            raise ConsistencyError(f"trace drifted by {trace_error:.3e} at t={t:.6g}")
        if d <= POSITIVITY_CHECK_MAX_DIM:
            eig = rho.min_eigenvalue()
            min_eig = eig if np.isnan(min_eig) else min(min_eig, eig)
        top = rho.top_level_populations()
        for k, label in oscillators:
            leakage[label] = max(leakage[label], float(top[k] - top_initial[k]))
        for j, op in enumerate(observables):
            values[j, i] = expectation(rho, op)
        if store_states:
            states.append(DensityMatrix(rho.matrix.copy(), spec.dims))

    if not np.isnan(min_eig) and min_eig < -POSITIVITY_TOL:
        logger.warning("oracle density matrix lost positivity: min eigenvalue %.3e", min_eig)
    leaking = {label: p for label, p in leakage.items() if p > LEAKAGE_THRESHOLD}
    if leaking:
        detail = ", ".join(f"{label}={p:.2e}" for label, p in leaking.items())
        logger.warning("truncation insufficient, top-level population %s", detail)
        warnings.warn(f"truncation insufficient: top-level population {detail}", TruncationWarning, stacklevel=2)
    return OracleResult(
        times=times,
        expectations=values,
        labels=spec.observable_labels,
        leakage=leakage,
        truncation_ok=not leaking,
        min_eigenvalue=min_eig,
        states=states if store_states else None,
    )


def initial_density(spec: ScenarioSpec) -> DensityMatrix:
    return DensityMatrix.from_state(spec.initial_vector(), spec.dims)


__all__ = [
    "DensityMatrix",
    "LindbladGenerator",
    "lindblad_rhs",
    "expectation",
    "trace_distance",
    "density_memory_bytes",
    "OracleResult",
    "propagate_density",
    "initial_density",
]
