"""Exact (full product basis) wavefunction propagation.

State vectors live in the full tensor-product basis of the scenario
representation (truncated Fock levels, or every grid point). Operators are
applied matrix-free, axis by axis; no Kronecker matrix is ever built.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.integrate import solve_ivp

from src.errors import IntegrationError
from src.model.operators import SumOfProductsOperator, apply_local

logger = logging.getLogger(__name__)

DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-10


@dataclass
class FockStateVector:
    """Amplitudes over the product basis with per-DOF dimensions `truncations`."""

    amplitudes: np.ndarray
    truncations: Tuple[int, ...]

    def __post_init__(self) -> None:
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        self.truncations = tuple(int(d) for d in self.truncations)
        if self.amplitudes.size != int(np.prod(self.truncations)):
            raise ValueError(
                f"state has {self.amplitudes.size} amplitudes, truncations {self.truncations} need {int(np.prod(self.truncations))}"
            )

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.truncations)

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def scaled(self, factor: complex) -> "FockStateVector":
        return FockStateVector(self.amplitudes * factor, self.truncations)

    def normalized(self) -> "FockStateVector":
        return self.scaled(1.0 / np.sqrt(self.norm_squared()))


def _apply_tensor(op: SumOfProductsOperator, tensor: np.ndarray) -> np.ndarray:
    out = np.zeros_like(tensor, dtype=complex)
    for term in op.terms:
        work = tensor
        for factor in term.factors:
            work = apply_local(work, factor.matrix, factor.dof_index)
        out += term.coefficient * work
    return out


def apply_sop(op: SumOfProductsOperator, v: FockStateVector) -> FockStateVector:
    """Apply a sum-of-products operator term by term along each DOF axis.

    Raises:
        ValueError: if the operator and state dimensions differ.
    """
    if op.dims != v.truncations:
        raise ValueError(f"dimension mismatch: operator {op.dims} vs state {v.truncations}")
    return FockStateVector(_apply_tensor(op, v.tensor()).reshape(-1), v.truncations)


def expectation(v: FockStateVector, op: SumOfProductsOperator) -> complex:
    """<v|O|v> without normalization."""
    return complex(np.vdot(v.amplitudes, apply_sop(op, v).amplitudes))


def propagate_interval(
    v: FockStateVector,
    h_eff: SumOfProductsOperator,
    dt: float,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> FockStateVector:
    """Solve i dv/dt = H_eff v over [0, dt] with adaptive embedded Runge-Kutta.

    The result is not renormalized: the norm loss under the non-Hermitian
    part is the cumulative jump probability of the interval.

    Raises:
        ValueError: dt <= 0 or dimension mismatch.
        IntegrationError: the integrator stopped before dt.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if h_eff.dims != v.truncations:
        raise ValueError(f"dimension mismatch: operator {h_eff.dims} vs state {v.truncations}")
    shape = v.truncations

    def rhs(_t: float, y: np.ndarray) -> np.ndarray:
        return -1j * _apply_tensor(h_eff, y.reshape(shape)).reshape(-1)

    sol = solve_ivp(rhs, (0.0, dt), v.amplitudes, method="RK45", rtol=rtol, atol=atol)
    if not sol.success:
        reached = float(sol.t[-1]) if sol.t.size else 0.0
        raise IntegrationError(f"exact propagation failed: {sol.message}", reached)
    logger.debug("exact interval dt=%.4g: %d rhs evaluations", dt, sol.nfev)
    return FockStateVector(sol.y[:, -1], shape)


__all__ = [
    "DEFAULT_RTOL",
    "DEFAULT_ATOL",
    "FockStateVector",
    "apply_sop",
    "expectation",
    "propagate_interval",
]
