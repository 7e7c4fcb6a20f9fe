"""Interchangeable wavefunction backends for the trajectory loop.

Both backends expose the same small surface so the jump loop never needs
to know how a state is stored:

- initial_state() -> state
- propagate(state, dt) -> unnormalized state after one interval under H_eff
- norm_squared(state), scaled(state, factor)
- expectation(state, op) -> complex, unnormalized <psi|O|psi>
- jump(state, channel) -> normalized L|psi> / ||L|psi>||
- full_vector(state) -> amplitudes on the product basis (small systems)
- state_memory_bytes(state)
"""
from __future__ import annotations

import logging
from enum import Enum
from typing import Any, Optional, Sequence

import numpy as np

from src.errors import ZeroProbabilityJumpError
from src.model.operators import JumpChannel, SumOfProductsOperator
from src.model.scenarios import ScenarioSpec, effective_hamiltonian
from src.propagators import exact, mctdh

logger = logging.getLogger(__name__)

DEFAULT_N_SPF = 4


class PropagatorKind(str, Enum):
    """Which wavefunction propagator drives the trajectories."""

    EXACT = "exact"
    MCTDH = "mctdh"

    def __str__(self) -> str:
        return self.value


class ExactBackend:
    """Full product-basis vectors propagated with `src.propagators.exact`."""

    kind = PropagatorKind.EXACT

    def __init__(self, spec: ScenarioSpec, rtol: Optional[float] = None, atol: Optional[float] = None):
        self.spec = spec
        self.h_eff = effective_hamiltonian(spec)
        self.rtol = exact.DEFAULT_RTOL if rtol is None else rtol
        self.atol = exact.DEFAULT_ATOL if atol is None else atol

    def initial_state(self) -> exact.FockStateVector:
        return exact.FockStateVector(self.spec.initial_vector(), self.spec.dims).normalized()

    def propagate(self, state: exact.FockStateVector, dt: float) -> exact.FockStateVector:
        return exact.propagate_interval(state, self.h_eff, dt, self.rtol, self.atol)

    def norm_squared(self, state: exact.FockStateVector) -> float:
        return state.norm_squared()

    def scaled(self, state: exact.FockStateVector, factor: complex) -> exact.FockStateVector:
        return state.scaled(factor)

    def expectation(self, state: exact.FockStateVector, op: SumOfProductsOperator) -> complex:
        return exact.expectation(state, op)

    def jump(self, state: exact.FockStateVector, channel: JumpChannel) -> exact.FockStateVector:
        jumped = exact.apply_sop(channel.operator, state)
        norm_sq = jumped.norm_squared()
        if norm_sq < mctdh.ZERO_NORM:
            raise ZeroProbabilityJumpError(
                f"jump {channel.label!r} left norm^2={norm_sq:.3e}; jump probabilities are inconsistent"
            )
        return jumped.scaled(1.0 / np.sqrt(norm_sq))

    def full_vector(self, state: exact.FockStateVector) -> np.ndarray:
        return state.amplitudes.copy()

    def state_memory_bytes(self, state: exact.FockStateVector) -> int:
        return int(state.amplitudes.nbytes)


class MCTDHBackend:
    """MCTDH wavefunctions; every jump channel must act on a single DOF."""

    kind = PropagatorKind.MCTDH

    def __init__(
        self,
        spec: ScenarioSpec,
        n_spf: int | Sequence[int] = DEFAULT_N_SPF,
        rtol: Optional[float] = None,
        atol: Optional[float] = None,
    ):
        for channel in spec.channels:
            if channel.dof_index is None:
                raise ValueError(f"MCTDH jumps need single-DOF channels; {channel.label!r} is not")
        self.spec = spec
        self.h_eff = effective_hamiltonian(spec)
        self.rtol = mctdh.DEFAULT_RTOL if rtol is None else rtol
        self.atol = mctdh.DEFAULT_ATOL if atol is None else atol
        if isinstance(n_spf, int):
            self.n_spf = tuple(min(n_spf, d) for d in spec.dims)
        else:
            if len(n_spf) != spec.n_dofs:
                raise ValueError(f"n_spf needs {spec.n_dofs} entries, got {len(n_spf)}")
            self.n_spf = tuple(int(n) for n in n_spf)

    def initial_state(self) -> mctdh.MCTDHState:
        return mctdh.from_product_state(
            [s.grid for s in self.spec.spaces],
            self.spec.initial_functions(),
            self.n_spf,
            references=[s.reference_functions() for s in self.spec.spaces],
        )

    def equation_count(self) -> int:
        return self.initial_state().equation_count()

    def propagate(self, state: mctdh.MCTDHState, dt: float) -> mctdh.MCTDHState:
        return mctdh.step(state, self.h_eff, dt, self.rtol, self.atol)

    def norm_squared(self, state: mctdh.MCTDHState) -> float:
        return state.norm_squared()

    def scaled(self, state: mctdh.MCTDHState, factor: complex) -> mctdh.MCTDHState:
        return state.scaled(factor)

    def expectation(self, state: mctdh.MCTDHState, op: SumOfProductsOperator) -> complex:
        return mctdh.expectation(state, op)

    def jump(self, state: mctdh.MCTDHState, channel: JumpChannel) -> mctdh.MCTDHState:
        return mctdh.apply_one_body_jump(state, channel)

    def full_vector(self, state: mctdh.MCTDHState) -> np.ndarray:
        return state.to_full()

    def state_memory_bytes(self, state: mctdh.MCTDHState) -> int:
        return int(state.a_tensor.nbytes + sum(s.nbytes for s in state.spfs))


Backend = Any


def make_backend(
    spec: ScenarioSpec,
    propagator: PropagatorKind | str,
    n_spf: Optional[int | Sequence[int]] = None,
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
) -> Backend:
    """Build the backend for `propagator` ("exact" or "mctdh").

    Tolerances left as None take the propagator's own defaults.

    Raises:
        ValueError: unknown propagator or a channel MCTDH cannot apply.
    """
    kind = PropagatorKind(str(propagator))
    if kind is PropagatorKind.EXACT:
        return ExactBackend(spec, rtol, atol)
    return MCTDHBackend(spec, DEFAULT_N_SPF if n_spf is None else n_spf, rtol, atol)


__all__ = ["PropagatorKind", "ExactBackend", "MCTDHBackend", "make_backend", "DEFAULT_N_SPF"]
