"""Scenario presets: Hamiltonians, jump channels, initial states, observables.

Every preset is rotating-wave and time independent. Rates are folded into
the jump operators (L = sqrt(kappa) a). A preset is realized in one
`Representation`; building the same preset twice (grid and Fock) gives the
trajectory and oracle views of the same physics.

DOF ordering: array sites / matter oscillators first, cavity last; the
Jaynes-Cummings spin is DOF 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Any, Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.model.basis import (
    InitialDescriptor,
    LocalSpace,
    Representation,
    oscillator_space,
    spin_space,
)
from src.model.operators import JumpChannel, SumOfProductsOperator


@dataclass(frozen=True)
class ScenarioSpec:
    """Immutable description of one open-system scenario in one representation."""

    name: str
    spaces: Tuple[LocalSpace, ...]
    hamiltonian: SumOfProductsOperator
    channels: Tuple[JumpChannel, ...]
    initial_state: Tuple[InitialDescriptor, ...]
    observables: Tuple[SumOfProductsOperator, ...]
    parameters: Mapping[str, Any] = field(default_factory=dict)
    reference_frequency: float = 1.0

    def __post_init__(self) -> None:
        dims = self.dims
        if self.hamiltonian.dims != dims:
            raise ValueError("hamiltonian dimensions do not match the scenario spaces")
        for op in (*self.observables, *(c.operator for c in self.channels)):
            if op.dims != dims:
                raise ValueError(f"operator {op.label!r} does not share the scenario dimensions")
        if len(self.initial_state) != len(self.spaces):
            raise ValueError("initial state must describe every DOF")

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(s.dim for s in self.spaces)

    @property
    def n_dofs(self) -> int:
        return len(self.spaces)

    @property
    def tau(self) -> float:
        """Oscillation period 2*pi/omega used as the time unit."""
        return 2.0 * np.pi / self.reference_frequency

    @property
    def observable_labels(self) -> Tuple[str, ...]:
        return tuple(o.label for o in self.observables)

    @property
    def representation(self) -> str:
        return self.spaces[0].representation

    def initial_functions(self) -> list:
        return [space.initial_function(d) for space, d in zip(self.spaces, self.initial_state)]

    def initial_vector(self) -> np.ndarray:
        """Full product state (C-order over DOFs)."""
        return reduce(np.kron, self.initial_functions(), np.ones(1, dtype=complex))


def effective_hamiltonian(spec: ScenarioSpec) -> SumOfProductsOperator:
    """H_S - (i/2) sum_j L_j^dag L_j."""
    h_eff = spec.hamiltonian
    for channel in spec.channels:
        h_eff = h_eff + (-0.5j) * channel.ldag_l
    return h_eff.with_label("H_eff")


class _Builder:
    """Small helper to write sum-of-products terms by DOF and operator name."""

    def __init__(self, spaces: Sequence[LocalSpace]):
        self.spaces = tuple(spaces)
        self.dims = tuple(s.dim for s in spaces)

    def term(self, coefficient: complex, *factors: Tuple[int, str], label: str = "") -> SumOfProductsOperator:
        ops = [self.spaces[k].op(name) for k, name in factors]
        return SumOfProductsOperator.product(self.dims, ops, coefficient, label)

    def zero(self) -> SumOfProductsOperator:
        return SumOfProductsOperator.zero(self.dims)

    def channel(self, k: int, name: str, rate: float, label: str) -> Optional[JumpChannel]:
        if rate < 0:
            raise ValueError(f"rate for channel {label!r} must be non-negative")
        if rate == 0:
            return None
        return JumpChannel.from_factor(self.dims, self.spaces[k].op(name), rate, label)


def _default_representation(representation: Optional[Representation]) -> Representation:
    return representation if representation is not None else Representation()


def _exchange(b: _Builder, g: float, i: int, j: int) -> SumOfProductsOperator:
    """g (x_i^dag x_j + x_i x_j^dag)."""
    return b.term(g, (i, "adag"), (j, "a")) + b.term(g, (i, "a"), (j, "adag"))


def preset_lossy_cavity(
    omega_c: float = 1.0,
    kappa: float = 0.016,
    n0: int = 8,
    representation: Optional[Representation] = None,
) -> ScenarioSpec:
    """Single leaky cavity mode prepared in Fock state |n0>."""
    rep = _default_representation(representation)
    spaces = (oscillator_space(0, "a", omega_c, rep, role="cavity"),)
    b = _Builder(spaces)
    hamiltonian = b.term(omega_c, (0, "n"), label="H_S")
    channels = tuple(c for c in [b.channel(0, "a", kappa, "L_kappa")] if c is not None)
    return ScenarioSpec(
        name="lossy_cavity",
        spaces=spaces,
        hamiltonian=hamiltonian,
        channels=channels,
        initial_state=(InitialDescriptor("fock", int(n0)),),
        observables=(b.term(1.0, (0, "n"), label="n_a"),),
        parameters={"omega_c": omega_c, "kappa": kappa, "n0": int(n0)},
        reference_frequency=omega_c,
    )


def preset_rabi(
    omega_c: float = 1.0,
    omega0: float = 1.0,
    g: float = 0.13,
    kappa: float = 0.026,
    gamma: float = 0.013,
    representation: Optional[Representation] = None,
) -> ScenarioSpec:
    """Oscillator b coupled to cavity a, initial |1>_b |0>_a."""
    rep = _default_representation(representation)
    spaces = (
        oscillator_space(0, "b", omega0, rep, role="site"),
        oscillator_space(1, "a", omega_c, rep, role="cavity"),
    )
    b = _Builder(spaces)
    hamiltonian = (
        b.term(omega_c, (1, "n")) + b.term(omega0, (0, "n")) + _exchange(b, g, 0, 1)
    ).with_label("H_S")
    channels = tuple(
        c for c in [b.channel(1, "a", kappa, "L_kappa"), b.channel(0, "a", gamma, "L_gamma")] if c is not None
    )
    return ScenarioSpec(
        name="rabi",
        spaces=spaces,
        hamiltonian=hamiltonian,
        channels=channels,
        initial_state=(InitialDescriptor("fock", 1), InitialDescriptor("fock", 0)),
        observables=(b.term(1.0, (0, "n"), label="n_b"), b.term(1.0, (1, "n"), label="n_a")),
        parameters={"omega_c": omega_c, "omega0": omega0, "g": g, "kappa": kappa, "gamma": gamma},
        reference_frequency=omega0,
    )


def preset_jaynes_cummings(
    omega0: float = 1.0,
    omega_c: float = 1.0,
    g: float = 0.13,
    kappa: float = 3.5e-3,
    gamma: float = 3.5e-3,
    alpha: float = float(np.sqrt(5.0)),
    representation: Optional[Representation] = None,
) -> ScenarioSpec:
    """Qubit (two flat potentials) coupled to a cavity in a coherent state."""
    if np.real(alpha) < 0 or np.imag(alpha) != 0:
        raise ValueError("alpha must be real and non-negative")
    rep = _default_representation(representation)
    spaces = (
        spin_space(0, "spin", omega0, rep),
        oscillator_space(1, "a", omega_c, rep, role="cavity"),
    )
    b = _Builder(spaces)
    hamiltonian = (
        b.term(0.5 * omega0, (0, "sz"))
        + b.term(omega_c, (1, "n"))
        + b.term(g, (0, "sp"), (1, "a"))
        + b.term(g, (0, "sm"), (1, "adag"))
    ).with_label("H_S")
    channels = tuple(
        c for c in [b.channel(1, "a", kappa, "L_kappa"), b.channel(0, "sm", gamma, "L_gamma")] if c is not None
    )
    inversion = (b.term(1.0, (0, "sp"), (0, "sm")) - b.term(1.0, (0, "sm"), (0, "sp"))).with_label("W")
    return ScenarioSpec(
        name="jaynes_cummings",
        spaces=spaces,
        hamiltonian=hamiltonian,
        channels=channels,
        initial_state=(InitialDescriptor("spin", 1), InitialDescriptor("coherent", float(alpha))),
        observables=(inversion, b.term(1.0, (1, "n"), label="n_a")),
        parameters={"omega0": omega0, "omega_c": omega_c, "g": g, "kappa": kappa, "gamma": gamma, "alpha": float(alpha)},
        reference_frequency=omega0,
    )


def _array_spaces(n_sites: int, omega_c: float, omega0: float, rep: Representation) -> Tuple[LocalSpace, ...]:
    sites = tuple(oscillator_space(i, f"b{i + 1}", omega0, rep, role="site") for i in range(n_sites))
    return sites + (oscillator_space(n_sites, "a", omega_c, rep, role="cavity"),)


def _array_scenario(
    name: str,
    n_sites: int,
    omega_c: float,
    omega0: float,
    g: float,
    lam: float,
    kappa: float,
    gamma: float,
    initial_occupations: Sequence[int],
    n_cavity: int,
    representation: Optional[Representation],
) -> ScenarioSpec:
    if len(initial_occupations) != n_sites:
        raise ValueError(f"initial_occupations must have {n_sites} entries")
    rep = _default_representation(representation)
    spaces = _array_spaces(n_sites, omega_c, omega0, rep)
    b = _Builder(spaces)
    cav = n_sites

    hamiltonian = b.term(omega_c, (cav, "n"))
    for i in range(n_sites):
        hamiltonian = hamiltonian + b.term(omega0, (i, "n")) + _exchange(b, g, i, cav)
    if lam != 0.0:
        for i in range(n_sites - 1):
            hamiltonian = hamiltonian + _exchange(b, lam, i, i + 1)
        # periodic closure b_1 <-> b_N
        hamiltonian = hamiltonian + _exchange(b, lam, 0, n_sites - 1)

    channels = [b.channel(cav, "a", kappa, "L_kappa")]
    channels += [b.channel(i, "a", gamma, f"L_gamma{i + 1}") for i in range(n_sites)]

    observables = [b.term(1.0, (i, "n"), label=f"n_b{i + 1}") for i in range(n_sites)]
    observables.append(b.term(1.0, (cav, "n"), label="n_a"))
    if spaces[cav].dim > 2:
        proj = spaces[cav].projector(2)
        observables.append(SumOfProductsOperator.product(b.dims, [proj], 1.0, "P2"))

    initial = tuple(InitialDescriptor("fock", int(n)) for n in initial_occupations)
    initial += (InitialDescriptor("fock", int(n_cavity)),)
    params: Dict[str, Any] = {
        "N": n_sites,
        "omega_c": omega_c,
        "omega0": omega0,
        "g": g,
        "kappa": kappa,
        "gamma": gamma,
        "initial_occupations": list(initial_occupations),
        "n_cavity": int(n_cavity),
    }
    if name == "ring_array":
        params["lam"] = lam
    return ScenarioSpec(
        name=name,
        spaces=spaces,
        hamiltonian=hamiltonian.with_label("H_S"),
        channels=tuple(c for c in channels if c is not None),
        initial_state=initial,
        observables=tuple(observables),
        parameters=params,
        reference_frequency=omega0,
    )


def preset_n_oscillators(
    N: int = 4,
    omega_c: float = 1.0,
    omega0: float = 1.0,
    g: float = 0.13,
    kappa: float = 0.026,
    gamma: float = 0.013,
    initial_occupations: Sequence[int] = (1, 1, 0, 0),
    n_cavity: int = 0,
    representation: Optional[Representation] = None,
) -> ScenarioSpec:
    """N uncoupled oscillators sharing one lossy cavity."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return _array_scenario(
        "n_oscillators", N, omega_c, omega0, g, 0.0, kappa, gamma, initial_occupations, n_cavity, representation
    )


def preset_ring_array(
    N: int = 4,
    omega_c: float = 1.0,
    omega0: float = 1.0,
    g: float = 0.13,
    lam: float = 0.065,
    kappa: float = 0.026,
    gamma: float = 0.013,
    initial_occupations: Sequence[int] = (0, 0, 0, 0),
    n_cavity: int = 2,
    representation: Optional[Representation] = None,
) -> ScenarioSpec:
    """Periodic ring of N nearest-neighbour coupled oscillators plus cavity."""
    if N < 2:
        raise ValueError("ring_array needs N >= 2")
    return _array_scenario(
        "ring_array", N, omega_c, omega0, g, lam, kappa, gamma, initial_occupations, n_cavity, representation
    )


@dataclass(frozen=True)
class PresetInfo:
    """Registry entry: builder, default parameters and run defaults."""

    builder: Callable[..., ScenarioSpec]
    defaults: Mapping[str, Any]
    n_trajectories: int
    t_final: float
    nu_max: int
    n_max: int


PRESETS: Dict[str, PresetInfo] = {
    "lossy_cavity": PresetInfo(
        preset_lossy_cavity, {"omega_c": 1.0, "kappa": 0.016, "n0": 8}, 400, 60.0, 1, 8
    ),
    "rabi": PresetInfo(
        preset_rabi,
        {"omega_c": 1.0, "omega0": 1.0, "g": 0.13, "kappa": 0.026, "gamma": 0.013},
        200,
        30.0,
        3,
        3,
    ),
    "jaynes_cummings": PresetInfo(
        preset_jaynes_cummings,
        {"omega0": 1.0, "omega_c": 1.0, "g": 0.13, "kappa": 3.5e-3, "gamma": 3.5e-3, "alpha": float(np.sqrt(5.0))},
        400,
        40.0,
        1,
        20,
    ),
    "n_oscillators": PresetInfo(
        preset_n_oscillators,
        {
            "N": 4,
            "omega_c": 1.0,
            "omega0": 1.0,
            "g": 0.13,
            "kappa": 0.026,
            "gamma": 0.013,
            "initial_occupations": [1, 1, 0, 0],
            "n_cavity": 0,
        },
        200,
        30.0,
        2,
        3,
    ),
    "ring_array": PresetInfo(
        preset_ring_array,
        {
            "N": 4,
            "omega_c": 1.0,
            "omega0": 1.0,
            "g": 0.13,
            "lam": 0.065,
            "kappa": 0.026,
            "gamma": 0.013,
            "initial_occupations": [0, 0, 0, 0],
            "n_cavity": 2,
        },
        300,
        30.0,
        3,
        5,
    ),
}


def build_scenario(
    name: str, overrides: Optional[Mapping[str, Any]] = None, representation: Optional[Representation] = None
) -> ScenarioSpec:
    """Build a registered preset with parameter overrides.

    Raises:
        ValueError: unknown preset or parameter name.
    """
    if name not in PRESETS:
        raise ValueError(f"unknown scenario {name!r}; expected one of {sorted(PRESETS)}")
    info = PRESETS[name]
    params = dict(info.defaults)
    for key, value in (overrides or {}).items():
        if key not in params:
            raise ValueError(f"scenario {name!r} has no parameter {key!r}")
        params[key] = value
    if name == "ring_array" and "lam" not in (overrides or {}) and "g" in (overrides or {}):
        params["lam"] = 0.5 * params["g"]
    return info.builder(**params, representation=representation)


def analytic_reference(spec: ScenarioSpec, times: np.ndarray) -> Optional[Dict[str, np.ndarray]]:
    """Closed-form observables where they exist (lossy cavity: n0 exp(-kappa t))."""
    if spec.name != "lossy_cavity":
        return None
    n0 = spec.parameters["n0"]
    kappa = spec.parameters["kappa"]
    return {"n_a": n0 * np.exp(-kappa * np.asarray(times, dtype=float))}


__all__ = [
    "ScenarioSpec",
    "effective_hamiltonian",
    "preset_lossy_cavity",
    "preset_rabi",
    "preset_jaynes_cummings",
    "preset_n_oscillators",
    "preset_ring_array",
    "PresetInfo",
    "PRESETS",
    "build_scenario",
    "analytic_reference",
]
