"""Per-DOF local spaces: named one-body operators plus initial functions.

A scenario is built once per representation. In the "grid" representation
each oscillator lives on an HO-DVR grid with `n_points` points; in the
"fock" representation it lives in a number basis truncated at `nu_max`
(array sites) or `n_max` (cavity). Spins are two-level in both.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np
from scipy.special import gammaln

from src.dvr.grid import (
    DVRGrid,
    OneBodyOperator,
    build_ho_dvr,
    coherent_state,
    fock_projector,
    fock_state,
    ladder_operators,
    number_operator,
    spin_grid,
)

REPRESENTATIONS = ("grid", "fock")


@dataclass(frozen=True)
class Representation:
    """How oscillator DOFs are discretized.

    Attributes:
        kind: "grid" (HO-DVR) or "fock" (truncated number basis).
        n_points: Grid size N_k for the grid representation.
        nu_max: Highest Fock level kept for array/matter oscillators.
        n_max: Highest Fock level kept for the cavity.
    """

    kind: str = "grid"
    n_points: int = 41
    nu_max: int = 3
    n_max: int = 5

    def __post_init__(self) -> None:
        if self.kind not in REPRESENTATIONS:
            raise ValueError(f"representation must be one of {REPRESENTATIONS}, got {self.kind!r}")
        if self.n_points < 2 or self.nu_max < 1 or self.n_max < 1:
            raise ValueError("n_points must be >= 2 and truncations >= 1")

    def fock_limit(self, role: str) -> int:
        return self.n_max if role == "cavity" else self.nu_max


@dataclass(frozen=True)
class InitialDescriptor:
    """Initial product-state factor for one DOF: Fock level, coherent amplitude or spin level."""

    kind: str
    value: complex = 0

    def __post_init__(self) -> None:
        if self.kind not in ("fock", "coherent", "spin"):
            raise ValueError(f"unknown initial-state kind {self.kind!r}")
        if self.kind in ("fock", "spin") and (int(np.real(self.value)) != self.value or np.real(self.value) < 0):
            raise ValueError(f"{self.kind} level must be a non-negative integer")


@dataclass(frozen=True)
class LocalSpace:
    """One degree of freedom of a scenario in a given representation."""

    dof_index: int
    label: str
    kind: str
    dim: int
    representation: str
    operators: Mapping[str, OneBodyOperator] = field(repr=False)
    grid: Optional[DVRGrid] = field(default=None, repr=False)

    def op(self, name: str) -> OneBodyOperator:
        try:
            return self.operators[name]
        except KeyError:
            raise KeyError(f"DOF {self.label!r} has no operator {name!r}") from None

    def fock(self, n: int) -> np.ndarray:
        if n < 0 or n >= self.dim:
            raise ValueError(f"level {n} outside the basis of DOF {self.label!r} (dim {self.dim})")
        if self.grid is not None:
            return fock_state(self.grid, n)
        vec = np.zeros(self.dim, dtype=complex)
        vec[n] = 1.0
        return vec

    def coherent(self, alpha: complex) -> np.ndarray:
        if self.kind != "oscillator":
            raise ValueError("coherent states need an oscillator DOF")
        if self.grid is not None:
            return coherent_state(self.grid, alpha)
        alpha = complex(alpha)
        vec = np.zeros(self.dim, dtype=complex)
        if alpha == 0:
            vec[0] = 1.0
            return vec
        n = np.arange(self.dim)
        vec[:] = np.exp(-0.5 * abs(alpha) ** 2 + n * np.log(alpha) - 0.5 * gammaln(n + 1.0))
        return vec / np.linalg.norm(vec)

    def projector(self, n: int) -> OneBodyOperator:
        if self.grid is not None and self.kind == "oscillator":
            return fock_projector(self.grid, n, self.dof_index)
        vec = self.fock(n)
        return OneBodyOperator(self.dof_index, np.outer(vec, vec.conj()), f"P{n}")

    def initial_function(self, descriptor: InitialDescriptor) -> np.ndarray:
        if descriptor.kind == "coherent":
            return self.coherent(descriptor.value)
        if descriptor.kind == "spin" and self.kind != "spin":
            raise ValueError(f"DOF {self.label!r} is not a spin")
        return self.fock(int(np.real(descriptor.value)))

    def reference_functions(self) -> np.ndarray:
        """Columns ordered by energy; used to fill unoccupied SPFs."""
        if self.grid is not None:
            return self.grid.fbr_transform.T.astype(complex)
        return np.eye(self.dim, dtype=complex)


def _fock_operators(dof: int, dim: int) -> Dict[str, OneBodyOperator]:
    lower = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)
    return {
        "a": OneBodyOperator(dof, lower, "a"),
        "adag": OneBodyOperator(dof, lower.T, "a^dag"),
        "n": OneBodyOperator(dof, np.diag(np.arange(dim, dtype=float)), "n"),
        "id": OneBodyOperator(dof, np.eye(dim), "1"),
    }


def oscillator_space(
    dof: int, label: str, frequency: float, representation: Representation, role: str = "site"
) -> LocalSpace:
    """Harmonic oscillator DOF (cavity or array site)."""
    if representation.kind == "grid":
        grid = build_ho_dvr(representation.n_points, frequency)
        a, adag = ladder_operators(grid, dof)
        ops = {
            "a": a,
            "adag": adag,
            "n": number_operator(grid, dof),
            "id": OneBodyOperator(dof, np.eye(grid.n_points), "1"),
        }
        return LocalSpace(dof, label, "oscillator", grid.n_points, "grid", ops, grid)
    dim = representation.fock_limit(role) + 1
    return LocalSpace(dof, label, "oscillator", dim, "fock", _fock_operators(dof, dim))


def spin_space(dof: int, label: str, omega0: float, representation: Representation) -> LocalSpace:
    """Two-level DOF: level 0 ground, level 1 excited."""
    grid, sz, sp_, sm = spin_grid(omega0, dof)
    ops = {
        "sz": sz,
        "sp": sp_,
        "sm": sm,
        "id": OneBodyOperator(dof, np.eye(2), "1"),
    }
    return LocalSpace(dof, label, "spin", 2, representation.kind, ops, grid if representation.kind == "grid" else None)


__all__ = [
    "REPRESENTATIONS",
    "Representation",
    "InitialDescriptor",
    "LocalSpace",
    "oscillator_space",
    "spin_space",
]
