"""Sum-of-products operators and Lindblad jump channels.

A `SumOfProductsOperator` is a list of scalar-weighted tensor products of
one-body matrices, one factor per touched degree of freedom. Degrees of
freedom without a factor carry the identity. Dense and sparse Kronecker
builds are provided for validation and for the density-matrix oracle; the
propagators never need them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from src.dvr.grid import OneBodyOperator


def apply_local(tensor: np.ndarray, matrix: np.ndarray, axis: int) -> np.ndarray:
    """Contract `matrix` with one axis of `tensor`: out[..i..] = sum_j M[i, j] t[..j..]."""
    return np.moveaxis(np.tensordot(matrix, tensor, axes=([1], [axis])), 0, axis)


@dataclass(frozen=True)
class ProductTerm:
    """coefficient * (factor_1 (x) factor_2 (x) ...), factors sorted by DOF."""

    coefficient: complex
    factors: Tuple[OneBodyOperator, ...] = ()

    @classmethod
    def build(cls, coefficient: complex, factors: Iterable[OneBodyOperator]) -> "ProductTerm":
        """Create a term, multiplying together factors that share a DOF."""
        merged: Dict[int, OneBodyOperator] = {}
        for factor in factors:
            if factor.dof_index in merged:
                merged[factor.dof_index] = merged[factor.dof_index] @ factor
            else:
                merged[factor.dof_index] = factor
        ordered = tuple(merged[k] for k in sorted(merged))
        return cls(complex(coefficient), ordered)

    def factor_map(self) -> Dict[int, OneBodyOperator]:
        return {f.dof_index: f for f in self.factors}

    def adjoint(self) -> "ProductTerm":
        return ProductTerm(np.conj(self.coefficient), tuple(f.adjoint() for f in self.factors))


@dataclass(frozen=True)
class SumOfProductsOperator:
    """Operator on a tensor-product space with per-DOF dimensions `dims`."""

    terms: Tuple[ProductTerm, ...]
    dims: Tuple[int, ...]
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        for term in self.terms:
            seen = set()
            for factor in term.factors:
                k = factor.dof_index
                if k >= self.n_dofs:
                    raise ValueError(f"factor {factor.label!r} on DOF {k} but operator has {self.n_dofs} DOFs")
                if k in seen:
                    raise ValueError(f"term has two factors on DOF {k}")
                if factor.dim != self.dims[k]:
                    raise ValueError(
                        f"factor {factor.label!r} has dimension {factor.dim}, DOF {k} has {self.dims[k]}"
                    )
                seen.add(k)

    @property
    def n_dofs(self) -> int:
        return len(self.dims)

    @classmethod
    def identity(cls, dims: Sequence[int], label: str = "1") -> "SumOfProductsOperator":
        return cls((ProductTerm(1.0 + 0j, ()),), tuple(dims), label)

    @classmethod
    def zero(cls, dims: Sequence[int], label: str = "") -> "SumOfProductsOperator":
        return cls((), tuple(dims), label)

    @classmethod
    def product(
        cls,
        dims: Sequence[int],
        factors: Iterable[OneBodyOperator],
        coefficient: complex = 1.0,
        label: str = "",
    ) -> "SumOfProductsOperator":
        return cls((ProductTerm.build(coefficient, factors),), tuple(dims), label)

    def with_label(self, label: str) -> "SumOfProductsOperator":
        return SumOfProductsOperator(self.terms, self.dims, label)

    def _check_compatible(self, other: "SumOfProductsOperator") -> None:
        if self.dims != other.dims:
            raise ValueError(f"dimension mismatch: {self.dims} vs {other.dims}")

    def __add__(self, other: "SumOfProductsOperator") -> "SumOfProductsOperator":
        self._check_compatible(other)
        return SumOfProductsOperator(self.terms + other.terms, self.dims, self.label)

    def __sub__(self, other: "SumOfProductsOperator") -> "SumOfProductsOperator":
        return self + (-1.0) * other

    def __mul__(self, scalar: complex) -> "SumOfProductsOperator":
        terms = tuple(ProductTerm(t.coefficient * scalar, t.factors) for t in self.terms)
        return SumOfProductsOperator(terms, self.dims, self.label)

    __rmul__ = __mul__

    def __matmul__(self, other: "SumOfProductsOperator") -> "SumOfProductsOperator":
        """Operator product self * other, expanded term by term."""
        self._check_compatible(other)
        terms = tuple(
            ProductTerm.build(left.coefficient * right.coefficient, left.factors + right.factors)
            for left in self.terms
            for right in other.terms
        )
        return SumOfProductsOperator(terms, self.dims, self.label)

    def adjoint(self) -> "SumOfProductsOperator":
        return SumOfProductsOperator(tuple(t.adjoint() for t in self.terms), self.dims, self.label)

    def single_dof(self) -> Optional[int]:
        """DOF index if every term acts on the same single DOF, else None."""
        touched = {f.dof_index for t in self.terms for f in t.factors}
        if len(touched) == 1 and all(len(t.factors) == 1 for t in self.terms):
            return touched.pop()
        return None

    def local_matrix(self, k: int) -> np.ndarray:
        """Collapse an operator acting only on DOF k into one matrix."""
        if self.single_dof() != k:
            raise ValueError(f"operator {self.label!r} does not act on DOF {k} alone")
        return sum(t.coefficient * t.factors[0].matrix for t in self.terms)

    def _factor_list(self, term: ProductTerm) -> list:
        fmap = term.factor_map()
        return [fmap[k].matrix if k in fmap else None for k in range(self.n_dofs)]

    def to_dense(self) -> np.ndarray:
        """Explicit Kronecker-product matrix (validation only; small systems)."""
        size = int(np.prod(self.dims))
        out = np.zeros((size, size), dtype=complex)
        for term in self.terms:
            mats = [m if m is not None else np.eye(d) for m, d in zip(self._factor_list(term), self.dims)]
            out += term.coefficient * reduce(np.kron, mats, np.ones((1, 1)))
        return out

    def to_sparse(self) -> sp.csr_matrix:
        """Sparse Kronecker-product matrix used by the density-matrix oracle."""
        size = int(np.prod(self.dims))
        out = sp.csr_matrix((size, size), dtype=complex)
        for term in self.terms:
            mats = [
                sp.csr_matrix(m) if m is not None else sp.identity(d, dtype=complex, format="csr")
                for m, d in zip(self._factor_list(term), self.dims)
            ]
            block = reduce(lambda a, b: sp.kron(a, b, format="csr"), mats, sp.csr_matrix(np.ones((1, 1))))
            out = out + term.coefficient * block
        out.eliminate_zeros()
        return out


@dataclass(frozen=True)
class JumpChannel:
    """Lindblad operator with its rate folded in, plus precomputed L^dag L."""

    operator: SumOfProductsOperator
    ldag_l: SumOfProductsOperator = field(default=None, repr=False)  # type: ignore[assignment]
    label: str = ""

    def __post_init__(self) -> None:
        if self.ldag_l is None:
            object.__setattr__(self, "ldag_l", (self.operator.adjoint() @ self.operator).with_label(f"{self.label}^dag {self.label}"))
        elif self.ldag_l.dims != self.operator.dims:
            raise ValueError("ldag_l dimensions do not match the jump operator")

    @classmethod
    def from_factor(
        cls, dims: Sequence[int], factor: OneBodyOperator, rate: float, label: str
    ) -> "JumpChannel":
        """Channel sqrt(rate) * factor."""
        if rate < 0:
            raise ValueError(f"channel {label!r}: rate must be non-negative")
        op = SumOfProductsOperator.product(dims, [factor], np.sqrt(rate), label)
        return cls(op, label=label)

    @property
    def dof_index(self) -> Optional[int]:
        return self.operator.single_dof()


__all__ = ["apply_local", "ProductTerm", "SumOfProductsOperator", "JumpChannel"]
