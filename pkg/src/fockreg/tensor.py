"""Operators on spin (x) boson space stored as sums of Kronecker products.

Spin factors stay sparse; boson factors are dense.  This keeps evolved spin
observables (a few terms per magnetization sector) cheap even when the dense
tensor-space matrix would not fit comfortably in memory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fock_core import FockOperator
from .spin_lattice import SpinOperator

__all__ = ["TensorOperator"]


def _spin_matrix(A, dim):
    if A is None:
        return sp.identity(dim, dtype=complex, format="csr")
    if isinstance(A, SpinOperator):
        return A.matrix
    return sp.csr_matrix(A, dtype=complex)


def _boson_matrix(X, dim):
    if X is None:
        return np.eye(dim, dtype=complex)
    if isinstance(X, FockOperator):
        return np.asarray(X.entries)
    return np.asarray(X, dtype=complex)


@dataclass(frozen=True, eq=False)
class TensorOperator:
    spin_dim: int
    boson_dim: int
    terms: tuple
    label: str = ""

    @classmethod
    def product(cls, A=None, X=None, *, spin_dim=None, boson_dim=None, label="") -> "TensorOperator":
        """``A (x) X``; either factor may be ``None`` for the identity."""
        if spin_dim is None:
            spin_dim = A.dim if isinstance(A, SpinOperator) else np.shape(A)[0]
        if boson_dim is None:
            boson_dim = X.dim if isinstance(X, FockOperator) else np.shape(X)[0]
        return cls(spin_dim, boson_dim, ((_spin_matrix(A, spin_dim), _boson_matrix(X, boson_dim)),), label)

    @classmethod
    def zeros(cls, spin_dim, boson_dim) -> "TensorOperator":
        return cls(spin_dim, boson_dim, ())

    @classmethod
    def from_dense(cls, matrix: np.ndarray, spin_dim: int, boson_dim: int, tol: float = 0.0) -> "TensorOperator":
        """Split a dense matrix into spin matrix units times boson blocks."""
        m = np.asarray(matrix, dtype=complex).reshape(spin_dim, boson_dim, spin_dim, boson_dim)
        terms = []
        for b in range(spin_dim):
            for c in range(spin_dim):
                blk = m[b, :, c, :]
                if np.abs(blk).max(initial=0.0) > tol:
                    unit = sp.csr_matrix(([1.0 + 0j], ([b], [c])), shape=(spin_dim, spin_dim))
                    terms.append((unit, blk.copy()))
        return cls(spin_dim, boson_dim, tuple(terms))

    @property
    def dim(self) -> int:
        return self.spin_dim * self.boson_dim

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for A, X in self.terms:
            out += sp.kron(A, sp.csr_matrix(X), format="csr").toarray()
        return out

    def spin_contract(self, psi: np.ndarray) -> np.ndarray:
        """Array ``W`` with ``W[b] = sum_k (A_k psi)[b] X_k``.

        ``W`` represents the map ``phi -> Y (psi (x) phi)``.
        """
        out = np.zeros((self.spin_dim, self.boson_dim, self.boson_dim), dtype=complex)
        for A, X in self.terms:
            v = A @ psi
            nz = np.flatnonzero(v)
            if len(nz):
                out[nz] += v[nz, None, None] * X[None, :, :]
        return out

    def _check(self, other):
        if not isinstance(other, TensorOperator):
            raise TypeError(f"expected TensorOperator, got {type(other).__name__}")
        if (other.spin_dim, other.boson_dim) != (self.spin_dim, self.boson_dim):
            raise ValueError(
                f"tensor dims differ: {(self.spin_dim, self.boson_dim)} vs {(other.spin_dim, other.boson_dim)}"
            )

    def __add__(self, other):
        self._check(other)
        return TensorOperator(self.spin_dim, self.boson_dim, self.terms + other.terms)

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return TensorOperator(self.spin_dim, self.boson_dim, tuple((A, X * scalar) for A, X in self.terms), self.label)

    __rmul__ = __mul__

    def __matmul__(self, other):
        self._check(other)
        terms = []
        for A, X in self.terms:
            for B, Y in other.terms:
                AB = A @ B
                if AB.nnz:
                    terms.append((AB, X @ Y))
        return TensorOperator(self.spin_dim, self.boson_dim, tuple(terms))

    def dag(self) -> "TensorOperator":
        return TensorOperator(
            self.spin_dim, self.boson_dim, tuple((A.conj().T.tocsr(), X.conj().T) for A, X in self.terms)
        )

    def comm(self, other: "TensorOperator") -> "TensorOperator":
        return self @ other - other @ self

    def simplify(self, tol: float = 0.0) -> "TensorOperator":
        """Drop terms whose spin or boson factor vanishes."""
        kept = tuple(
            (A, X)
            for A, X in self.terms
            if A.nnz and np.abs(A.data).max() > tol and np.abs(X).max(initial=0.0) > tol
        )
        return TensorOperator(self.spin_dim, self.boson_dim, kept, self.label)

    def boson_map(self, func) -> "TensorOperator":
        """Apply ``func`` to every boson factor (e.g. weighting by functions of ``M``)."""
        return TensorOperator(self.spin_dim, self.boson_dim, tuple((A, func(X)) for A, X in self.terms))
