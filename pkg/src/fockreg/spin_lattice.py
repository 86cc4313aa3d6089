"""Spin-1/2 operators on a finite lattice.

Basis states are bit strings; the first site is the most significant bit and
bit value 0 means spin up (``sigma_z = +1``).  Operators are kept as sparse
matrices together with their Pauli-string factorization when they are plain
products of single-site operators, and only densified on request.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import comb

import numpy as np
import scipy.sparse as sp

__all__ = [
    "MAX_SITES",
    "SpinSystem",
    "SpinOperator",
    "RelevantState",
    "MagnetizationSector",
    "pauli",
    "levi_civita",
    "mean_magnetization",
    "spin_identity",
    "sector_decompose",
    "strong_seminorm",
    "spin_multiple_commutator",
    "product_state",
    "sector_state",
    "random_unit_state",
]

MAX_SITES = 12

_AXES = {"x": 0, "y": 1, "z": 2, 1: 0, 2: 1, 3: 2, "1": 0, "2": 1, "3": 2}
_AXIS_NAMES = "xyz"
_PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def axis_index(alpha) -> int:
    try:
        return _AXES[alpha.lower() if isinstance(alpha, str) else alpha]
    except KeyError:
        raise ValueError(f"unknown spin axis {alpha!r}; use x, y or z") from None


def levi_civita(alpha, beta, gamma) -> int:
    i, j, k = axis_index(alpha), axis_index(beta), axis_index(gamma)
    return int((i - j) * (j - k) * (k - i) / 2)


@dataclass(frozen=True)
class SpinSystem:
    sites: tuple
    max_sites: int = MAX_SITES

    def __post_init__(self):
        sites = tuple(self.sites)
        object.__setattr__(self, "sites", sites)
        if len(sites) < 1:
            raise ValueError("a spin system needs at least one site")
        if len(set(sites)) != len(sites):
            raise ValueError("site identifiers must be distinct")
        if len(sites) > self.max_sites:
            raise ValueError(f"{len(sites)} sites exceeds the cap of {self.max_sites} (dim {2 ** len(sites)})")

    @classmethod
    def chain(cls, n: int, **kw) -> "SpinSystem":
        return cls(tuple(range(1, n + 1)), **kw)

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def dim(self) -> int:
        return 2 ** len(self.sites)

    def slot(self, site) -> int:
        try:
            return self.sites.index(site)
        except ValueError:
            raise KeyError(f"unknown site {site!r}") from None

    @cached_property
    def up_counts(self) -> np.ndarray:
        idx = np.arange(self.dim)
        n = self.n_sites
        downs = np.zeros(self.dim, dtype=int)
        for p in range(n):
            downs += (idx >> (n - 1 - p)) & 1
        return n - downs

    @cached_property
    def magnetizations(self) -> np.ndarray:
        """Eigenvalue of the mean magnetization on each basis state."""
        return (2 * self.up_counts - self.n_sites) / self.n_sites


@dataclass(frozen=True, eq=False)
class SpinOperator:
    matrix: sp.csr_matrix
    label: str = ""
    paulis: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "matrix", sp.csr_matrix(self.matrix, dtype=complex))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def dag(self) -> "SpinOperator":
        return SpinOperator(self.matrix.conj().T, f"({self.label})^+" if self.label else "")

    def is_diagonal(self) -> bool:
        coo = self.matrix.tocoo()
        return bool(np.all((coo.row == coo.col) | (coo.data == 0)))

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def _coerce(self, other):
        if isinstance(other, SpinOperator):
            if other.dim != self.dim:
                raise ValueError(f"spin dims differ: {self.dim} vs {other.dim}")
            return other.matrix
        return NotImplemented

    def __matmul__(self, other):
        if isinstance(other, np.ndarray):
            return self.matrix @ other
        m = self._coerce(other)
        if m is NotImplemented:
            return m
        paulis = self.paulis + other.paulis if self.paulis is not None and other.paulis is not None else None
        return SpinOperator(self.matrix @ m, f"{self.label}{other.label}", paulis)

    def __add__(self, other):
        m = self._coerce(other)
        if m is NotImplemented:
            return m
        return SpinOperator(self.matrix + m)

    def __sub__(self, other):
        m = self._coerce(other)
        if m is NotImplemented:
            return m
        return SpinOperator(self.matrix - m)

    def __neg__(self):
        return SpinOperator(-self.matrix, self.label)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return SpinOperator(self.matrix * scalar, self.label)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def comm(self, other: "SpinOperator") -> "SpinOperator":
        return SpinOperator(self.matrix @ other.matrix - other.matrix @ self.matrix)

    def norm(self) -> float:
        """Spectral norm (densifies)."""
        if self.matrix.nnz == 0:
            return 0.0
        if self.is_diagonal():
            return float(np.abs(self.diagonal()).max())
        return float(np.linalg.norm(self.dense(), 2))

    def power(self, n: int) -> "SpinOperator":
        out = spin_identity(self.dim)
        for _ in range(n):
            out = out @ self
        return out


def spin_identity(dim: int) -> SpinOperator:
    return SpinOperator(sp.identity(dim, dtype=complex, format="csr"), "1", ())


def diagonal_spin(values) -> SpinOperator:
    return SpinOperator(sp.diags(np.asarray(values, dtype=complex), format="csr"))


def pauli(alpha, i, sys: SpinSystem) -> SpinOperator:
    """``sigma_alpha`` at site ``i``, identity elsewhere."""
    ax = axis_index(alpha)
    slot = sys.slot(i)
    left = sp.identity(2**slot, format="csr")
    right = sp.identity(2 ** (sys.n_sites - slot - 1), format="csr")
    m = sp.kron(sp.kron(left, sp.csr_matrix(_PAULI[ax])), right, format="csr")
    return SpinOperator(m, f"s{_AXIS_NAMES[ax]}{i}", ((ax, i),))


def mean_magnetization(sys: SpinSystem) -> SpinOperator:
    """Site average of ``sigma_z``; diagonal in the computational basis."""
    return SpinOperator(sp.diags(sys.magnetizations.astype(complex), format="csr"), "s3V")


@dataclass(frozen=True)
class MagnetizationSector:
    m: float
    indices: np.ndarray

    @property
    def multiplicity(self) -> int:
        return len(self.indices)


def sector_decompose(sys: SpinSystem) -> list:
    """Basis indices grouped by magnetization, ascending in ``m``."""
    ups = sys.up_counts
    sectors = []
    for k in range(sys.n_sites + 1):
        idx = np.flatnonzero(ups == k)
        assert len(idx) == comb(sys.n_sites, k)
        sectors.append(MagnetizationSector((2 * k - sys.n_sites) / sys.n_sites, idx))
    return sectors


@dataclass(frozen=True, eq=False)
class RelevantState:
    """Unit vector on which the mean magnetization acts as the scalar ``m``."""

    vector: np.ndarray
    magnetization: float
    sys: SpinSystem | None = field(default=None, repr=False)

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=complex)
        if not np.isclose(np.linalg.norm(v), 1.0, atol=1e-12):
            raise ValueError("relevant state must be normalized")
        if not -1.0 <= self.magnetization <= 1.0:
            raise ValueError(f"magnetization {self.magnetization} outside [-1, 1]")
        if self.sys is not None:
            if v.shape != (self.sys.dim,):
                raise ValueError(f"state has dim {v.shape}, system dim {self.sys.dim}")
            defect = np.abs(self.sys.magnetizations * v - self.magnetization * v).max()
            if defect > 1e-12:
                raise ValueError(f"vector is not a magnetization eigenstate (defect {defect:.2e})")
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)


def product_state(sys: SpinSystem, down_sites=()) -> RelevantState:
    """Computational basis state with the given sites flipped down."""
    index = 0
    for s in down_sites:
        index |= 1 << (sys.n_sites - 1 - sys.slot(s))
    v = np.zeros(sys.dim, dtype=complex)
    v[index] = 1.0
    return RelevantState(v, float(sys.magnetizations[index]), sys)


def sector_state(sys: SpinSystem, up_count: int, rng: np.random.Generator | None = None) -> RelevantState:
    """Normalized combination inside one magnetization sector.

    Uniform superposition by default, random complex coefficients with ``rng``.
    """
    idx = np.flatnonzero(sys.up_counts == up_count)
    if len(idx) == 0:
        raise ValueError(f"no sector with {up_count} up spins on {sys.n_sites} sites")
    if rng is None:
        coeffs = np.ones(len(idx), dtype=complex)
    else:
        coeffs = rng.normal(size=len(idx)) + 1j * rng.normal(size=len(idx))
    v = np.zeros(sys.dim, dtype=complex)
    v[idx] = coeffs / np.linalg.norm(coeffs)
    return RelevantState(v, (2 * up_count - sys.n_sites) / sys.n_sites, sys)


def random_unit_state(sys: SpinSystem, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=sys.dim) + 1j * rng.normal(size=sys.dim)
    return v / np.linalg.norm(v)


def strong_seminorm(X: SpinOperator, psi) -> float:
    """``||X psi||``."""
    v = psi.vector if isinstance(psi, RelevantState) else np.asarray(psi)
    if v.shape != (X.dim,):
        raise ValueError(f"state dim {v.shape} does not match operator dim {X.dim}")
    return float(np.linalg.norm(X.matrix @ v))


def spin_multiple_commutator(A: SpinOperator, B: SpinOperator, l: int) -> SpinOperator:
    """``[A, B]_l``: ``B`` for ``l = 0``, then ``[A, [A, B]_{l-1}]``."""
    out = B
    for _ in range(l):
        out = A.comm(out)
    return out
