"""Finite number-basis representations of single-mode boson operators.

Every matrix here is the truncation to span{|0>, ..., |D>} of an operator on
the full Fock space.  Truncation is only harmless on part of the matrix, so
each :class:`FockOperator` carries a *trusted* index ``T``: all elements
``<r|X|c>`` with ``r, c <= T`` equal the infinite-dimensional ones.  Products
shrink that region according to the band structure of the factors, and
anything that would silently read past it is reported instead.

Structural metadata describes the infinite operator, not the stored matrix:

``upper``
    largest ``c - r`` with a nonzero element (how far ``X`` lowers occupation);
``lower``
    largest ``r - c`` with a nonzero element (how far ``X`` raises it);
``support``
    all nonzero elements have ``r, c <= support`` (``None`` if unbounded);
``growth``
    a bound ``|<r|X|c>| <= C (1 + c)**g`` valid for every element.

``None`` for a band means "unknown / unbounded".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "EXACT_TOL",
    "TruncationError",
    "DimensionMismatch",
    "TruncationSpec",
    "Growth",
    "FockOperator",
    "ProjectionFamily",
    "IdentityCheck",
    "IdentityReport",
    "identity",
    "zero",
    "annihilation",
    "creation",
    "number",
    "shifted_number",
    "projection_pi",
    "projection_q",
    "truncated_annihilation",
    "diagonal_function",
    "compose",
    "commutator",
    "verify_ladder_identities",
]

EXACT_TOL = 1e-12
_INF = math.inf


class TruncationError(ValueError):
    """An index or cutoff falls outside the ambient truncation."""


class DimensionMismatch(ValueError):
    """Operands live on spaces of different dimension."""


@dataclass(frozen=True)
class TruncationSpec:
    """Ambient dimension ``D`` (basis |0>..|D>), cutoff ``L`` and guard ``G``.

    The guard is the number of levels kept above the cutoff so that the
    operators needed to describe cutoff-``L`` dynamics stay exact.
    """

    ambient_dim: int
    cutoff: int = 0
    guard: int = 1

    def __post_init__(self):
        if self.cutoff < 0:
            raise TruncationError(f"cutoff must be >= 0, got {self.cutoff}")
        if self.guard < 1:
            raise TruncationError(f"guard must be >= 1, got {self.guard}")
        if self.cutoff + self.guard > self.ambient_dim:
            raise TruncationError(
                f"cutoff + guard = {self.cutoff + self.guard} exceeds ambient "
                f"dimension {self.ambient_dim}"
            )

    @property
    def size(self) -> int:
        return self.ambient_dim + 1

    @classmethod
    def for_cutoff(cls, cutoff: int, guard: int = 6) -> "TruncationSpec":
        return cls(ambient_dim=cutoff + guard, cutoff=cutoff, guard=guard)

    def with_cutoff(self, cutoff: int) -> "TruncationSpec":
        return TruncationSpec(self.ambient_dim, cutoff, min(self.guard, self.ambient_dim - cutoff))


@dataclass(frozen=True)
class Growth:
    """Element bound ``|<r|X|c>| <= const * (1 + c)**degree``."""

    const: float
    degree: float

    def at(self, col) -> np.ndarray:
        return self.const * (1.0 + np.asarray(col, dtype=float)) ** self.degree


def _num(value):
    return _INF if value is None else value


def _opt(value):
    return None if value == _INF else int(value)


@dataclass(frozen=True, eq=False)
class FockOperator:
    entries: np.ndarray
    trusted: int
    label: str = ""
    upper: int | None = None
    lower: int | None = None
    support: int | None = None
    growth: Growth | None = None

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"entries must be square, got shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)
        object.__setattr__(self, "trusted", max(-1, min(int(self.trusted), m.shape[0] - 1)))
        if self.support is not None and self.support <= self.trusted:
            # fully known finite operator: read the exact structure off the data
            rows, cols = np.nonzero(m)
            if len(rows):
                support = int(max(rows.max(), cols.max()))
                upper, lower = int(max((cols - rows).max(), 0)), int(max((rows - cols).max(), 0))
            else:
                support, upper, lower = -1, 0, 0
            object.__setattr__(self, "support", min(self.support, support))
            object.__setattr__(self, "upper", int(min(_num(self.upper), upper)))
            object.__setattr__(self, "lower", int(min(_num(self.lower), lower)))
            if self.growth is None:
                object.__setattr__(self, "growth", Growth(float(np.abs(m).max(initial=0.0)), 0.0))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.dim - 1

    @property
    def is_finite(self) -> bool:
        """True when the whole infinite operator is known exactly."""
        return self.support is not None and self.support <= self.trusted

    def block(self, size: int | None = None) -> np.ndarray:
        """Top-left block up to index ``size`` (default: the trusted region)."""
        n = self.trusted if size is None else size
        return self.entries[: n + 1, : n + 1]

    def restrict(self, trusted: int) -> "FockOperator":
        return self._replace(trusted=min(self.trusted, trusted))

    def _replace(self, **changes) -> "FockOperator":
        kw = dict(
            entries=self.entries,
            trusted=self.trusted,
            label=self.label,
            upper=self.upper,
            lower=self.lower,
            support=self.support,
            growth=self.growth,
        )
        kw.update(changes)
        return FockOperator(**kw)

    def dag(self) -> "FockOperator":
        growth = None
        if self.growth is not None and self.upper is not None:
            growth = Growth(self.growth.const * (1.0 + self.upper) ** self.growth.degree, self.growth.degree)
        return FockOperator(
            self.entries.conj().T,
            self.trusted,
            f"({self.label})^+" if self.label else "",
            upper=self.lower,
            lower=self.upper,
            support=self.support,
            growth=growth,
        )

    def _check(self, other: "FockOperator"):
        if not isinstance(other, FockOperator):
            raise TypeError(f"expected FockOperator, got {type(other).__name__}")
        if other.dim != self.dim:
            raise DimensionMismatch(f"ambient dims differ: {self.dim} vs {other.dim}")

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = identity(TruncationSpec(self.ambient_dim)) * other
        self._check(other)
        growth = None
        if self.growth is not None and other.growth is not None:
            growth = Growth(self.growth.const + other.growth.const, max(self.growth.degree, other.growth.degree))
        support = max(_num(self.support), _num(other.support))
        return FockOperator(
            self.entries + other.entries,
            min(self.trusted, other.trusted),
            _join(self.label, "+", other.label),
            upper=_opt(max(_num(self.upper), _num(other.upper))),
            lower=_opt(max(_num(self.lower), _num(other.lower))),
            support=_opt(support),
            growth=growth,
        )

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        if isinstance(other, (int, float, complex)):
            return self + (-other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        if not isinstance(scalar, (int, float, complex, np.number)):
            return NotImplemented
        growth = None if self.growth is None else Growth(self.growth.const * abs(scalar), self.growth.degree)
        return self._replace(entries=self.entries * scalar, growth=growth, label=self.label)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def __matmul__(self, other):
        return compose(self, other)

    def deviation(self, other: "FockOperator", region: int | None = None) -> float:
        """Max elementwise difference on the common trusted region (or ``region``)."""
        self._check(other)
        n = min(self.trusted, other.trusted) if region is None else region
        if n < 0:
            return 0.0
        return float(np.abs(self.block(n) - other.block(n)).max())

    def __repr__(self):
        return (
            f"FockOperator({self.label or '?'}, dim={self.dim}, trusted={self.trusted}, "
            f"band=({self.lower},{self.upper}), support={self.support})"
        )


def _join(left: str, op: str, right: str) -> str:
    if not left or not right:
        return ""
    return f"{left}{op}{right}"


def compose(X: FockOperator, Y: FockOperator) -> FockOperator:
    """Matrix product ``XY`` with trusted-region bookkeeping.

    An element ``<r|XY|c>`` sums over intermediate levels ``j``; it is exact
    when every ``j`` that can contribute lies inside both trusted regions.
    If either factor has finite support inside the common trusted region the
    intermediate sum is automatically complete; otherwise the region shrinks
    by ``min(upper(X), lower(Y))``, the largest overshoot of ``j`` past
    ``max(r, c)``.
    """
    X._check(Y)
    t_min = min(X.trusted, Y.trusted)
    if min(_num(X.support), _num(Y.support)) <= t_min:
        trusted = t_min
    else:
        reach = min(_num(X.upper), _num(Y.lower))
        trusted = -1 if reach == _INF else t_min - int(reach)
    trusted = max(trusted, -1)

    uX, lX, uY, lY = (_num(v) for v in (X.upper, X.lower, Y.upper, Y.lower))
    sX, sY = _num(X.support), _num(Y.support)
    row_bound = min(sX, sY + lX)
    col_bound = min(sY, sX + uY)
    support = max(row_bound, col_bound)
    upper, lower = uX + uY, lX + lY
    if support != _INF:
        upper, lower = min(upper, support), min(lower, support)

    growth = None
    if X.growth is not None and Y.growth is not None and lY != _INF:
        width = min(uX + lX + 1, uY + lY + 1)
        if width != _INF:
            growth = Growth(
                X.growth.const * Y.growth.const * (1.0 + lY) ** X.growth.degree * width,
                X.growth.degree + Y.growth.degree,
            )
    return FockOperator(
        X.entries @ Y.entries,
        trusted,
        _join(X.label, "·", Y.label),
        upper=_opt(upper),
        lower=_opt(lower),
        support=_opt(support),
        growth=growth,
    )


def commutator(X: FockOperator, Y: FockOperator) -> FockOperator:
    out = compose(X, Y) - compose(Y, X)
    label = f"[{X.label},{Y.label}]" if X.label and Y.label and len(X.label) + len(Y.label) < 80 else ""
    return out._replace(label=label)


# ---- factories -------------------------------------------------------------


def _spec(spec) -> TruncationSpec:
    return spec if isinstance(spec, TruncationSpec) else TruncationSpec(int(spec))


def identity(spec) -> FockOperator:
    spec = _spec(spec)
    return FockOperator(np.eye(spec.size), spec.ambient_dim, "1", 0, 0, None, Growth(1.0, 0.0))


def zero(spec) -> FockOperator:
    spec = _spec(spec)
    return FockOperator(np.zeros((spec.size, spec.size)), spec.ambient_dim, "0", 0, 0, -1, Growth(0.0, 0.0))


def annihilation(spec) -> FockOperator:
    """``a`` with ``<l-1|a|l> = sqrt(l)``; exact up to the ambient edge."""
    spec = _spec(spec)
    m = np.diag(np.sqrt(np.arange(1, spec.size, dtype=float)), 1)
    return FockOperator(m, spec.ambient_dim, "a", upper=1, lower=0, growth=Growth(1.0, 0.5))


def creation(spec) -> FockOperator:
    spec = _spec(spec)
    m = np.diag(np.sqrt(np.arange(1, spec.size, dtype=float)), -1)
    return FockOperator(m, spec.ambient_dim, "a+", upper=0, lower=1, growth=Growth(1.0, 0.5))


def number(spec) -> FockOperator:
    spec = _spec(spec)
    return FockOperator(np.diag(np.arange(spec.size, dtype=float)), spec.ambient_dim, "N", 0, 0, None, Growth(1.0, 1.0))


def shifted_number(spec) -> FockOperator:
    """``M = N + 1``, whose spectrum starts at 1."""
    spec = _spec(spec)
    return FockOperator(
        np.diag(np.arange(1, spec.size + 1, dtype=float)), spec.ambient_dim, "M", 0, 0, None, Growth(1.0, 1.0)
    )


def diagonal_function(func, spec, shift: float = 0.0, label: str = "") -> FockOperator:
    """``func(N + shift)`` as a diagonal matrix (bounded ``func`` assumed)."""
    spec = _spec(spec)
    values = np.asarray(func(np.arange(spec.size, dtype=float) + shift), dtype=complex)
    return FockOperator(np.diag(values), spec.ambient_dim, label, 0, 0, None, None)


def _index_check(index: int, spec: TruncationSpec, what: str):
    if index > spec.ambient_dim:
        raise TruncationError(f"{what} index {index} beyond ambient dimension {spec.ambient_dim}")


def projection_pi(l: int, spec) -> FockOperator:
    """Rank-one projection onto |l>."""
    spec = _spec(spec)
    _index_check(l, spec, "projection")
    if l < 0:
        raise TruncationError(f"projection index must be >= 0, got {l}")
    m = np.zeros((spec.size, spec.size))
    m[l, l] = 1.0
    return FockOperator(m, spec.ambient_dim, f"Pi{l}", 0, 0, l)


def projection_q(L: int, spec) -> FockOperator:
    """Projection onto span{|0>, ..., |L>}; ``L = -1`` gives zero."""
    spec = _spec(spec)
    _index_check(L, spec, "cumulative projection")
    if L < -1:
        raise TruncationError(f"cumulative projection index must be >= -1, got {L}")
    diag = (np.arange(spec.size) <= L).astype(float)
    return FockOperator(np.diag(diag), spec.ambient_dim, f"Q{L}", 0, 0, L)


def truncated_annihilation(L: int, spec) -> FockOperator:
    """``a_L = Q_L a Q_L``."""
    spec = _spec(spec)
    q = projection_q(L, spec)
    op = q @ annihilation(spec) @ q
    return op._replace(label=f"a_{L}")


@dataclass(frozen=True)
class ProjectionFamily:
    """Spectral projections of the number operator on one truncation."""

    spec: TruncationSpec
    pis: tuple = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "pis", tuple(projection_pi(l, self.spec) for l in range(self.spec.size)))

    def pi(self, l: int) -> FockOperator:
        _index_check(l, self.spec, "projection")
        return self.pis[l]

    def q(self, L: int) -> FockOperator:
        return _cached_q(L, self.spec)


@lru_cache(maxsize=256)
def _cached_q(L: int, spec: TruncationSpec) -> FockOperator:
    return projection_q(L, spec)


# ---- identity suite ----------------------------------------------------------


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    indices: tuple
    deviation: float


@dataclass
class IdentityReport:
    checks: list = field(default_factory=list)

    def add(self, name, indices, deviation):
        self.checks.append(IdentityCheck(name, tuple(indices), float(deviation)))

    def worst(self) -> dict:
        out: dict[str, IdentityCheck] = {}
        for c in self.checks:
            if c.name not in out or c.deviation > out[c.name].deviation:
                out[c.name] = c
        return out

    @property
    def max_deviation(self) -> float:
        return max((c.deviation for c in self.checks), default=0.0)

    def failures(self, tol: float = EXACT_TOL) -> list:
        return [c for c in self.worst().values() if not c.deviation <= tol]

    def passed(self, tol: float = EXACT_TOL) -> bool:
        return not self.failures(tol)


IDENTITY_NAMES = (
    "lowering_intertwine",
    "raising_intertwine",
    "cumulative_lowering",
    "cumulative_raising",
    "projection_commutator_lowering",
    "projection_commutator_raising",
    "block_norm",
)


def verify_ladder_identities(spec, max_index: int | None = None, lowering: FockOperator | None = None) -> IdentityReport:
    """Check the projection/ladder identities for every index up to ``max_index``.

    ``lowering`` replaces the annihilation operator (used to inject a faulty
    operator as a negative control).  Deviations are maximum absolute
    elementwise differences on the common trusted region.
    """
    spec = _spec(spec)
    top = spec.ambient_dim - 1 if max_index is None else max_index
    if top > spec.ambient_dim - 1:
        raise TruncationError(
            f"identity range up to {top} needs ambient dimension >= {top + 1}, have {spec.ambient_dim}"
        )
    a = annihilation(spec) if lowering is None else lowering
    ad = a.dag()
    fam = ProjectionFamily(spec)
    report = IdentityReport()
    for l in range(1, top + 1):
        report.add("lowering_intertwine", (l,), (fam.pi(l - 1) @ a).deviation(a @ fam.pi(l)))
        report.add("raising_intertwine", (l,), (ad @ fam.pi(l - 1)).deviation(fam.pi(l) @ ad))
    for L in range(0, top + 1):
        q = fam.q(L)
        report.add("cumulative_lowering", (L,), (q @ a).deviation(a @ fam.q(L + 1)))
        report.add("cumulative_raising", (L,), (q @ ad).deviation(ad @ fam.q(L - 1)))
        report.add("projection_commutator_lowering", (L,), commutator(q, a).deviation(fam.pi(L) @ a))
        report.add("projection_commutator_raising", (L,), commutator(q, ad).deviation(-(ad @ fam.pi(L))))
    for l in range(0, top + 1):
        for s in range(0, top + 1):
            blk = (fam.pi(l) @ a @ fam.pi(s)).entries
            expected = math.sqrt(s) if l == s - 1 else 0.0
            report.add("block_norm", (l, s), abs(np.linalg.norm(blk, 2) - expected))
    return report
