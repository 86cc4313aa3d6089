"""Model Hamiltonians and their occupation-number regularization.

A Hamiltonian is written as an :class:`Expression`: a finite sum of terms,
each a coefficient times an optional spin operator times a word in the
ladder operators of one or more boson modes.  :func:`regularize` evaluates
an expression with every ``a`` replaced by ``a_L = Q_L a Q_L``, which makes
the result a bounded operator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, reduce

import numpy as np
import scipy.linalg as sla

from .fock_core import (
    EXACT_TOL,
    FockOperator,
    TruncationError,
    TruncationSpec,
    annihilation,
    compose,
    identity,
    projection_q,
    truncated_annihilation,
    zero,
)
from .spin_lattice import SpinOperator, SpinSystem, mean_magnetization, spin_identity
from .tensor import TensorOperator

__all__ = [
    "Term",
    "Expression",
    "ladder",
    "spin_factor",
    "scalar",
    "Free",
    "Displaced",
    "TwoMode",
    "SpinBoson",
    "SpinBosonMulti",
    "model_from_dict",
    "regularize",
    "projected_regularization",
    "DisplacedFrame",
    "displaced_frame",
    "TwoModeFrame",
    "two_mode_frame",
    "DEFAULT_MODE_DIM",
]

DEFAULT_MODE_DIM = 14


# ---- expression grammar -------------------------------------------------------


@dataclass(frozen=True)
class Term:
    """``coeff * spin * w_1 w_2 ...`` with letters ``(mode, dagger)``."""

    coeff: complex
    word: tuple = ()
    spin: SpinOperator | None = None


@dataclass(frozen=True)
class Expression:
    terms: tuple = ()

    def __add__(self, other: "Expression") -> "Expression":
        return Expression(self.terms + other.terms)

    def __neg__(self):
        return self * -1

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        return Expression(tuple(Term(t.coeff * c, t.word, t.spin) for t in self.terms))

    __rmul__ = __mul__

    def __matmul__(self, other: "Expression") -> "Expression":
        out = []
        for s in self.terms:
            for o in other.terms:
                if s.spin is None:
                    spin = o.spin
                elif o.spin is None:
                    spin = s.spin
                else:
                    spin = s.spin @ o.spin
                out.append(Term(s.coeff * o.coeff, s.word + o.word, spin))
        return Expression(tuple(out))

    @property
    def modes(self) -> tuple:
        return tuple(sorted({m for t in self.terms for m, _ in t.word}))

    @property
    def spin_dim(self) -> int | None:
        dims = {t.spin.dim for t in self.terms if t.spin is not None}
        if len(dims) > 1:
            raise ValueError(f"spin factors of different dimension: {sorted(dims)}")
        return dims.pop() if dims else None


def ladder(mode: int = 0, dagger: bool = False) -> Expression:
    return Expression((Term(1.0, ((mode, dagger),)),))


def spin_factor(A: SpinOperator) -> Expression:
    return Expression((Term(1.0, (), A),))


def scalar(c: complex) -> Expression:
    return Expression((Term(c),))


# ---- models -------------------------------------------------------------------


@dataclass(frozen=True)
class Free:
    name = "free"

    def expression(self) -> Expression:
        return ladder(dagger=True) @ ladder()


@dataclass(frozen=True)
class Displaced:
    gamma: float = 0.2
    name = "displaced"

    def __post_init__(self):
        if not math.isfinite(self.gamma):
            raise ValueError("gamma must be finite")

    def expression(self) -> Expression:
        a, ad = ladder(), ladder(dagger=True)
        return ad @ a + self.gamma * (a + ad)


@dataclass(frozen=True)
class TwoMode:
    name = "two_mode"

    def expression(self) -> Expression:
        a, ad = ladder(0), ladder(0, True)
        b, bd = ladder(1), ladder(1, True)
        return ad @ a + bd @ b + ad @ b + bd @ a


@dataclass(frozen=True)
class SpinBoson:
    """Mean-field spin coupling plus a single mode coupled to the magnetization.

    The boson kinetic term is frozen (dropped), as in the regularized model.
    """

    J: float = 1.0
    gamma: float = 0.1
    sys: SpinSystem = field(default_factory=lambda: SpinSystem.chain(2))
    r: int | None = None
    name = "spin_boson"

    def __post_init__(self):
        if not (math.isfinite(self.J) and math.isfinite(self.gamma)):
            raise ValueError("couplings must be finite")

    @property
    def gammas(self) -> tuple:
        return (self.gamma,)

    @property
    def volume(self) -> int:
        return self.sys.n_sites

    def check_coupling(self, L: int):
        """With ``r`` set, the lattice size must equal ``L**r``."""
        if self.r is not None and self.volume != L**self.r:
            raise ValueError(f"|V| = {self.volume} but L**r = {L ** self.r} for L = {L}, r = {self.r}")

    def spin_energy(self) -> SpinOperator:
        """``J |V| (sigma_3^V)^2``."""
        s3 = mean_magnetization(self.sys)
        return (s3 @ s3) * (self.J * self.volume)

    def expression(self) -> Expression:
        s3 = spin_factor(mean_magnetization(self.sys))
        out = spin_factor(self.spin_energy())
        for mode, g in enumerate(self.gammas):
            out = out + g * ((ladder(mode) + ladder(mode, True)) @ s3)
        return out

    def with_sys(self, sys: SpinSystem):
        return type(self)(**{**self.__dict__, "sys": sys})


@dataclass(frozen=True)
class SpinBosonMulti(SpinBoson):
    gamma_list: tuple = (0.1, 0.1)
    name = "spin_boson_multi"

    def __post_init__(self):
        if not all(math.isfinite(g) for g in self.gamma_list):
            raise ValueError("couplings must be finite")
        object.__setattr__(self, "gamma_list", tuple(float(g) for g in self.gamma_list))

    @property
    def gammas(self) -> tuple:
        return self.gamma_list


def model_from_dict(cfg: dict):
    """Build a model from a plain mapping such as ``{"variant": "free"}``."""
    cfg = dict(cfg)
    variant = cfg.pop("variant", None)
    if variant == "free":
        return Free()
    if variant == "displaced":
        return Displaced(float(cfg.get("gamma", 0.2)))
    if variant == "two_mode":
        return TwoMode()
    if variant in ("spin_boson", "spin_boson_multi"):
        sites = int(cfg.get("sites", 2))
        common = dict(J=float(cfg.get("J", 1.0)), sys=SpinSystem.chain(sites), r=cfg.get("r"))
        if variant == "spin_boson":
            return SpinBoson(gamma=float(cfg.get("gamma", 0.1)), **common)
        gammas = tuple(float(g) for g in cfg.get("gammas", (0.1, 0.1)))
        return SpinBosonMulti(gamma_list=gammas, **common)
    raise ValueError(f"unknown model variant {variant!r}")


# ---- regularization -------------------------------------------------------------


def _ladder_ops(cutoff, spec):
    if cutoff is None:
        a = annihilation(spec)
    else:
        a = truncated_annihilation(cutoff, spec)
    return {False: a, True: a.dag()}


def _word_single(word, ops, spec) -> FockOperator:
    out = identity(spec)
    for _, dagger in word:
        out = compose(out, ops[dagger])
    # a ladder word has one nonzero per column, a product of sqrt(integer);
    # multiplying the integers first and rooting once keeps a^+ a exactly N
    sq = np.eye(spec.size)
    for _, dagger in word:
        sq = sq @ np.rint(np.asarray(ops[dagger].entries).real ** 2)
    return out._replace(entries=np.sqrt(sq).astype(complex))


def _kron_all(mats):
    return reduce(np.kron, mats)


def regularize(model_or_expr, cutoff: int | None, spec: TruncationSpec, n_modes: int | None = None):
    """Evaluate a Hamiltonian with ``a -> a_L`` in every mode.

    Returns a :class:`FockOperator` for one mode without spin factors, a
    dense array on the Kronecker-product space for several modes, and a
    :class:`TensorOperator` when spin factors are present.  ``cutoff=None``
    keeps the plain truncated ladder operators.
    """
    expr = model_or_expr if isinstance(model_or_expr, Expression) else model_or_expr.expression()
    if cutoff is not None and cutoff + 1 > spec.ambient_dim:
        raise TruncationError(f"cutoff {cutoff} needs ambient dimension >= {cutoff + 1}")
    ops = _ladder_ops(cutoff, spec)
    modes = expr.modes
    n = n_modes if n_modes is not None else (max(modes) + 1 if modes else 1)
    spin_dim = expr.spin_dim

    if n == 1 and spin_dim is None:
        out = zero(spec)
        for t in expr.terms:
            out = out + _word_single(t.word, ops, spec) * t.coeff
        result = out._replace(label="H_L" if cutoff is not None else "H")
        if isinstance(model_or_expr, Free) and cutoff is not None:
            alt = projected_regularization(model_or_expr, cutoff, spec)
            if result.deviation(alt) > EXACT_TOL:
                raise RuntimeError("the two free-model regularizations disagree")
        return result

    eye = np.eye(spec.size, dtype=complex)
    boson_dim = spec.size**n

    def boson_word(word):
        mats = [eye] * n
        out = np.eye(boson_dim, dtype=complex)
        for mode, dagger in word:
            factors = list(mats)
            factors[mode] = np.asarray(ops[dagger].entries)
            out = out @ _kron_all(factors)
        return out

    if spin_dim is None:
        return sum(t.coeff * boson_word(t.word) for t in expr.terms)
    terms = []
    for t in expr.terms:
        A = t.spin if t.spin is not None else spin_identity(spin_dim)
        terms.append((A.matrix, t.coeff * boson_word(t.word)))
    return TensorOperator(spin_dim, boson_dim, tuple(terms), "H_VL")


def projected_regularization(model, cutoff: int, spec: TruncationSpec) -> FockOperator:
    """``Q_L H Q_L`` for single-mode models."""
    H = regularize(model.expression(), None, spec)
    q = projection_q(cutoff, spec)
    return (q @ H @ q)._replace(label=f"Q{cutoff}HQ{cutoff}")


# ---- displaced frame --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DisplacedFrame:
    """Operators of the shifted mode ``b = a + gamma``.

    ``W`` is the truncated displacement ``exp(gamma (a^+ - a))`` so that
    ``W^+ a W = a + gamma`` on low levels.  ``defect`` measures how much of
    the displaced trusted levels leaks into the top of the ambient space.
    """

    gamma: float
    spec: TruncationSpec
    W: np.ndarray
    b: FockOperator
    trusted: int
    defect: float

    def pi(self, l: int) -> np.ndarray:
        """Projection onto the ``l``-th eigenvector of ``b^+ b``."""
        if not 0 <= l <= self.trusted:
            raise TruncationError(f"displaced projection {l} outside trusted range 0..{self.trusted}")
        v = self.W.conj().T[:, l]
        return np.outer(v, v.conj())

    def q(self, L: int) -> np.ndarray:
        if not -1 <= L <= self.trusted:
            raise TruncationError(f"displaced cutoff {L} outside trusted range -1..{self.trusted}")
        V = self.W.conj().T[:, : L + 1]
        return V @ V.conj().T

    def regularized_hamiltonian(self, L: int) -> np.ndarray:
        """``b_L^+ b_L - gamma^2`` with ``b_L = Q_L^(b) b Q_L^(b)``."""
        q = self.q(L)
        bL = q @ np.asarray(self.b.entries) @ q
        return bL.conj().T @ bL - self.gamma**2 * np.eye(self.spec.size)

    def lowest_levels(self, L: int, count: int = 6) -> np.ndarray:
        """Lowest eigenvalues of the regularized Hamiltonian on the range of ``Q_L^(b)``.

        The complement of that range is annihilated by ``b_L`` and only adds
        copies of ``-gamma^2`` that are artifacts of the cutoff.
        """
        V = self.W.conj().T[:, : L + 1]
        H = V.conj().T @ self.regularized_hamiltonian(L) @ V
        return np.linalg.eigvalsh((H + H.conj().T) / 2)[:count]


def displaced_frame(gamma: float, spec: TruncationSpec, tol: float = 1e-8) -> DisplacedFrame:
    a = annihilation(spec)
    gen = gamma * (np.asarray(a.dag().entries) - np.asarray(a.entries))
    W = sla.expm(gen)
    T = min(spec.cutoff + 1, spec.ambient_dim)
    inner = T + (spec.ambient_dim - T) // 2
    qT = np.asarray(projection_q(T, spec).entries)
    qi = np.asarray(projection_q(inner, spec).entries)
    defect = float(np.linalg.norm(qT @ W.conj().T @ qi @ W @ qT - qT, 2))
    if not defect <= tol:
        raise TruncationError(
            f"ambient dimension {spec.ambient_dim} too small for gamma = {gamma}: displacement defect {defect:.2e}"
        )
    b = (a + gamma)._replace(label="b")
    return DisplacedFrame(gamma, spec, W, b, T, defect)


# ---- two-mode frame ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TwoModeFrame:
    """Modes ``a``, ``b`` and their rotated combinations ``A``, ``B`` on a product space.

    Basis index ``i = n_a * (D + 1) + n_b``.  Every Hamiltonian here conserves
    the total number ``n_a + n_b``, and sectors with total ``<= D`` are
    represented completely; those are the trusted levels.
    """

    mode_dim: int

    @cached_property
    def spec(self) -> TruncationSpec:
        return TruncationSpec(self.mode_dim)

    @cached_property
    def a(self) -> np.ndarray:
        x = np.asarray(annihilation(self.spec).entries)
        return np.kron(x, np.eye(self.spec.size))

    @cached_property
    def b(self) -> np.ndarray:
        x = np.asarray(annihilation(self.spec).entries)
        return np.kron(np.eye(self.spec.size), x)

    @cached_property
    def A(self) -> np.ndarray:
        return (self.a + self.b) / math.sqrt(2)

    @cached_property
    def B(self) -> np.ndarray:
        return (self.a - self.b) / math.sqrt(2)

    @cached_property
    def total(self) -> np.ndarray:
        n = np.arange(self.spec.size)
        return (n[:, None] + n[None, :]).ravel()

    def levels(self, top: int | None = None) -> np.ndarray:
        """Basis indices with total number ``<= top`` (default ``D``)."""
        top = self.mode_dim if top is None else top
        return np.flatnonzero(self.total <= top)

    def restrict(self, X: np.ndarray, top: int | None = None) -> np.ndarray:
        idx = self.levels(top)
        return X[np.ix_(idx, idx)]

    @cached_property
    def _number_A_eigen(self):
        """Eigenpairs of ``A^+ A`` sector by sector (complete sectors only)."""
        NA = self.A.conj().T @ self.A
        vals, vecs = [], []
        for n in range(self.mode_dim + 1):
            idx = np.flatnonzero(self.total == n)
            w, v = np.linalg.eigh(NA[np.ix_(idx, idx)])
            full = np.zeros((len(self.total), len(idx)), dtype=complex)
            full[idx] = v
            vals.append(np.round(w).astype(int))
            vecs.append(full)
        return np.concatenate(vals), np.concatenate(vecs, axis=1)

    def q_A(self, L: int) -> np.ndarray:
        """Projection of ``A^+ A`` onto eigenvalues ``<= L`` within the trusted sectors."""
        vals, vecs = self._number_A_eigen
        V = vecs[:, vals <= L]
        return V @ V.conj().T

    def regularized_hamiltonian(self, L: int) -> np.ndarray:
        """``2 A_L^+ A_L`` with ``A_L = Q_L^(A) A Q_L^(A)``."""
        q = self.q_A(L)
        AL = q @ self.A @ q
        return 2 * AL.conj().T @ AL

    def hamiltonian(self) -> np.ndarray:
        """``a^+ a + b^+ b + a^+ b + b^+ a`` on the product space."""
        a, b = self.a, self.b
        ad, bd = a.conj().T, b.conj().T
        return ad @ a + bd @ b + ad @ b + bd @ a


def two_mode_frame(mode_dim: int = DEFAULT_MODE_DIM) -> TwoModeFrame:
    if mode_dim < 1:
        raise TruncationError("per-mode dimension must be >= 1")
    return TwoModeFrame(mode_dim)

