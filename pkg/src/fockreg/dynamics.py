"""Heisenberg evolution of cutoff Hamiltonians.

Three routes are provided and cross-checked against each other: a dense
eigendecomposition (the reference), the multiple-commutator series, and the
closed forms available for the free and spin-boson models.  Spin-boson
evolution is done sector by sector because the mean magnetization commutes
with the whole Hamiltonian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import gammainc

from .fock_core import (
    FockOperator,
    Growth,
    TruncationError,
    TruncationSpec,
    annihilation,
    commutator,
    compose,
    identity,
    projection_pi,
    projection_q,
    truncated_annihilation,
)
from .models import SpinBoson
from .seminorms import DecayFunction, combined_seminorm
from .spin_lattice import (
    SpinOperator,
    axis_index,
    diagonal_spin,
    levi_civita,
    mean_magnetization,
    pauli,
    product_state,
    sector_decompose,
    sector_state,
)
from .tensor import TensorOperator

__all__ = [
    "HERMITIAN_TOL",
    "NonHermitianError",
    "EvolutionResult",
    "evolve_oracle",
    "multiple_commutator",
    "evolution_increment",
    "evolve_series",
    "free_phase_operator",
    "closed_form_free",
    "coupling_operator",
    "sector_unitaries",
    "evolve_spin_boson_sectored",
    "spin_boson_series",
    "first_order_spin_boson",
    "SpinClosedForm",
    "alpha_spin_closed_form",
    "default_relevant_states",
]

HERMITIAN_TOL = 1e-10


class NonHermitianError(ValueError):
    pass


@dataclass(frozen=True)
class EvolutionResult:
    operator: object
    t: float
    method: str
    cutoffs: tuple = (None, None)
    series_terms_used: int | None = None
    remainder_bound: float | None = None


def _check_hermitian(m: np.ndarray, what: str = "Hamiltonian"):
    dev = float(np.abs(m - m.conj().T).max(initial=0.0))
    if dev > HERMITIAN_TOL:
        raise NonHermitianError(f"{what} is not Hermitian (deviation {dev:.2e})")


def _unitary_from_eigh(h: np.ndarray, t: float) -> np.ndarray:
    if t == 0:
        return np.eye(h.shape[0], dtype=complex)
    w, v = np.linalg.eigh((h + h.conj().T) / 2)
    defect = np.abs(v.conj().T @ v - np.eye(len(w))).max(initial=0.0)
    if defect > HERMITIAN_TOL:
        raise RuntimeError(f"eigenvector basis not unitary (defect {defect:.2e})")
    return (v * np.exp(1j * w * t)) @ v.conj().T


def _evolve_fock(H: FockOperator, X: FockOperator, t: float) -> FockOperator:
    T_H = H.trusted
    if H.upper == 0 and H.lower == 0:
        # diagonal generator: exact phases on every level
        _check_hermitian(H.block())
        d = np.exp(1j * np.diag(H.entries) * t)
        m = d[:, None] * np.asarray(X.entries) * d.conj()[None, :]
        return X._replace(entries=m, trusted=min(X.trusted, T_H), label=f"alpha({X.label})" if X.label else "")
    if not H.is_finite:
        raise TruncationError("oracle evolution needs a diagonal or finitely supported Hamiltonian")
    s = H.support
    if s > X.trusted:
        raise TruncationError(f"Hamiltonian support {s} exceeds the trusted region {X.trusted} of the observable")
    blk = H.entries[: s + 1, : s + 1]
    _check_hermitian(blk)
    U = np.eye(H.dim, dtype=complex)
    U[: s + 1, : s + 1] = _unitary_from_eigh(blk, t)
    m = U @ np.asarray(X.entries) @ U.conj().T
    upper = None if X.upper is None else X.upper + s
    lower = None if X.lower is None else X.lower + s
    support = None if X.support is None else max(X.support, s)
    growth = None
    if X.growth is not None and X.upper is not None and X.lower is not None:
        w = X.upper + X.lower + 1
        g = X.growth.degree
        growth = Growth(X.growth.const * math.sqrt(w) * (2 + 2 * s + X.upper + X.lower) ** g, g)
    return FockOperator(m, X.trusted, f"alpha({X.label})" if X.label else "", upper, lower, support, growth)


def evolve_oracle(H, X, t: float, cutoffs: tuple = (None, None)) -> EvolutionResult:
    """``e^{iHt} X e^{-iHt}`` by eigendecomposition.

    For :class:`FockOperator` input the Hamiltonian must be diagonal or have
    finite support inside the trusted region; the unitary is then exactly
    the identity above the support and the result keeps the trusted region
    of ``X``.  Tensor-space and plain-array inputs are treated densely.
    """
    if isinstance(H, FockOperator):
        if not isinstance(X, FockOperator):
            raise TypeError("a FockOperator Hamiltonian needs a FockOperator observable")
        return EvolutionResult(_evolve_fock(H, X, t), t, "oracle", cutoffs)
    if isinstance(H, TensorOperator):
        if isinstance(X, FockOperator):
            X = TensorOperator.product(None, X, spin_dim=H.spin_dim)
        elif isinstance(X, SpinOperator):
            X = TensorOperator.product(X, None, boson_dim=H.boson_dim)
        Hm = H.to_dense()
        _check_hermitian(Hm)
        U = _unitary_from_eigh(Hm, t)
        out = U @ X.to_dense() @ U.conj().T
        return EvolutionResult(TensorOperator.from_dense(out, H.spin_dim, H.boson_dim), t, "oracle", cutoffs)
    Hm = np.asarray(H, dtype=complex)
    _check_hermitian(Hm)
    U = _unitary_from_eigh(Hm, t)
    return EvolutionResult(U @ np.asarray(X, dtype=complex) @ U.conj().T, t, "oracle", cutoffs)


def evolution_increment(H: FockOperator, X: FockOperator, t: float) -> FockOperator:
    """``e^{iHt} X e^{-iHt} - X`` as a finite operator.

    Needs ``H`` with finite support ``s`` and ``X`` with a finite band; the
    unitary is the identity above ``s``, so the increment vanishes outside
    rows and columns ``<= s + max(upper, lower)``.
    """
    if not H.is_finite:
        raise TruncationError("a finite increment needs a finitely supported Hamiltonian")
    if X.upper is None or X.lower is None:
        raise TruncationError("a finite increment needs a banded observable")
    reach = H.support + max(X.upper, X.lower)
    if reach > X.trusted:
        raise TruncationError(f"increment reaches level {reach} beyond the trusted region {X.trusted}")
    evolved = _evolve_fock(H, X, t)
    m = np.asarray(evolved.entries) - np.asarray(X.entries)
    m[reach + 1 :, :] = 0
    m[:, reach + 1 :] = 0
    label = f"alpha({X.label})-{X.label}" if X.label else ""
    return FockOperator(m, X.trusted, label, support=reach)


def multiple_commutator(H, X, m: int):
    """``[H, X]_m``: ``X`` for ``m = 0``, then ``[H, [H, X]_{m-1}]``.

    Raises :class:`TruncationError` if a :class:`FockOperator` commutator
    runs out of trusted region.  For :class:`FockOperator` input the band and
    trust metadata follow the usual product rule, while the entries are
    computed with fewer roundings: a diagonal ``H`` acts as
    ``(h_r - h_c)^m X_rc`` and any other ``H`` is iterated in extended
    precision.  Other operator types (including exact symbolic matrices)
    are iterated directly.
    """
    if m < 0:
        raise ValueError("commutator depth must be >= 0")
    if not isinstance(X, FockOperator):
        out = X
        for _ in range(m):
            out = H.comm(out) if hasattr(H, "comm") else H @ out - out @ H
        return out
    out = X
    for depth in range(1, m + 1):
        out = commutator(H, out)
        if out.trusted < 0:
            raise TruncationError(f"trusted region exhausted at commutator depth {depth}")
    if m == 0:
        return out
    if H.upper == 0 and H.lower == 0:
        h = np.diag(H.entries)
        if not np.any(np.imag(h)):
            h = np.real(h)  # complex pow is not exact even for integer bases
        entries = (h[:, None] - h[None, :]) ** m * np.asarray(X.entries)
    else:
        hx = np.asarray(H.entries).astype(np.clongdouble)
        acc = np.asarray(X.entries).astype(np.clongdouble)
        for _ in range(m):
            acc = hx @ acc - acc @ hx
        entries = acc.astype(complex)
    return out._replace(entries=entries)


def _opnorm(X: FockOperator) -> float:
    if X.support is not None and X.support < 0:
        return 0.0
    return float(np.linalg.norm(X.block(), 2))


def _series_increment(H, X, t, tol, max_terms):
    """``sum_{m >= 1} (it)^m/m! [H, X]_m`` truncated with a certified remainder.

    Every term is a commutator with the finite ``H`` and hence finite, so the
    increment is finite even when ``X`` is not.
    """
    c1 = commutator(H, X)
    if not c1.is_finite:
        raise TruncationError("remainder not certifiable: [H, X] is not known exactly")
    h, c = _opnorm(H), _opnorm(c1)
    x = 2 * h * abs(t)

    def remainder(M):
        if c == 0 or t == 0:
            return 0.0
        if h == 0:
            return 0.0 if M >= 1 else abs(t) * c
        return c / (2 * h) * math.exp(x) * float(gammainc(M + 1, x))

    M = 0
    while remainder(M) > tol:
        M += 1
        if M > max_terms:
            raise TruncationError(f"remainder not certifiable within {max_terms} terms")
    total = c1 * 0.0
    term = X
    coeff = 1.0 + 0j
    for m in range(1, M + 1):
        term = c1 if m == 1 else commutator(H, term)
        if term.trusted < 0:
            raise TruncationError(f"trusted region exhausted at commutator depth {m}")
        coeff *= 1j * t / m
        total = total + term * coeff
    return total, M, remainder(M)


def evolve_series(
    H: FockOperator, X: FockOperator, t: float, tol: float = 1e-12, max_terms: int = 400, steps: int | None = None
) -> EvolutionResult:
    """Partial sums of ``sum_m (it)^m/m! [H, X]_m`` with a certified remainder.

    Uses ``||[H, X]_m|| <= (2||H||)^{m-1} ||[H, X]||`` so the observable itself
    may be unbounded as long as its first commutator with ``H`` is finite.
    Long times are split into ``steps`` equal pieces (chosen automatically so
    the terms stay small enough to sum without cancellation); remainders of
    the pieces add because the evolution is isometric.  The evolved operator
    is carried as ``X + F`` with ``F`` finite, so the structure of ``X`` is
    not re-propagated through every step.
    """
    if not H.is_finite:
        raise TruncationError("series evolution needs a bounded (finitely supported) Hamiltonian")
    _check_hermitian(H.block())
    if steps is None:
        steps = max(1, math.ceil(_opnorm(H) * abs(t) / 4))
    dt = t / steps
    F = None
    used, rem = 0, 0.0
    for _ in range(steps):
        inc, M, r = _series_increment(H, X, dt, tol / (2 * steps), max_terms)
        used, rem = max(used, M), rem + r
        if F is not None:
            inc_f, M, r = _series_increment(H, F, dt, tol / (2 * steps), max_terms)
            used, rem = max(used, M), rem + r
            inc = inc + F + inc_f
        F = inc
    out = X if F is None else X + F
    out = out._replace(label=f"alpha({X.label})" if X.label else "")
    return EvolutionResult(out, t, "series", (None, None), used, rem)


def free_phase_operator(L: int, t: float, spec) -> FockOperator:
    """``F_L(t) = 1 - Q_L + e^{itL} Pi_L + e^{-it} Q_{L-1}``."""
    spec = spec if isinstance(spec, TruncationSpec) else TruncationSpec(int(spec))
    F = identity(spec) - projection_q(L, spec) + projection_pi(L, spec) * np.exp(1j * t * L)
    F = F + projection_q(L - 1, spec) * np.exp(-1j * t)
    return F._replace(label=f"F{L}", growth=Growth(1.0, 0.0))


def closed_form_free(L: int, t: float, spec) -> EvolutionResult:
    """Free cutoff evolution of ``a``: ``F_L(t) a``."""
    spec = spec if isinstance(spec, TruncationSpec) else TruncationSpec(int(spec))
    if L < 0 or L + 2 > spec.ambient_dim:
        raise TruncationError(f"closed form needs 0 <= L and L + 2 <= D; got L = {L}, D = {spec.ambient_dim}")
    op = compose(free_phase_operator(L, t, spec), annihilation(spec))
    return EvolutionResult(op._replace(label=f"alpha_{L}(a)"), t, "closed_form", (L, None))


# ---- spin-boson -----------------------------------------------------------------


def coupling_operator(L: int, spec) -> FockOperator:
    """``a_L + a_L^+``."""
    aL = truncated_annihilation(L, spec)
    return aL + aL.dag()


def _mode_unitary(x_block: np.ndarray, size: int, theta: float) -> np.ndarray:
    U = np.eye(size, dtype=complex)
    n = x_block.shape[0]
    U[:n, :n] = _unitary_from_eigh(x_block, theta)
    return U


def sector_unitaries(model: SpinBoson, L: int, spec: TruncationSpec, t: float) -> list:
    """``(m, indices, e^{i h_m t})`` for every magnetization sector.

    ``h_m = J|V| m^2 + m sum_j gamma_j (a_{j,L} + a_{j,L}^+)`` acts on the
    boson modes only; its exponential factorizes over modes.
    """
    x = np.asarray(coupling_operator(L, spec).entries)[: L + 1, : L + 1]
    out = []
    V = model.volume
    for sec in sector_decompose(model.sys):
        m = sec.m
        factors = [_mode_unitary(x, spec.size, g * m * t) for g in model.gammas]
        U = factors[0]
        for f in factors[1:]:
            U = np.kron(U, f)
        out.append((m, sec.indices, U * np.exp(1j * model.J * V * m * m * t)))
    return out


def _as_tensor(X, spin_dim, boson_dim) -> TensorOperator:
    if isinstance(X, TensorOperator):
        return X
    if isinstance(X, SpinOperator):
        return TensorOperator.product(X, None, boson_dim=boson_dim)
    if isinstance(X, FockOperator):
        if X.dim != boson_dim:
            raise ValueError(f"boson dimension {X.dim} does not match {boson_dim}")
        return TensorOperator.product(None, X, spin_dim=spin_dim)
    raise TypeError(f"cannot evolve {type(X).__name__}")


def evolve_spin_boson_sectored(model: SpinBoson, X, t: float, L: int, spec: TruncationSpec) -> EvolutionResult:
    """Exact evolution under the regularized spin-boson Hamiltonian.

    ``e^{iHt} = sum_m P_m (x) e^{i h_m t}`` where ``P_m`` projects onto a
    magnetization sector, so each term ``A (x) Y`` of ``X`` evolves into
    ``sum_{m,m'} P_m A P_m' (x) U_m Y U_m'^+``.  Boson factors are exact on
    levels ``<= D`` provided ``L`` plus the band of ``Y`` stays below ``D``.
    """
    if L + 1 > spec.ambient_dim:
        raise TruncationError(f"cutoff {L} needs ambient dimension >= {L + 1}")
    boson_dim = spec.size ** len(model.gammas)
    Y = _as_tensor(X, model.sys.dim, boson_dim)
    if Y.spin_dim != model.sys.dim or Y.boson_dim != boson_dim:
        raise ValueError("observable does not act on the model's tensor space")
    sectors = sector_unitaries(model, L, spec, t)
    masks = []
    for _, idx, U in sectors:
        d = np.zeros(model.sys.dim)
        d[idx] = 1.0
        masks.append((sp.diags(d, format="csr"), U))
    terms = []
    for A, B in Y.terms:
        for Pm, Um in masks:
            left = Pm @ A
            if left.nnz == 0:
                continue
            UB = Um @ B
            for Pn, Un in masks:
                block = (left @ Pn).tocsr()
                block.eliminate_zeros()
                if block.nnz:
                    terms.append((block, UB @ Un.conj().T))
    out = TensorOperator(model.sys.dim, boson_dim, tuple(terms), "alpha")
    return EvolutionResult(out, t, "sectored", (L, model.volume))


def spin_boson_series(model: SpinBoson, L: int, spec: TruncationSpec, t: float, n_terms: int, mode: int = 0) -> EvolutionResult:
    """``sum_{n <= n_terms} (i gamma t sigma_3^V)^n / n! [a_L + a_L^+, a]_n``.

    Single-mode interaction-picture series for the evolved annihilation
    operator.  The remainder bound uses ``||(sigma_3^V)^n|| <= 1`` and
    ``||[x, a]_n|| <= (2||x||)^{n-1} ||[x, a]||``.
    """
    g = model.gammas[mode]
    x = coupling_operator(L, spec)
    a = annihilation(spec)
    s3 = mean_magnetization(model.sys).matrix
    spin_pow = sp.identity(model.sys.dim, dtype=complex, format="csr")
    term = a
    terms = []
    for n in range(n_terms + 1):
        if n:
            term = commutator(x, term)
            spin_pow = spin_pow @ s3
        coeff = (1j * g * t) ** n / math.gamma(n + 1)
        terms.append((spin_pow.copy(), coeff * np.asarray(term.entries)))
    c1 = _opnorm(commutator(x, a))
    h = _opnorm(x)
    y = 2 * h * abs(g * t)
    rem = 0.0 if y == 0 else c1 / (2 * h) * math.exp(y) * float(gammainc(n_terms + 1, y))
    op = TensorOperator(model.sys.dim, spec.size, tuple(terms), "series")
    return EvolutionResult(op, t, "series", (L, model.volume), n_terms, rem)


def first_order_spin_boson(model: SpinBoson, L: int, spec: TruncationSpec, t: float) -> TensorOperator:
    """``a + i gamma t sigma_3^V (a^2 Pi_{L+1} + a a^+ Pi_L - Q_L)``."""
    a = annihilation(spec)
    ad = a.dag()
    first = a @ a @ projection_pi(L + 1, spec) + a @ ad @ projection_pi(L, spec) - projection_q(L, spec)
    s3 = mean_magnetization(model.sys)
    dim_b = spec.size
    return TensorOperator.product(None, a, spin_dim=model.sys.dim) + TensorOperator.product(
        s3, first, boson_dim=dim_b
    ) * (1j * model.gamma * t)


# ---- spin observables --------------------------------------------------------------


def default_relevant_states(sys) -> list:
    """All spins up, and the uniform state of the most balanced sector."""
    return [product_state(sys), sector_state(sys, (sys.n_sites + 1) // 2)]


@dataclass(frozen=True, eq=False)
class SpinClosedForm:
    candidate: TensorOperator
    exact: TensorOperator
    residual: float
    residual_verbatim: float
    states: tuple


def _trig_products(model: SpinBoson, t: float):
    s = 2 * model.J * t * model.sys.magnetizations
    c, sn = np.cos(s), np.sin(s)
    return diagonal_spin(c * c), diagonal_spin(sn * c), diagonal_spin(sn * sn)


def _rotation_combination(term_alpha, term_beta_list, sandwich, cc, sc, ss, boson_dim):
    """``X_a C^2 - 2 sum_b eps X_b S C + s3 X_a s3 S^2`` with trig factors on the right."""
    def right(op, D):
        return op @ TensorOperator.product(D, None, boson_dim=boson_dim)

    out = right(term_alpha, cc) + right(sandwich, ss)
    for eps, Xb in term_beta_list:
        out = out + right(Xb, sc) * (-2.0 * eps)
    return out


def alpha_spin_closed_form(
    model: SpinBoson,
    alpha,
    site,
    t: float,
    L: int,
    spec: TruncationSpec,
    f: DecayFunction | None = None,
    k: int = 0,
    states=None,
) -> SpinClosedForm:
    """Large-volume form of the evolved ``sigma_alpha^i`` and its distance to the exact evolution.

    The candidate is ``s_a cos^2 S - 2 eps_{3ab} s_b sin S cos S + s3 s_a s3 sin^2 S``
    with ``S = 2 J t sigma_3^V``.  ``residual`` is the largest combined
    seminorm of (exact - candidate) over ``states``; ``residual_verbatim``
    does the same for the finite-volume expression in which every
    ``s_a`` is replaced by its evolution under the interaction term alone.
    """
    f = f or DecayFunction(1.0)
    sys = model.sys
    states = tuple(states or default_relevant_states(sys))
    boson_dim = spec.size ** len(model.gammas)
    a_idx = axis_index(alpha)
    s_alpha = pauli(alpha, site, sys)
    s3 = pauli("z", site, sys)
    betas = [(levi_civita(3, a_idx + 1, b + 1), pauli("xyz"[b], site, sys)) for b in range(3)]
    betas = [(e, P) for e, P in betas if e != 0]
    cc, sc, ss = _trig_products(model, t)

    def lift(A):
        return TensorOperator.product(A, None, boson_dim=boson_dim)

    candidate = _rotation_combination(
        lift(s_alpha), [(e, lift(P)) for e, P in betas], lift(s3 @ s_alpha @ s3), cc, sc, ss, boson_dim
    )
    exact = evolve_spin_boson_sectored(model, s_alpha, t, L, spec).operator

    free_spin = type(model)(**{**model.__dict__, "J": 0.0})
    beta_alpha = evolve_spin_boson_sectored(free_spin, s_alpha, t, L, spec).operator
    beta_others = [(e, evolve_spin_boson_sectored(free_spin, P, t, L, spec).operator) for e, P in betas]
    s3t = lift(s3)
    verbatim = _rotation_combination(beta_alpha, beta_others, s3t @ beta_alpha @ s3t, cc, sc, ss, boson_dim)

    def worst(op):
        diff = exact - op
        return max(combined_seminorm(diff, f, k, psi) for psi in states)

    return SpinClosedForm(candidate, exact, worst(candidate), worst(verbatim), states)

