"""Decay functions and the physical seminorms built from them.

Two single-mode forms are provided.  The summed form

    sum_{l,s} f(l) s**k |<l|X|s>|

is what all cutoff estimates are stated against and is used as the canonical
diagnostic.  It bounds ``||f(N) X N**k||`` but not the mirrored term, so the
operator-norm form

    max(||f(N) X N**k||, ||N**k X f(N)||)

is only dominated by the larger of the summed forms of ``X`` and ``X^+``.

The summed form needs every element of ``X``; the part outside the trusted
region is replaced by a certified bound computed from the operator's band and
growth metadata.  For spin (x) boson operators the seminorm pairs a spin
vector with the boson weighting, see :func:`combined_seminorm`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import gammaincc

from .fock_core import FockOperator
from .spin_lattice import RelevantState
from .tensor import TensorOperator

__all__ = [
    "UnboundedTailError",
    "DecayFunction",
    "decay_function",
    "DECAY_FAMILIES",
    "SeminormIndex",
    "lassner_sum",
    "lassner_opnorm",
    "combined_seminorm",
    "weight_offset",
]


class UnboundedTailError(ValueError):
    """The omitted part of a seminorm cannot be certified."""


@dataclass(frozen=True)
class DecayFunction:
    """``f(x) = x**power * exp(-beta * x**nu)`` on ``x >= 0``.

    With ``power = 0`` and ``0 < nu <= 1`` this is positive, bounded,
    continuous and decreasing faster than any inverse power.  ``power > 0``
    arises from :meth:`times_x`; such functions vanish at the origin.
    """

    beta: float = 1.0
    nu: float = 1.0
    power: int = 0
    name: str = ""

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not 0 < self.nu <= 1:
            raise ValueError(f"nu must lie in (0, 1], got {self.nu}")
        if self.power < 0:
            raise ValueError("power must be >= 0")
        if not self.name:
            base = f"exp(-{self.beta:g}x)" if self.nu == 1 else f"exp(-{self.beta:g}x^{self.nu:g})"
            object.__setattr__(self, "name", base if self.power == 0 else f"x^{self.power}{base}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.exp(-self.beta * x**self.nu)
        if self.power:
            out = out * x**self.power
        return out

    def times_x(self) -> "DecayFunction":
        return DecayFunction(self.beta, self.nu, self.power + 1)

    def shift_constant(self) -> float:
        """``sup_{x >= 1} f(x - 1) / f(x)``."""
        return math.exp(self.beta)

    def _log_term(self, s, shift, power, offset):
        y = s - shift
        with np.errstate(divide="ignore"):
            out = -self.beta * y**self.nu + power * np.log(s + offset)
            if self.power:
                out = out + self.power * np.log(y)
        return out

    def tail_bound(self, shift: float, power: float, start: int, offset: float = 1.0) -> float:
        """Upper bound on ``sum_{s >= start} f(s - shift) (s + offset)**power``.

        Terms are summed explicitly until ``(s + offset)**power * y**q *
        exp(-beta y**nu / 2)`` (with ``y = s - shift``) is provably decreasing;
        the rest is bounded by that prefactor times the sum of
        ``exp(-beta y**nu / 2)``, which in turn is bounded by its first term
        plus the incomplete-gamma integral.
        """
        start = int(max(start, math.ceil(shift)))
        if start + offset <= 0 and power != 0:
            start = int(math.floor(-offset)) + 1
        b = self.beta / 2.0
        c = max(0.0, -(shift + offset))
        p_eff = self.power + (2 * power if c > 0 else power)
        y1 = max(2 * c, 1.0, (2.0 * max(p_eff, 0.0) / (self.beta * self.nu)) ** (1.0 / self.nu))
        s_end = max(start, int(math.ceil(shift + y1))) + 64
        if s_end - start > 50_000_000:
            raise UnboundedTailError("decay too slow for a certified tail")
        total = 0.0
        for lo in range(start, s_end, 1_000_000):
            s = np.arange(lo, min(lo + 1_000_000, s_end), dtype=float)
            total += float(np.exp(self._log_term(s, shift, power, offset)).sum())
        y_e = s_end - shift
        log_k = self._log_term(float(s_end), shift, power, offset) + b * y_e**self.nu
        a = 1.0 / self.nu
        integral = a * b ** (-a) * gamma_fn(a) * gammaincc(a, b * y_e**self.nu)
        remainder = math.exp(log_k) * (math.exp(-b * y_e**self.nu) + integral)
        return total + remainder

    def tail(self, k: int, S: int) -> float:
        """Upper bound on ``sum_{s > S} f(s - 1) s**(k + 1/2)``."""
        return self.tail_bound(shift=1, power=k + 0.5, start=S + 1, offset=0.0)

    def moment(self, k: int, start: int = 1) -> float:
        """Upper bound on ``sum_{l >= start} f(l) l**k``."""
        return self.tail_bound(shift=0, power=k, start=start, offset=0.0)

    def membership_profile(self, kmax: int = 12, xmax: float = 1e6, points: int = 2000) -> np.ndarray:
        """``sup_x f(x)(1+x)**k`` on a log grid, one entry per ``k <= kmax``."""
        x = np.concatenate([[0.0], np.logspace(-3, math.log10(xmax), points)])
        return np.array([float(np.max(self(x) * (1 + x) ** k)) for k in range(kmax + 1)])

    def is_admissible(self, kmax: int = 12, xmax: float = 1e6) -> bool:
        """Numerical membership test: bounded profiles that have decayed by ``xmax``."""
        prof = self.membership_profile(kmax, xmax)
        end = np.array([float(self(xmax) * (1 + xmax) ** k) for k in range(kmax + 1)])
        return bool(np.all(np.isfinite(prof)) and np.all(end < 1e-12 * np.maximum(prof, 1e-300) + 1e-300))


DECAY_FAMILIES = {
    "exp": lambda beta=1.0: DecayFunction(beta=beta, nu=1.0),
    "stretched_exp": lambda beta=1.0, nu=0.5: DecayFunction(beta=beta, nu=nu),
}


def decay_function(name: str = "exp", **params) -> DecayFunction:
    try:
        factory = DECAY_FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown decay family {name!r}; choose from {sorted(DECAY_FAMILIES)}") from None
    return factory(**params)


def weight_offset(weight: str) -> int:
    """Spectrum offset of the weighting operator: 0 for ``N``, 1 for ``M = N + 1``."""
    if weight == "N":
        return 0
    if weight == "M":
        return 1
    raise ValueError(f"weight must be 'N' or 'M', got {weight!r}")


def lassner_sum(X: FockOperator, f: DecayFunction, k: int, weight: str = "N") -> tuple:
    """Summed seminorm of ``X``: ``(value, truncation_bound)``.

    ``value`` sums over the trusted region; ``truncation_bound`` certifies the
    omitted elements using the declared band and growth of ``X``.  Zero when
    ``X`` is known exactly everywhere.
    """
    off = weight_offset(weight)
    T = X.trusted
    if T < 0:
        raise UnboundedTailError(f"operator {X.label or ''} has an empty trusted region")
    idx = np.arange(T + 1, dtype=float) + off
    blk = np.abs(X.block())
    value = float((f(idx)[:, None] * (idx**k)[None, :] * blk).sum())
    if X.is_finite:
        return value, 0.0
    if X.growth is None or X.upper is None or X.lower is None:
        raise UnboundedTailError(f"unbounded tail: operator {X.label or ''} declares no growth profile")
    g = X.growth
    tail = 0.0
    for d in range(-X.upper, X.lower + 1):
        start = max(T + 1 - max(d, 0), -d, 0)
        if X.support is not None:
            stop = min(X.support, X.support - d)
            if stop < start:
                continue
            s = np.arange(start, stop + 1, dtype=float)
            tail += float((f(s + d + off) * (s + off) ** k * g.at(s)).sum())
        else:
            # (s + off)^k (1 + s)^g <= (1 + s)^(k + g)
            tail += g.const * f.tail_bound(shift=-(d + off), power=k + g.degree, start=start, offset=1.0)
    return value, tail


def lassner_opnorm(X: FockOperator, f: DecayFunction, k: int, weight: str = "N") -> float:
    """``max(||f(N) X N^k||, ||N^k X f(N)||)`` on the trusted block."""
    off = weight_offset(weight)
    T = X.trusted
    if T < 0:
        raise UnboundedTailError(f"operator {X.label or ''} has an empty trusted region")
    idx = np.arange(T + 1, dtype=float) + off
    fv, nk = f(idx), idx**k
    blk = X.block()
    left = np.linalg.norm(fv[:, None] * blk * nk[None, :], 2)
    right = np.linalg.norm(nk[:, None] * blk * fv[None, :], 2)
    return float(max(left, right))


def combined_seminorm(
    Y: TensorOperator, f: DecayFunction, k: int, psi, symmetric: bool = False, weight: str = "M"
) -> float:
    """Norm of ``phi -> Z (psi (x) phi)`` with ``Z = (1 (x) f(M)) Y (1 (x) M^k)``.

    For a product ``A (x) X`` this is ``||A psi|| * ||f(M) X M^k||``.  With
    ``symmetric`` the mirrored term ``M^k Y f(M)`` is included and the larger
    value returned.
    """
    v = psi.vector if isinstance(psi, RelevantState) else np.asarray(psi, dtype=complex)
    if v.shape != (Y.spin_dim,):
        raise ValueError(f"state dim {v.shape} does not match spin dim {Y.spin_dim}")
    idx = np.arange(Y.boson_dim, dtype=float) + weight_offset(weight)
    fv, mk = f(idx), idx**k
    W = Y.spin_contract(v)
    left = np.linalg.norm((fv[None, :, None] * W * mk[None, None, :]).reshape(-1, Y.boson_dim), 2)
    if not symmetric:
        return float(left)
    right = np.linalg.norm((mk[None, :, None] * W * fv[None, None, :]).reshape(-1, Y.boson_dim), 2)
    return float(max(left, right))


@dataclass(frozen=True)
class SeminormIndex:
    """One member of the seminorm family: ``f``, ``k``, the form, optional spin vector."""

    f: DecayFunction
    k: int = 0
    side: str = "sum"
    psi: RelevantState | None = None
    weight: str = "N"

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if self.side not in ("sum", "opnorm"):
            raise ValueError(f"side must be 'sum' or 'opnorm', got {self.side!r}")

    def __call__(self, X) -> float:
        if isinstance(X, TensorOperator):
            if self.psi is None:
                raise ValueError("tensor-space operators need a relevant state")
            return combined_seminorm(X, self.f, self.k, self.psi, weight=self.weight)
        if self.side == "sum":
            value, tail = lassner_sum(X, self.f, self.k, self.weight)
            return value + tail
        return lassner_opnorm(X, self.f, self.k, self.weight)
