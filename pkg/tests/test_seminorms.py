import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fockreg.fock_core import (
    FockOperator,
    Growth,
    TruncationSpec,
    annihilation,
    creation,
    compose,
    identity,
    number,
    projection_pi,
    zero,
)
from fockreg.seminorms import (
    DecayFunction,
    SeminormIndex,
    UnboundedTailError,
    combined_seminorm,
    decay_function,
    lassner_opnorm,
    lassner_sum,
)
from fockreg.spin_lattice import SpinSystem, pauli, product_state, sector_state
from fockreg.tensor import TensorOperator

EXP = DecayFunction(1.0)


def finite_operator(m):
    D = m.shape[0] - 1
    return FockOperator(m, D, "X", D, D, D)


def random_banded(rng, D=10, band=2):
    m = rng.normal(size=(D + 1, D + 1)) + 1j * rng.normal(size=(D + 1, D + 1))
    i, j = np.indices(m.shape)
    m[np.abs(i - j) > band] = 0
    return finite_operator(m)


def test_single_projection():
    value, tail = lassner_sum(projection_pi(5, TruncationSpec(10)), EXP, 2)
    assert value == pytest.approx(math.exp(-5) * 25, rel=1e-14)
    assert tail == 0.0


def test_annihilation_value_and_certified_tail():
    D, k = 30, 1
    a = annihilation(TruncationSpec(D))
    value, tail = lassner_sum(a, EXP, k)
    direct = sum(math.exp(-(s - 1)) * s ** (k + 0.5) for s in range(1, D + 1))
    assert value == pytest.approx(direct, rel=1e-13)
    # the tail certificate covers everything beyond D
    far = sum(math.exp(-(s - 1)) * s ** (k + 0.5) for s in range(D + 1, 400))
    assert far <= tail
    assert tail < 1e-6


def test_zero_operator():
    assert lassner_sum(zero(TruncationSpec(5)), EXP, 1) == (0.0, 0.0)
    assert lassner_opnorm(zero(TruncationSpec(5)), EXP, 1) == 0.0


def test_opnorm_of_identity():
    assert lassner_opnorm(identity(TruncationSpec(8)), EXP, 0) == pytest.approx(1.0)


def test_missing_growth_is_refused():
    a = annihilation(TruncationSpec(6))
    bare = FockOperator(a.entries, a.trusted, "bare", 1, 0, None, None)
    with pytest.raises(UnboundedTailError, match="unbounded tail"):
        lassner_sum(bare, EXP, 0)


@given(st.integers(0, 2**32 - 1), st.integers(0, 3))
def test_opnorm_adjoint_invariance(seed, k):
    X = random_banded(np.random.default_rng(seed))
    assert lassner_opnorm(X, EXP, k) == pytest.approx(lassner_opnorm(X.dag(), EXP, k), rel=1e-12)


def summed(X, k):
    return sum(lassner_sum(X, EXP, k))


def left_opnorm(X, k):
    idx = np.arange(X.trusted + 1, dtype=float)
    return np.linalg.norm(EXP(idx)[:, None] * X.block() * (idx**k)[None, :], 2)


@given(st.integers(0, 2**32 - 1), st.integers(0, 3))
def test_opnorm_dominated_by_sum(seed, k):
    X = random_banded(np.random.default_rng(seed))
    assert left_opnorm(X, k) <= summed(X, k) + 1e-12
    assert lassner_opnorm(X, EXP, k) <= max(summed(X, k), summed(X.dag(), k)) + 1e-12


def test_opnorm_dominated_by_sum_for_ladder_monomials():
    spec = TruncationSpec(20)
    a, ad = annihilation(spec), creation(spec)
    for X in (a, ad, compose(a, ad), compose(ad, compose(a, a)), number(spec)):
        for k in range(3):
            assert left_opnorm(X, k) <= summed(X, k)
            assert lassner_opnorm(X, EXP, k) <= max(summed(X, k), summed(X.dag(), k))


def test_one_sided_sum_misses_the_mirrored_term():
    ad = creation(TruncationSpec(20))
    assert lassner_opnorm(ad, EXP, 0) == pytest.approx(1.0)
    assert summed(ad, 0) < 0.71


@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.integers(0, 2))
def test_seminorm_axioms(seed, c, k):
    r = np.random.default_rng(seed)
    X, Y = random_banded(r), random_banded(r)
    for norm in (lambda Z: lassner_sum(Z, EXP, k)[0], lambda Z: lassner_opnorm(Z, EXP, k)):
        assert norm(X * c) == pytest.approx(abs(c) * norm(X), rel=1e-12, abs=1e-300)
        assert norm(X + Y) <= norm(X) + norm(Y) + 1e-12


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 3), st.floats(0.0, 3), st.integers(0, 2))
def test_monotone_in_decay_function(seed, beta, extra, k):
    X = random_banded(np.random.default_rng(seed))
    slow, fast = DecayFunction(beta), DecayFunction(beta + extra)
    assert lassner_sum(X, fast, k)[0] <= lassner_sum(X, slow, k)[0] + 1e-12


@pytest.mark.parametrize("f", [DecayFunction(0.5), DecayFunction(1.0), DecayFunction(2.0), decay_function("stretched_exp")])
def test_builtin_families_are_admissible(f):
    assert f.is_admissible(kmax=12)
    assert f.times_x().is_admissible(kmax=12)
    x = np.linspace(0, 50, 500)
    assert np.all(f(x) > 0)
    assert np.all(np.diff(f(x)) <= 0)


def test_power_law_is_not_admissible():
    class PowerLaw(DecayFunction):
        def __call__(self, x):
            return 1.0 / (1.0 + np.asarray(x, dtype=float)) ** 4

    assert not PowerLaw().is_admissible(kmax=12)


@pytest.mark.parametrize("f", [DecayFunction(1.0), DecayFunction(0.3), decay_function("stretched_exp", beta=1.0, nu=0.5)])
@pytest.mark.parametrize("k", [0, 1, 3])
def test_tail_and_moment_bounds(f, k):
    for S in (0, 5, 20):
        brute = sum(float(f(s - 1)) * s ** (k + 0.5) for s in range(S + 1, 20000))
        bound = f.tail(k, S)
        assert brute <= bound * (1 + 1e-12)
        assert bound <= brute * 1.5 + 1e-300
    brute = sum(float(f(l)) * l**k for l in range(1, 20000))
    assert brute <= f.moment(k) * (1 + 1e-12)
    assert f.moment(k) <= brute * 1.5


def test_decay_function_validation():
    with pytest.raises(ValueError):
        DecayFunction(0.0)
    with pytest.raises(ValueError):
        DecayFunction(1.0, nu=1.5)
    with pytest.raises(ValueError):
        decay_function("gaussian")
    assert DecayFunction(1.0).shift_constant() == pytest.approx(math.e)


def test_combined_seminorm_product_factorizes(rng):
    sys = SpinSystem.chain(3)
    spec = TruncationSpec(8)
    A = pauli("x", 1, sys) + pauli("z", 2, sys) * 0.5
    X = compose(annihilation(spec), creation(spec))
    psi = sector_state(sys, 2, rng)
    Y = TensorOperator.product(A, X)
    idx = np.arange(spec.size) + 1.0
    for k in range(3):
        expected = np.linalg.norm(A.matrix @ psi.vector) * np.linalg.norm(
            EXP(idx)[:, None] * X.entries * (idx**k)[None, :], 2
        )
        assert combined_seminorm(Y, EXP, k, psi) == pytest.approx(expected, rel=1e-12)


def test_combined_seminorm_identity_and_zero():
    sys = SpinSystem.chain(2)
    spec = TruncationSpec(6)
    eye = TensorOperator.product(None, identity(spec), spin_dim=sys.dim)
    assert combined_seminorm(eye, EXP, 0, product_state(sys)) == pytest.approx(math.exp(-1))
    assert combined_seminorm(TensorOperator.zeros(sys.dim, spec.size), EXP, 2, product_state(sys)) == 0.0
    with pytest.raises(ValueError):
        combined_seminorm(eye, EXP, 0, np.ones(3))


def test_seminorm_index():
    spec = TruncationSpec(10)
    a = annihilation(spec)
    idx = SeminormIndex(EXP, 1)
    assert idx(a) == pytest.approx(sum(lassner_sum(a, EXP, 1)))
    assert SeminormIndex(EXP, 1, side="opnorm")(a) == pytest.approx(lassner_opnorm(a, EXP, 1))
    with pytest.raises(ValueError):
        SeminormIndex(EXP, -1)
    with pytest.raises(ValueError):
        SeminormIndex(EXP, side="both")
    Y = TensorOperator.product(None, a, spin_dim=2)
    with pytest.raises(ValueError):
        idx(Y)
    sys = SpinSystem.chain(1)
    assert SeminormIndex(EXP, 0, psi=product_state(sys), weight="M")(Y) > 0
