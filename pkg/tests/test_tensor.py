import numpy as np
import pytest

from fockreg.fock_core import TruncationSpec, annihilation
from fockreg.spin_lattice import SpinSystem, pauli
from fockreg.tensor import TensorOperator


def random_tensor(rng, s=4, b=5, terms=3):
    out = TensorOperator.zeros(s, b)
    for _ in range(terms):
        A = rng.normal(size=(s, s)) + 1j * rng.normal(size=(s, s))
        X = rng.normal(size=(b, b)) + 1j * rng.normal(size=(b, b))
        out = out + TensorOperator.product(A, X)
    return out


def test_product_is_kronecker():
    sys = SpinSystem.chain(2)
    a = annihilation(TruncationSpec(3))
    Y = TensorOperator.product(pauli("x", 1, sys), a)
    assert np.allclose(Y.to_dense(), np.kron(pauli("x", 1, sys).matrix.toarray(), a.entries))


def test_dense_round_trip(rng):
    Y = random_tensor(rng)
    Z = TensorOperator.from_dense(Y.to_dense(), 4, 5)
    assert np.allclose(Z.to_dense(), Y.to_dense())


def test_algebra_matches_dense(rng):
    X, Y = random_tensor(rng), random_tensor(rng)
    dx, dy = X.to_dense(), Y.to_dense()
    assert np.allclose((X @ Y).to_dense(), dx @ dy)
    assert np.allclose((X - Y).to_dense(), dx - dy)
    assert np.allclose((2.5 * X).to_dense(), 2.5 * dx)
    assert np.allclose(X.dag().to_dense(), dx.conj().T)
    assert np.allclose(X.comm(Y).to_dense(), dx @ dy - dy @ dx)


def test_spin_contract_is_the_partial_application(rng):
    Y = random_tensor(rng)
    psi = rng.normal(size=4) + 1j * rng.normal(size=4)
    phi = rng.normal(size=5) + 1j * rng.normal(size=5)
    W = Y.spin_contract(psi)
    assert np.allclose((W @ phi).ravel(), Y.to_dense() @ np.kron(psi, phi))


def test_dimension_checks(rng):
    with pytest.raises(ValueError):
        random_tensor(rng, 4, 5) + random_tensor(rng, 4, 6)
    with pytest.raises(TypeError):
        random_tensor(rng) + 1
