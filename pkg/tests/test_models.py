import math

import numpy as np
import pytest

from fockreg.dynamics import evolve_oracle
from fockreg.fock_core import (
    TruncationError,
    TruncationSpec,
    annihilation,
    compose,
    creation,
    number,
    projection_q,
)
from fockreg.models import (
    Displaced,
    Free,
    SpinBoson,
    SpinBosonMulti,
    TwoMode,
    displaced_frame,
    ladder,
    model_from_dict,
    projected_regularization,
    regularize,
    scalar,
    two_mode_frame,
)
from fockreg.spin_lattice import SpinSystem, mean_magnetization, pauli
from fockreg.tensor import TensorOperator


def test_free_regularizations_coincide():
    spec = TruncationSpec(12)
    H = regularize(Free(), 5, spec)
    alt = projected_regularization(Free(), 5, spec)
    assert np.array_equal(np.abs(H.entries - alt.entries) <= 1e-12, np.ones_like(H.entries, dtype=bool))
    q = projection_q(5, spec)
    assert H.deviation(q @ number(spec) @ q) <= 1e-12


@pytest.mark.parametrize("L", [0, 1, 4, 9])
def test_free_hamiltonian_norm_is_cutoff(L):
    H = regularize(Free(), L, TruncationSpec.for_cutoff(L))
    assert np.linalg.norm(H.entries, 2) == pytest.approx(L)


@pytest.mark.parametrize(
    "model",
    [Free(), Displaced(0.3), SpinBoson(1.0, 0.2, SpinSystem.chain(2)), SpinBosonMulti(1.0, gamma_list=(0.1, 0.3), sys=SpinSystem.chain(2))],
)
def test_regularized_hamiltonians_are_hermitian(model):
    H = regularize(model, 3, TruncationSpec.for_cutoff(3, 2))
    m = H.to_dense() if isinstance(H, TensorOperator) else np.asarray(getattr(H, "entries", H))
    assert np.abs(m - m.conj().T).max() <= 1e-12
    assert np.isfinite(np.linalg.norm(m, 2))


def test_spin_energy_is_pair_sum():
    sys = SpinSystem.chain(3)
    model = SpinBoson(0.7, 0.1, sys)
    pair = sum((pauli("z", i, sys) @ pauli("z", j, sys)).matrix.toarray() for i in sys.sites for j in sys.sites)
    assert np.allclose(model.spin_energy().matrix.toarray(), 0.7 / 3 * pair)


def test_spin_boson_hamiltonian_matches_dense_assembly():
    sys = SpinSystem.chain(2)
    spec = TruncationSpec.for_cutoff(3, 2)
    model = SpinBoson(0.5, 0.4, sys)
    H = regularize(model, 3, spec).to_dense()
    aL = np.asarray(compose(annihilation(spec), projection_q(3, spec)).entries)
    s3 = mean_magnetization(sys).matrix.toarray()
    expected = np.kron(model.spin_energy().matrix.toarray(), np.eye(spec.size)) + 0.4 * np.kron(s3, aL + aL.conj().T)
    assert np.allclose(H, expected, atol=1e-14)


def test_multi_mode_terms_are_independent():
    sys = SpinSystem.chain(2)
    spec = TruncationSpec.for_cutoff(2, 1)
    model = SpinBosonMulti(1.0, gamma_list=(0.1, 0.3), sys=sys)
    H = regularize(model, 2, spec).to_dense()
    aL = np.asarray(compose(annihilation(spec), projection_q(2, spec)).entries)
    eye = np.eye(spec.size)
    x1, x2 = np.kron(aL + aL.conj().T, eye), np.kron(eye, aL + aL.conj().T)
    s3 = mean_magnetization(sys).matrix.toarray()
    spin = np.kron(model.spin_energy().matrix.toarray(), np.eye(spec.size**2))
    assert np.allclose(H, spin + np.kron(s3, 0.1 * x1) + np.kron(s3, 0.3 * x2), atol=1e-14)
    # different modes commute, including their ladder operators
    a = np.asarray(annihilation(spec).entries)
    a1, a2 = np.kron(a, eye), np.kron(eye, a)
    assert np.abs(a1 @ a2.conj().T - a2.conj().T @ a1).max() == 0
    assert np.abs(x1 @ x2 - x2 @ x1).max() == 0


def test_substitution_is_additive_and_homogeneous():
    spec = TruncationSpec.for_cutoff(4)
    chi1 = ladder(0, True) @ ladder(0)
    chi2 = ladder(0) + ladder(0, True)
    lhs = regularize(chi1 + chi2 * 0.3, 4, spec)
    rhs = regularize(chi1, 4, spec) + regularize(chi2, 4, spec) * 0.3
    assert lhs.deviation(rhs) <= 1e-14
    assert regularize(scalar(2.0), 4, spec).deviation(regularize(scalar(1.0), 4, spec) * 2.0) == 0.0


def test_model_from_dict():
    assert isinstance(model_from_dict({"variant": "free"}), Free)
    assert model_from_dict({"variant": "displaced", "gamma": 0.4}).gamma == 0.4
    sb = model_from_dict({"variant": "spin_boson", "sites": 3, "J": 2.0})
    assert sb.volume == 3 and sb.J == 2.0
    with pytest.raises(ValueError):
        model_from_dict({"variant": "dicke"})
    with pytest.raises(ValueError):
        SpinBoson(1.0, float("nan"))


def test_coupled_volume_is_checked():
    model = SpinBoson(1.0, 0.1, SpinSystem.chain(4), r=2)
    model.check_coupling(2)
    with pytest.raises(ValueError):
        model.check_coupling(3)


def test_displaced_mode_ccr_and_expansion():
    g = 0.2
    spec = TruncationSpec(60, 40, 20)
    fr = displaced_frame(g, spec)
    b = fr.b
    D = spec.ambient_dim
    c = compose(b, b.dag()) - compose(b.dag(), b)
    assert np.allclose(c.block(D - 1), np.eye(D), atol=1e-12)
    a, ad = annihilation(spec), creation(spec)
    lhs = compose(b.dag(), b) - g**2
    rhs = compose(ad, a) + (a + ad) * g
    assert lhs.deviation(rhs) <= 1e-12
    assert fr.defect <= 1e-8


def test_displaced_lowest_levels():
    g = 0.2
    fr = displaced_frame(g, TruncationSpec(60, 40, 20))
    levels = fr.lowest_levels(40, 6)
    assert levels[0] == pytest.approx(-g**2, abs=1e-6)
    assert np.allclose(levels, np.arange(6) - g**2, atol=1e-6)


def test_displaced_frame_refuses_small_ambient_space():
    with pytest.raises(TruncationError):
        displaced_frame(3.0, TruncationSpec(12, 8, 4))


def test_two_mode_frame_relations():
    fr = two_mode_frame(10)
    A, B = fr.A, fr.B
    r = lambda X: fr.restrict(X, fr.mode_dim - 1)
    assert np.abs(r(A @ B.conj().T - B.conj().T @ A)).max() <= 1e-12
    assert np.abs(r(A @ B - B @ A)).max() <= 1e-12
    assert np.allclose(r(A @ A.conj().T - A.conj().T @ A), np.eye(len(fr.levels(fr.mode_dim - 1))), atol=1e-12)
    assert np.abs(fr.restrict(2 * A.conj().T @ A - fr.hamiltonian())).max() <= 1e-12


def test_two_mode_cutoff_dynamics_fixes_B_and_inverts_consistently():
    fr = two_mode_frame(14)
    H = fr.regularized_hamiltonian(4)
    ev = lambda X: evolve_oracle(H, X, 1.7).operator
    assert np.linalg.norm(fr.restrict(ev(fr.B) - fr.B), 2) <= 1e-10
    lhs = ev(fr.a)
    rhs = (ev(fr.A) + ev(fr.B)) / math.sqrt(2)
    assert np.abs(fr.restrict(lhs - rhs)).max() <= 1e-12
