import itertools
from functools import reduce

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from penaltyguard.errors import ContractError
from penaltyguard.pauli import (
    PAULI_MATRICES,
    HermitianOperator,
    PauliString,
    QubitRegister,
    apply,
    as_state,
    commutator,
    embed,
    pauli_to_operator,
    random_state,
    spectral_norm,
)

X, Y, Z, I2 = (PAULI_MATRICES[c] for c in "XYZI")


def dense_label(label):
    return reduce(np.kron, [PAULI_MATRICES[c] for c in label])


def test_register_layout():
    reg = QubitRegister.build(4, 2)
    assert reg.n_total == 6 and reg.dim == 64
    assert reg.labels == ("s0", "s1", "s2", "s3", "e0", "e1")
    assert reg.system_dim == 16 and reg.env_dim == 4
    with pytest.raises(ContractError):
        reg.index("s9")
    with pytest.raises(ContractError):
        QubitRegister(("a", "a"))


def test_qubit_zero_is_most_significant_bit():
    reg = QubitRegister.build(3)
    op = pauli_to_operator(PauliString.from_label("XII", reg.labels), reg)
    # X on qubit 0 maps |000> (index 0) to |100> (index 4)
    assert op.toarray()[4, 0] == 1


def test_single_x():
    reg = QubitRegister.build(1)
    np.testing.assert_array_equal(pauli_to_operator(PauliString(1, {"s0": "X"}), reg).toarray(), X)


def test_identity_string():
    reg = QubitRegister.build(2, 1)
    np.testing.assert_array_equal(pauli_to_operator(PauliString(1.0), reg).toarray(), np.eye(8))


def test_yiyi_matches_kronecker_oracle():
    reg = QubitRegister.build(4)
    op = pauli_to_operator(PauliString.from_label("YIYI", reg.labels), reg)
    np.testing.assert_allclose(op.toarray(), dense_label("YIYI"), atol=0)
    assert op.nnz <= reg.dim


@pytest.mark.parametrize("label", ["".join(p) for p in itertools.product("IXYZ", repeat=3)])
def test_all_three_qubit_strings_match_oracle(label):
    reg = QubitRegister.build(3)
    op = pauli_to_operator(PauliString.from_label(label, reg.labels, 0.7), reg)
    np.testing.assert_allclose(op.toarray(), 0.7 * dense_label(label), atol=1e-15)


def test_unknown_label_and_complex_coefficient():
    reg = QubitRegister.build(2)
    with pytest.raises(ContractError):
        pauli_to_operator(PauliString(1, {"q7": "X"}), reg)
    with pytest.raises(ContractError):
        pauli_to_operator(PauliString(1j, {"s0": "X"}), reg, hermitian=True)
    op = pauli_to_operator(PauliString(1j, {"s0": "X"}), reg)
    assert not op.hermitian


def test_product_closure_on_all_two_qubit_pairs():
    labels = ["".join(p) for p in itertools.product("IXYZ", repeat=2)]
    q = ("a", "b")
    for la, lb in itertools.product(labels, repeat=2):
        prod = PauliString.from_label(la, q) * PauliString.from_label(lb, q)
        assert isinstance(prod, PauliString)
        reg = QubitRegister(q)
        np.testing.assert_allclose(pauli_to_operator(prod, reg).toarray(),
                                   dense_label(la) @ dense_label(lb), atol=1e-15)


def test_single_qubit_anticommutation():
    for a, b in itertools.product("XYZ", repeat=2):
        pa, pb = PAULI_MATRICES[a], PAULI_MATRICES[b]
        np.testing.assert_array_equal(pa @ pb + pb @ pa, 2 * (a == b) * I2)


def test_linearity(rng):
    reg = QubitRegister.build(3)
    p = PauliString.from_label("XZY", reg.labels)
    q = PauliString.from_label("IYZ", reg.labels)
    a, b = rng.normal(size=2)
    lhs = pauli_to_operator([a * p, b * q], reg).toarray()
    rhs = a * pauli_to_operator(p, reg).toarray() + b * pauli_to_operator(q, reg).toarray()
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_hermiticity_is_checked():
    with pytest.raises(ContractError):
        HermitianOperator(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ContractError):
        HermitianOperator(np.eye(3))


def test_commutator_examples():
    reg = QubitRegister.build(1)
    x = pauli_to_operator(PauliString(1, {"s0": "X"}), reg)
    y = pauli_to_operator(PauliString(1, {"s0": "Y"}), reg)
    assert commutator(x, x).nnz == 0
    c = commutator(x, y)
    np.testing.assert_allclose(c.toarray(), 2j * Z)
    assert not c.hermitian
    with pytest.raises(ContractError):
        commutator(x, HermitianOperator.identity(4))


def test_spectral_norm_basics():
    reg = QubitRegister.build(5)
    p = pauli_to_operator(PauliString.from_label("XYZIX", reg.labels), reg)
    assert spectral_norm(p) == pytest.approx(1.0, abs=1e-12)
    assert spectral_norm(HermitianOperator.zeros(8), return_method=True) == (0.0, "zero")


def test_spectral_norm_lanczos_matches_dense(small_instance):
    val, method = spectral_norm(small_instance.V, return_method=True)
    ref = np.max(np.abs(np.linalg.eigvalsh(small_instance.V.toarray())))
    assert method == "dense" and val == pytest.approx(ref, rel=1e-8)
    # padding with an identity factor keeps the norm and exceeds the dense cutoff
    big = embed(small_instance.V.matrix, 1, 8)
    v2, m2 = spectral_norm(HermitianOperator(big), return_method=True)
    assert m2 == "lanczos" and v2 == pytest.approx(ref, rel=1e-8)


def test_spectral_norm_non_hermitian(rng):
    m = sp.random(512, 512, density=0.01, random_state=1) + 1j * sp.random(512, 512, density=0.01, random_state=2)
    val = spectral_norm(sp.csr_matrix(m))
    assert val == pytest.approx(np.linalg.norm(m.toarray(), 2), rel=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_norm_triangle_and_submultiplicative(seed):
    r = np.random.default_rng(seed)
    mats = []
    for _ in range(3):
        a = r.normal(size=(8, 8)) + 1j * r.normal(size=(8, 8))
        mats.append(HermitianOperator(a + a.conj().T))
    a, b, _ = mats
    na, nb = spectral_norm(a), spectral_norm(b)
    assert spectral_norm(a + b) <= na + nb + 1e-8
    assert spectral_norm(a @ b) <= na * nb * (1 + 1e-8)


def test_apply(rng, small_instance):
    s = random_state(64, rng)
    np.testing.assert_array_equal(apply(HermitianOperator.identity(64), s), s)
    H = small_instance.H()
    np.testing.assert_allclose(apply(H, s), H.toarray() @ s, atol=1e-12)
    with pytest.raises(ContractError):
        apply(H, np.ones(8) / np.sqrt(8))


def test_projector_fixes_codespace_states(small_instance):
    psi = small_instance.initial_state()
    np.testing.assert_allclose(apply(small_instance.fam.total_P, psi), psi, atol=1e-14)


def test_unitary_preserves_norm(rng, small_instance):
    from penaltyguard.propagate import diagonalize, evolve_spectral
    sf = diagonalize(small_instance.H())
    s = random_state(64, rng)
    out = evolve_spectral(sf, s, 3.7)
    assert abs(np.linalg.norm(out) - 1) < 1e-12


def test_as_state_checks():
    with pytest.raises(ContractError):
        as_state([1, 1])
    with pytest.raises(ContractError):
        as_state([1, 0, 0], check_norm=False)
    v = as_state([1, 0])
    assert not v.flags.writeable
