"""Core operator primitives: fixed oracles plus sampled invariants."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from collapselab.core import (
    AlgebraElement,
    BlockDiagonalOperator,
    HermitianOperator,
    PreconditionError,
    SpectralTripleModel,
    commutator,
    graph_norm,
    hermitian_coefficient_basis,
    hermitian_spectrum,
    lip_seminorm,
    op_norm,
)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)
I2 = np.eye(2, dtype=complex)


def rand_complex(rng, n, m=None):
    m = n if m is None else m
    return rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))


def rand_unitary(rng, n):
    q, r = np.linalg.qr(rand_complex(rng, n))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def pauli_model(dirac=SZ):
    return SpectralTripleModel(2, (I2, SX, SY, SZ), HermitianOperator(2, dirac))


# ---------------------------------------------------------------- fixed values

def test_commutator_oracle():
    # [diag(1,2), e_{01}] = -e_{01}: hand computation
    got = commutator(np.diag([1.0, 2.0]).astype(complex),
                     np.array([[0, 1], [0, 0]], dtype=complex))
    assert np.allclose(got, [[0, -1], [0, 0]], atol=1e-15)


def test_op_norm_oracle():
    assert op_norm(np.array([[0, 2], [0, 0]], dtype=complex)) == pytest.approx(2.0, rel=1e-12)
    assert op_norm(np.zeros((3, 3), dtype=complex)) == 0.0
    # rank-one: norm of outer product uv* is |u||v|
    u = np.array([3.0, 4.0])
    assert op_norm(np.outer(u, u).astype(complex)) == pytest.approx(25.0, rel=1e-12)


def test_graph_norm_oracle():
    # |xi| + |D xi| = 1 + 2 for xi = e_1, D = diag(0, 2)
    assert graph_norm(np.diag([0.0, 2.0]).astype(complex),
                      np.array([0.0, 1.0])) == pytest.approx(3.0, rel=1e-12)


def test_hermitian_spectrum_oracle():
    got = hermitian_spectrum(SX)
    assert np.allclose(got, [-1.0, 1.0], atol=1e-12)
    # ascending with multiplicity
    h = np.diag([2.0, -1.0, 2.0]).astype(complex)
    assert np.allclose(hermitian_spectrum(h), [-1.0, 2.0, 2.0], atol=0)


def test_hermitian_spectrum_backward_error():
    rng = np.random.default_rng(7)
    lam = np.array([-3.0, -0.5, 0.0, 1.25, 4.0])
    u = rand_unitary(rng, 5)
    h = u @ np.diag(lam) @ u.conj().T
    h = (h + h.conj().T) / 2
    got = hermitian_spectrum(h)
    assert np.max(np.abs(got - np.sort(lam))) <= 1e-10 * np.max(np.abs(lam))


def test_hermitian_operator_rejects_non_hermitian():
    bad = np.array([[0, 1], [0, 0]], dtype=complex)
    with pytest.raises(PreconditionError):
        HermitianOperator(2, bad)
    # just inside the tolerance: accepted as-is, never symmetrized
    almost = SZ + np.array([[0, 1e-13], [0, 0]])
    h = HermitianOperator(2, almost)
    assert h.matrix[0, 1] == pytest.approx(1e-13)


def test_hermitian_spectrum_rejects_non_hermitian():
    with pytest.raises(PreconditionError):
        hermitian_spectrum(np.array([[0, 1], [0, 0]], dtype=complex))


def test_non_finite_rejected():
    with pytest.raises(PreconditionError):
        HermitianOperator(2, np.array([[np.inf, 0], [0, 0]], dtype=complex))
    with pytest.raises(PreconditionError):
        op_norm(np.array([[np.nan, 0], [0, 0]], dtype=complex))


def test_lip_seminorm_pauli():
    m = pauli_model()
    # norm([Z, X]) = norm(2iY) = 2; [Z, Z] = 0
    assert lip_seminorm(m, m.element([0, 1, 0, 0])) == pytest.approx(2.0, rel=1e-12)
    assert lip_seminorm(m, m.element([0, 0, 0, 1])) == pytest.approx(0.0, abs=1e-14)
    assert lip_seminorm(m, m.element([5, 0, 0, 0])) == pytest.approx(0.0, abs=1e-14)


# ------------------------------------------------------------- model contract

def test_model_requires_identity_in_span():
    with pytest.raises(PreconditionError):
        SpectralTripleModel(2, (SX, SY), HermitianOperator(2, SZ))


def test_model_requires_linear_independence():
    with pytest.raises(PreconditionError):
        SpectralTripleModel(2, (I2, SX, 2 * SX), HermitianOperator(2, SZ))


def test_model_requires_adjoint_closure():
    e01 = np.array([[0, 1], [0, 0]], dtype=complex)
    with pytest.raises(PreconditionError):
        SpectralTripleModel(2, (I2, e01), HermitianOperator(2, SZ))
    # span-level closure is enough: e01 together with its adjoint passes
    SpectralTripleModel(2, (I2, e01, e01.conj().T), HermitianOperator(2, SZ))


def test_element_roundtrip():
    m = pauli_model()
    a = m.element([1.0, 2.0, 0.0, -1.0])
    assert isinstance(a, AlgebraElement)
    assert np.allclose(a.matrix, I2 + 2 * SX - SZ, atol=1e-12)
    recomputed = m.element(a.coefficients)
    assert np.max(np.abs(recomputed.matrix - a.matrix)) <= 1e-12


def test_identity_element():
    m = pauli_model()
    assert np.allclose(m.identity_element().matrix, I2, atol=1e-10)


def test_hermitian_coefficient_basis_spans_pauli():
    m = pauli_model()
    hb = hermitian_coefficient_basis(m)
    assert hb.shape == (4, 4)
    for k in range(hb.shape[1]):
        a = m.element(hb[:, k]).matrix
        assert np.max(np.abs(a - a.conj().T)) < 1e-9


# ------------------------------------------------------------- block operators

def block_pair():
    idx = np.array([[0, 1], [2, 3]])
    rep = BlockDiagonalOperator(4, idx, np.array([SX]))
    var = BlockDiagonalOperator(4, idx, np.array([SZ, 2 * SZ]))
    return rep, var


def test_block_partition_validation():
    with pytest.raises(PreconditionError):
        BlockDiagonalOperator(4, np.array([[0, 1], [1, 2]]), np.array([SX, SX]))
    with pytest.raises(PreconditionError):
        BlockDiagonalOperator(4, np.array([[0, 1], [2, 3]]), np.array([np.eye(3)]))


def test_block_matches_dense():
    rep, var = block_pair()
    assert np.allclose(rep.to_dense(), np.kron(I2, SX), atol=0)
    assert op_norm(var) == pytest.approx(op_norm(var.to_dense()), rel=1e-12)
    assert np.allclose(hermitian_spectrum(var), hermitian_spectrum(var.to_dense()), atol=1e-12)
    c = commutator(var, rep)
    dense_c = commutator(var.to_dense(), rep.to_dense())
    assert np.allclose(c.to_dense(), dense_c, atol=1e-12)


def test_block_commutator_collapses_exact_zero():
    rep, _ = block_pair()
    c = commutator(rep, rep)
    assert c.blocks.shape == (1, 2, 2)
    assert not np.any(c.blocks)


def test_block_apply_and_graph_norm():
    _, var = block_pair()
    xi = np.array([1.0, 0.0, 0.0, 1.0], dtype=complex)
    assert np.allclose(var.apply(xi), var.to_dense() @ xi, atol=1e-12)
    assert graph_norm(var, xi) == pytest.approx(graph_norm(var.to_dense(), xi), rel=1e-12)


def test_block_mixed_with_dense_commutator():
    rep, _ = block_pair()
    dense = np.kron(SZ, I2)
    c = commutator(rep, dense)
    assert np.allclose(c, rep.to_dense() @ dense - dense @ rep.to_dense(), atol=1e-12)


# ------------------------------------------------------------ sampled laws

@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_op_norm_unitary_invariance(seed, n):
    rng = np.random.default_rng(seed)
    a = rand_complex(rng, n)
    u = rand_unitary(rng, n)
    assert abs(op_norm(u @ a @ u.conj().T) - op_norm(a)) <= 1e-9 * (1 + op_norm(a))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_spectrum_unitary_invariance(seed, n):
    rng = np.random.default_rng(seed)
    h = rand_complex(rng, n)
    h = (h + h.conj().T) / 2
    u = rand_unitary(rng, n)
    hu = u @ h @ u.conj().T
    hu = (hu + hu.conj().T) / 2
    assert np.max(np.abs(hermitian_spectrum(hu) - hermitian_spectrum(h))) \
        <= 1e-9 * (1 + op_norm(h))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1),
       st.floats(-5, 5, allow_nan=False, allow_infinity=False))
def test_lip_ignores_identity_shift(seed, t):
    rng = np.random.default_rng(seed)
    m = pauli_model()
    c = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    a = m.element(c)
    shifted = m.element(c + t * m.identity_coefficients)
    la, ls = lip_seminorm(m, a), lip_seminorm(m, shifted)
    assert abs(la - ls) <= 1e-10 * (1 + la)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lip_leibniz_jordan(seed):
    rng = np.random.default_rng(seed)
    m = pauli_model(dirac=SZ + 0.3 * SX)
    a = m.element(rng.standard_normal(4) + 1j * rng.standard_normal(4))
    b = m.element(rng.standard_normal(4) + 1j * rng.standard_normal(4))
    jordan = (a.matrix @ b.matrix + b.matrix @ a.matrix) / 2
    lhs = op_norm(commutator(m.dirac.matrix, jordan))
    rhs = lip_seminorm(m, a) * op_norm(b.matrix) + op_norm(a.matrix) * lip_seminorm(m, b)
    assert lhs <= rhs + 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1),
       st.floats(-4, 4, allow_nan=False, allow_infinity=False))
def test_lip_is_a_seminorm(seed, t):
    rng = np.random.default_rng(seed)
    m = pauli_model(dirac=SZ + 0.4 * SY)
    ca = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    cb = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    la = lip_seminorm(m, m.element(ca))
    lb = lip_seminorm(m, m.element(cb))
    lab = lip_seminorm(m, m.element(ca + cb))
    assert lab <= la + lb + 1e-9
    lt = lip_seminorm(m, m.element(t * ca))
    assert abs(lt - abs(t) * la) <= 1e-9 * (1 + abs(t)) * (1 + la)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_graph_norm_dominates_vector_norm(seed, n):
    rng = np.random.default_rng(seed)
    d = rand_complex(rng, n)
    d = (d + d.conj().T) / 2
    xi = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    assert graph_norm(d, xi) >= np.linalg.norm(xi) - 1e-12
