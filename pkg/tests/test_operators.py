"""
Local operator sums, product states and computational-basis assembly
"""

import sys

sys.path.insert(0, "src")

import numpy as np
import pytest

from basis import (
    ComputationalBasis,
    assemble_dense,
    assemble_operator,
    digits_to_keys,
    keys_to_digits,
    place_values,
)
from errors import ConfigurationError, NumericalGuardError
from lattice import build_lattice
from models import pxp_hamiltonian
from operator_sum import (
    PAULI,
    OperatorSum,
    ProductState,
    contract_legs,
    embed_block,
    kron_all,
    local_norm,
    local_unitary,
)

I, X, Y, Z = (PAULI[k] for k in "IXYZ")


def _dense_ising(n, delta, g):
    H = np.zeros((2**n, 2**n), dtype=complex)
    for i in range(n - 1):
        mats = [I] * n
        mats[i], mats[i + 1] = Z, Z
        H -= delta * kron_all(mats)
    for i in range(n):
        mats = [I] * n
        mats[i] = X
        H -= g * kron_all(mats)
    return H


def test_embed_block_places_identities():
    out = embed_block(Z, [1], [0, 1, 2], (2, 2, 2))
    assert np.allclose(out, kron_all([I, Z, I]))

    out = embed_block(np.kron(X, Z), [0, 2], [0, 1, 2], (2, 2, 2))
    assert np.allclose(out, kron_all([X, I, Z]))


def test_add_reorders_support():
    chain = build_lattice("chain", [3])
    op = OperatorSum.empty(chain, 2)
    op.add([2, 1], np.kron(X, Z))
    assert op.terms[0].support == (1, 2)
    assert np.allclose(op.terms[0].block, np.kron(Z, X))


def test_add_rejects_bad_blocks():
    chain = build_lattice("chain", [4])
    op = OperatorSum.empty(chain, 2)
    with pytest.raises(ConfigurationError, match="non-Hermitian"):
        op.add([0], np.array([[0, 1], [0, 0]]))
    with pytest.raises(ConfigurationError, match="not connected"):
        op.add([0, 2], np.kron(Z, Z))
    with pytest.raises(ConfigurationError, match="shape"):
        op.add([0, 1], Z)
    with pytest.raises(ConfigurationError, match="repeated"):
        op.add([1, 1], np.kron(Z, Z))


def test_disconnected_support_fattened():
    chain = build_lattice("chain", [4])
    op = OperatorSum(tuple([2] * 4), [], chain, True, "fatten")
    op.add([0, 2], np.kron(Z, Z))
    assert op.terms[0].support == (0, 1, 2)
    assert np.allclose(op.terms[0].block, kron_all([Z, I, Z]))


def test_assembly_matches_dense_kron():
    chain = build_lattice("chain", [4])
    H = OperatorSum.empty(chain, 2)
    for i, j in chain.edges:
        H.add([i, j], -1.0 * np.kron(Z, Z))
    for i in range(4):
        H.add([i], -0.7 * X)
    assert np.allclose(assemble_dense(H), _dense_ising(4, 1.0, 0.7))


def test_sum_and_scaling():
    chain = build_lattice("chain", [2])
    A = OperatorSum.empty(chain, 2).add([0], Z)
    B = OperatorSum.empty(chain, 2).add([1], X)
    combined = assemble_dense(A + B.scaled(2.0) - A)
    assert np.allclose(combined, 2.0 * np.kron(I, X))


def test_merged_collects_supports():
    chain = build_lattice("chain", [2])
    op = OperatorSum.empty(chain, 2).add([0], Z).add([0], X).add([0, 1], np.kron(Z, Z))
    merged = op.merged()
    assert len(merged.terms) == 2
    assert np.allclose(merged.terms[0].block, Z + X)


def test_contract_legs():
    dims = (2, 2)
    zero = np.array([1, 0], dtype=complex)
    plus = np.array([1, 1], dtype=complex) / np.sqrt(2)
    block = np.kron(Z, X)
    assert np.allclose(contract_legs(block, [0, 1], [1], dims, {0: zero}), X)
    assert np.allclose(contract_legs(block, [0, 1], [1], dims, {0: plus}), 0 * X)
    assert np.allclose(contract_legs(block, [0, 1], [], dims, {0: zero, 1: plus}), [[1.0]])


def test_local_unitary_maps_zero_to_vector():
    rng = np.random.default_rng(3)
    for q in (2, 3):
        a = rng.standard_normal(q) + 1j * rng.standard_normal(q)
        a /= np.linalg.norm(a)
        U = local_unitary(a)
        assert np.allclose(U.conj().T @ U, np.eye(q))
        assert np.allclose(U[:, 0], a)
    U = local_unitary(np.array([0, 1], dtype=complex))
    assert np.allclose(U[:, 0], [0, 1])


def test_rotation_into_state_frame():
    chain = build_lattice("chain", [1])
    H = OperatorSum.empty(chain, 2).add([0], Z)
    one = ProductState.from_digits([1], 2)
    rotated = H.rotated(one.frame())
    assert np.isclose(rotated.terms[0].block[0, 0], -1.0)


def test_local_norms_on_bonds():
    chain = build_lattice("chain", [4])
    H = OperatorSum.empty(chain, 2)
    for i, j in chain.edges:
        H.add([i, j], np.kron(Z, Z))
    assert H.h_norm(0.0) == pytest.approx(2.0)
    assert H.h_norm(0.5) == pytest.approx(2.0 * np.e)
    assert H.kappa_norm(1.0) == pytest.approx(2.0 * np.e)
    assert H.k_norm(0.5) == pytest.approx(2.0 * np.e)


def test_local_norm_single_site_convention():
    chain = build_lattice("chain", [5])
    field = OperatorSum.empty(chain, 2)
    for i in range(5):
        field.add([i], 0.1 * X)
    # single sites count as diameter 1 in the kappa weight, 0 in the h weight
    assert local_norm(field, "kappa", (0.7, 2.0)) == pytest.approx(0.1 * np.exp(0.7))
    assert local_norm(field, "h", 3.0) == pytest.approx(0.1)
    assert local_norm(field, "volume", 0.5) == pytest.approx(0.1 * np.exp(0.5))
    with pytest.raises(ConfigurationError, match="unknown norm kind"):
        local_norm(field, "sup", 1.0)


def test_product_state_helpers():
    state = ProductState.from_digits([0, 1, 0, 1], 2)
    assert state.label == "0101"
    assert state.is_computational()
    assert state.digits() == [0, 1, 0, 1]
    assert state.period() == 2
    assert np.isclose(state.dense()[0b0101], 1.0)
    with pytest.raises(ConfigurationError):
        ProductState.from_digits([2], 2)
    with pytest.raises(ConfigurationError):
        ProductState([np.array([1.0, 1.0])])


def test_key_convention_site_zero_most_significant():
    dims = (2, 3, 2)
    assert list(place_values(dims)) == [6, 2, 1]
    digits = np.array([[1, 2, 1]])
    assert digits_to_keys(digits, dims)[0] == 11
    assert keys_to_digits(np.array([11]), dims).tolist() == [[1, 2, 1]]


def test_constrained_basis_sizes():
    assert ComputationalBasis.constrained(build_lattice("chain", [10])).dimension == 144
    assert ComputationalBasis.constrained(build_lattice("chain", [10], periodic=True)).dimension == 123
    assert ComputationalBasis.constrained(build_lattice("square", [2, 2])).dimension == 7


def test_index_of_and_leaks():
    ring = build_lattice("chain", [4], periodic=True)
    basis = ComputationalBasis.constrained(ring)
    assert basis.index_of(np.array([0b1111]))[0] == -1
    assert basis.index_of(np.array([0]))[0] == 0
    with pytest.raises(ConfigurationError, match="weight"):
        basis.state_vector(ProductState.from_digits([1, 1, 0, 0], 2))


def test_pxp_in_constrained_basis_is_projected_full_matrix():
    ring = build_lattice("chain", [6], periodic=True)
    H = pxp_hamiltonian(ring)
    basis = ComputationalBasis.constrained(ring)
    small = assemble_operator(H, basis).toarray()
    full = assemble_dense(H)
    assert np.allclose(small, full[np.ix_(basis.keys, basis.keys)])
    assert np.allclose(small, small.T)


def test_dense_limit_guard():
    chain = build_lattice("chain", [6])
    H = OperatorSum.empty(chain, 2).add([0], Z)
    with pytest.raises(NumericalGuardError, match="DENSE_LIMIT"):
        assemble_dense(H, limit=16)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
