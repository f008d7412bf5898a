"""
Schrieffer-Wolff generator, iterated rotation and dressed-state probes
"""

import sys

sys.path.insert(0, "src")

import numpy as np
import pytest
import scipy.linalg as la

from eigen_solver import EigenPairs
from errors import ConfigurationError
from filters import filter_tables, time_domain_generator
from lattice import build_lattice
from models import helix_simple_parts, ising_hamiltonian, ising_parts
from operator_sum import PAULI, OperatorSum, ProductState, kron_all
from swt import (
    dressed_state,
    from_pauli_coefficients,
    generator_identity_residual,
    lifetime_probe,
    pauli_coefficients,
    pauli_weights,
    reduced_density_matrix,
    stabilizer_residual,
    swt_generator,
    swt_run,
    trace_distance,
    volume_truncate,
)

I, X, Y, Z = (PAULI[k] for k in "IXYZ")


@pytest.fixture(scope="module")
def tables():
    return filter_tables(1.0, n_max=200)


def _random_hermitian(rng, n, scale=1.0):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    A = (A + A.conj().T) / 2
    return scale * A / np.linalg.norm(A, 2)


def _eig(H):
    values, vectors = la.eigh(H)
    return EigenPairs(values, vectors)


def test_generator_identity_on_random_pairs(tables):
    rng = np.random.default_rng(2024)
    for _ in range(20):
        H0 = _random_hermitian(rng, 64, scale=4.0)
        V = _random_hermitian(rng, 64, scale=0.5)
        eig = _eig(H0)
        A = swt_generator(V, eig, tables)
        assert np.allclose(A, -A.conj().T, atol=1e-12)
        assert generator_identity_residual(A, V, eig, tables) <= 1e-10


def test_time_domain_oracle(tables):
    rng = np.random.default_rng(8)
    H0 = _random_hermitian(rng, 16, scale=1.5)
    V = _random_hermitian(rng, 16, scale=0.5)
    eig = _eig(H0)
    A_eig = swt_generator(V, eig, tables)
    A_time = time_domain_generator(V, eig, tables)
    assert np.linalg.norm(A_eig - A_time, 2) <= 1e-4


def test_two_level_generator(tables):
    eig = _eig(np.diag([0.0, 2.0]))
    A = swt_generator(0.1 * X, eig, tables)
    assert np.allclose(A, [[0.0, 0.05], [-0.05, 0.0]])


def _single_qubit_problem():
    lattice = build_lattice("chain", [1])
    H0 = OperatorSum.empty(lattice, 2).add([0], np.diag([0.0, 2.0]))
    V = OperatorSum.empty(lattice, 2).add([0], 0.1 * X)
    return H0, V, ProductState.from_digits([0], 2, "zero")


def test_two_level_energy_converges(tables):
    H0, V, psi0 = _single_qubit_problem()
    swt = swt_run(H0, V, psi0, 3, tables=tables)
    exact = 1.0 - np.sqrt(1.0 + 0.01)
    assert swt.order == 3
    assert swt.E_star == pytest.approx(exact, abs=1e-4)
    assert np.allclose(swt.generators[0], [[0.0, 0.05], [-0.05, 0.0]])


def test_zero_perturbation_is_trivial(tables):
    lattice = build_lattice("chain", [3])
    H0, _ = ising_parts(lattice, 1.0, 0.0, 0.2)
    V = OperatorSum.empty(lattice, 2)
    psi0 = ProductState.from_digits([0, 0, 0], 2)
    swt = swt_run(H0, V, psi0, 3, tables=tables)
    assert swt.order == 3
    assert all(row["norm_Vk"] == 0.0 for row in swt.to_rows())
    assert np.allclose(swt.D, 0.0)
    assert swt.E_star == pytest.approx(swt.E0)


def test_ising_trace_properties(tables):
    lattice = build_lattice("chain", [6])
    H0, V = ising_parts(lattice, 1.0, 0.1, 0.2)
    psi0 = ProductState.from_digits([0] * 6, 2, "zero")
    swt = swt_run(H0, V, psi0, 3, tables=tables)
    rows = swt.to_rows()
    assert [row["k"] for row in rows] == list(range(1, swt.order + 1))
    norms = [row["norm_Vk"] for row in rows]
    assert norms == sorted(norms, reverse=True)
    assert norms[0] == pytest.approx(0.6)
    for row in rows:
        assert row["stabilizer_residual"] <= 1e-10
        assert row["spectrum_drift"] <= 1e-9
        assert row["identity_residual"] <= 1e-10

    H_star = swt.h_star()
    v = swt.psi0
    assert np.linalg.norm(H_star @ v - swt.E_star * v) < 1e-10


def test_volume_cutoff_keeps_spectrum_through_garbage(tables):
    lattice = build_lattice("chain", [4])
    H0, V = ising_parts(lattice, 1.0, 0.15, 0.2)
    psi0 = ProductState.from_digits([0] * 4, 2)
    swt = swt_run(H0, V, psi0, 3, size_cutoff=1, tables=tables)
    rows = swt.to_rows()
    assert rows[0]["discarded_weight"] == 0.0
    assert rows[1]["discarded_weight"] > 0.0
    assert all(row["spectrum_drift"] <= 1e-9 for row in rows)
    assert swt.garbage is not None


def test_swt_input_errors(tables):
    chain = build_lattice("chain", [4])
    H = ising_hamiltonian(chain, 1.0, 0.3, 0.1)
    _, V = ising_parts(chain, 1.0, 0.1, 0.0)
    psi0 = ProductState.from_digits([0] * 4, 2)
    with pytest.raises(ConfigurationError, match="prethermal_decompose"):
        swt_run(H, V, psi0, 2, tables=tables)
    with pytest.raises(ConfigurationError):
        swt_run(H, V, psi0, 2)
    with pytest.raises(ConfigurationError):
        swt_run(H, V, psi0, 0, tables=tables)

    helix = build_lattice("chain", [3])
    H0, Vh = helix_simple_parts(helix, 3, 0.0, 1.0, 0.05)
    zero = ProductState.from_digits([0] * 3, 3)
    with pytest.raises(ConfigurationError, match="qubit"):
        swt_run(H0, Vh, zero, 2, size_cutoff=1, tables=tables)


def test_pauli_expansion():
    O = np.kron(X, Z)
    c = pauli_coefficients(O, 2)
    assert c[1, 3] == pytest.approx(1.0)
    assert np.sum(np.abs(c)) == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    M = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    assert np.allclose(from_pauli_coefficients(pauli_coefficients(M, 3)), M)
    weights = pauli_weights(2)
    assert weights[0, 0] == 0 and weights[1, 0] == 1 and weights[1, 3] == 2


def test_volume_truncate():
    O = np.kron(X, I) + 0.5 * np.kron(Z, Z)
    kept, dropped = volume_truncate(O, 2, 1)
    assert np.allclose(kept, np.kron(X, I))
    assert dropped == pytest.approx(0.5)
    with pytest.raises(ConfigurationError):
        pauli_coefficients(np.eye(3), 1)


def test_stabilizer_residual():
    psi = ProductState.from_digits([0, 0], 2)
    assert stabilizer_residual(np.kron(Z, I), psi) == pytest.approx(0.0)
    assert stabilizer_residual(np.kron(X, I), psi) == pytest.approx(1.0)
    assert stabilizer_residual(np.kron(X, I), psi.dense()) == pytest.approx(1.0)


def test_density_matrices_and_trace_distance():
    v = kron_all([np.array([1.0, 0.0]), np.array([0.0, 1.0])])
    rho0 = reduced_density_matrix(v, (2, 2), [0])
    rho1 = reduced_density_matrix(v, (2, 2), [1])
    assert np.allclose(rho0, np.diag([1.0, 0.0]))
    assert trace_distance(rho0, rho1) == pytest.approx(2.0)
    assert trace_distance(rho0, rho0) == pytest.approx(0.0)


def test_dressed_state_and_unitary(tables):
    H0, V, psi0 = _single_qubit_problem()
    swt = swt_run(H0, V, psi0, 3, tables=tables)
    assert np.allclose(dressed_state(swt, order=0), swt.psi0)
    U = swt.accumulated_unitary()
    assert np.allclose(U.conj().T @ U, np.eye(2))
    assert np.allclose(dressed_state(swt), U @ swt.psi0)
    with pytest.raises(ConfigurationError):
        dressed_state(swt, order=5)


def test_lifetime_probe_basics(tables):
    lattice = build_lattice("chain", [5])
    H0, V = ising_parts(lattice, 1.0, 0.1, 0.3)
    psi0 = ProductState.from_digits([0] * 5, 2)
    swt = swt_run(H0, V, psi0, 2, tables=tables)
    drift = lifetime_probe(H0 + V, swt, psi0, [2], [0.0, 1.0, 2.0])
    assert drift[0] == pytest.approx(0.0, abs=1e-12)
    assert np.all(drift >= 0)
    with pytest.raises(ConfigurationError):
        lifetime_probe(H0 + V, swt, psi0, [0, 1, 2, 3, 4], [0.0])


def _plateau_drifts(n, tables):
    lattice = build_lattice("chain", [n])
    H0, V = ising_parts(lattice, 1.0, 0.05, 0.3)
    psi0 = ProductState.from_digits([0] * n, 2)
    swt = swt_run(H0, V, psi0, 4, tables=tables)
    assert len(swt.generators) == 3
    site = [n // 2]
    return [lifetime_probe(H0 + V, swt, psi0, site, [0.0, 10.0], order=j)[-1] for j in (0, 1, 3)]


def test_dressing_flattens_local_dynamics(tables):
    bare, first, third = _plateau_drifts(8, tables)
    assert third <= first <= bare
    assert third < bare


@pytest.mark.slow
def test_dressing_flattens_local_dynamics_n12(tables):
    bare, first, third = _plateau_drifts(12, tables)
    assert third <= first <= bare
    assert third < bare


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
