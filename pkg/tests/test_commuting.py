"""
Commuting-projector models: syndromes, local SWT step, volume checks
"""

import sys

sys.path.insert(0, "src")

import numpy as np
import pytest

from basis import assemble_dense
from commuting import (
    CommutingModel,
    Factor,
    block_diagonal_residual,
    check_local_nondegeneracy,
    commuting_ising_model,
    commuting_swt_step,
    relative_bound_check,
    restricted_inverse_gain,
    syndrome_decompose,
    syndrome_sum,
    term_commutation_residual,
    volume_block_check,
    wall_hopping_perturbation,
)
from errors import ConfigurationError
from lattice import build_lattice
from models import stripe_state
from operator_sum import PAULI, OperatorSum, ProductState, kron_all

I, X, Z = PAULI["I"], PAULI["X"], PAULI["Z"]


def _bond_supports(model, syndrome):
    return {model.factors[fid].support for fid in syndrome}


@pytest.fixture
def chain_model():
    return commuting_ising_model(build_lattice("chain", [6]), 1.0)


def test_z_has_empty_syndrome(chain_model):
    O = OperatorSum.empty(chain_model.lattice, 2).add([2], Z)
    terms = syndrome_decompose(O, chain_model)
    assert len(terms) == 1
    assert terms[0].syndrome == frozenset()


def test_flip_with_wall_factor(chain_model):
    block = kron_all([I, X, I]) - kron_all([Z, X, Z])
    O = OperatorSum.empty(chain_model.lattice, 2).add([1, 2, 3], block)
    terms = syndrome_decompose(O, chain_model)
    assert len(terms) == 1
    term = terms[0]
    assert _bond_supports(chain_model, term.syndrome) == {(1, 2), (2, 3)}
    assert term.support == (1, 2, 3)
    assert term_commutation_residual(term, chain_model) <= 1e-12


def test_square_flip_touches_four_bonds():
    model = commuting_ising_model(build_lattice("square", [3, 3]), 1.0)
    O = OperatorSum.empty(model.lattice, 2).add([4], X)
    (term,) = syndrome_decompose(O, model)
    assert len(term.syndrome) == 4
    assert term.support == (1, 3, 4, 5, 7)


def test_general_path_matches_pauli_path(chain_model):
    rng = np.random.default_rng(3)
    M = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    M = M + M.conj().T
    O = OperatorSum.empty(chain_model.lattice, 2).add([2, 3], M)
    generic = CommutingModel(chain_model.lattice, chain_model.qudit_dims, chain_model.factors, chain_model.ground_state)
    for model in (chain_model, generic):
        terms = syndrome_decompose(O, model)
        assert all(term_commutation_residual(t, model) <= 1e-12 for t in terms)
        total = syndrome_sum(terms, model)
        assert np.allclose(assemble_dense(total), assemble_dense(O))


def test_single_flip_generator_norm(chain_model):
    O = OperatorSum.empty(chain_model.lattice, 2).add([2], X)
    (term,) = syndrome_decompose(O, chain_model)
    A, PV = commuting_swt_step(chain_model, term)
    assert A.norm() == pytest.approx(0.5)
    assert np.allclose(A.block, -A.block.conj().T)
    assert check_local_nondegeneracy(chain_model, term) <= 1e-12


@pytest.mark.parametrize("lattice_args", [("chain", [6]), ("square", [3, 3])])
def test_generator_bounds_for_random_terms(lattice_args):
    model = commuting_ising_model(build_lattice(*lattice_args), 1.0)
    edges = model.lattice.edges
    rng = np.random.default_rng(11)
    for _ in range(100):
        i, j = edges[int(rng.integers(len(edges)))]
        M = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        M = (M + M.conj().T) / 2
        O = OperatorSum.empty(model.lattice, 2).add([i, j], M)
        for term in syndrome_decompose(O, model):
            A, PV = commuting_swt_step(model, term)
            assert model.delta_prime * A.norm() <= term.norm() + 1e-10
            assert PV.norm() <= 2 * term.norm() + 1e-10
            assert block_diagonal_residual(model, syndrome_sum([PV], model)) <= 1e-10


def test_restricted_inverse_gain_within_bound():
    model = commuting_ising_model(build_lattice("square", [4, 4]), 1.0)
    gain, bound = restricted_inverse_gain(model, [5])
    assert gain == pytest.approx(0.25)
    assert gain <= bound


def test_volume_check_on_open_square():
    model = commuting_ising_model(build_lattice("square", [4, 4]), 1.0)
    min_eig, witness = volume_block_check(model, None, None, 3)
    assert min_eig == pytest.approx(2.0)
    assert min_eig >= model.delta_prime
    assert witness["subspace_dimension"] > 0
    assert len(witness["flipped_sites"]) >= 1


def test_relative_bound_with_scaled_model(chain_model):
    D = chain_model.hamiltonian().scaled(0.4)
    assert block_diagonal_residual(chain_model, D) <= 1e-12
    assert relative_bound_check(chain_model, D, None, 3) == pytest.approx(0.4)
    assert relative_bound_check(chain_model, None, None, 3) == 0.0
    min_eig, _ = volume_block_check(chain_model, D, None, 3)
    assert min_eig == pytest.approx(1.4)


def test_wall_hopping_is_block_diagonal(chain_model):
    D = wall_hopping_perturbation(chain_model, 0.2)
    assert block_diagonal_residual(chain_model, D) <= 1e-12
    square = commuting_ising_model(build_lattice("square", [3, 3]), 1.0)
    with pytest.raises(ConfigurationError, match="chains"):
        wall_hopping_perturbation(square, 0.2)


def test_off_diagonal_D_is_rejected(chain_model):
    D = OperatorSum.empty(chain_model.lattice, 2).add([1, 2, 3], 0.1 * kron_all([I, X, I]))
    with pytest.raises(ConfigurationError, match="block diagonal"):
        volume_block_check(chain_model, D, None, 2)


def test_model_validation():
    lattice = build_lattice("chain", [3])
    zz = (np.eye(4) + np.kron(Z, Z)) / 2
    xx = (np.eye(4) + np.kron(X, X)) / 2
    state = ProductState.from_digits([0, 0, 0], 2)
    with pytest.raises(ConfigurationError, match="do not commute"):
        CommutingModel(lattice, (2, 2, 2), [Factor((0, 1), 1.0, zz), Factor((1, 2), 1.0, xx)], state)
    with pytest.raises(ConfigurationError, match="projector"):
        CommutingModel(lattice, (2, 2, 2), [Factor((0, 1), 1.0, 2 * np.eye(4))], state)
    with pytest.raises(ConfigurationError):
        commuting_ising_model(lattice, 0.0)
    model = commuting_ising_model(lattice, 1.0)
    assert model.is_frustration_free()
    assert model.reference_energy(ProductState.from_digits([0, 1, 0], 2)) == pytest.approx(2.0)
    plus = np.array([1.0, 1.0]) / np.sqrt(2)
    zero = np.array([1.0, 0.0])
    with pytest.raises(ConfigurationError, match="joint eigenstate"):
        model.pattern(ProductState([plus, zero, zero]))


@pytest.mark.slow
def test_stripe_volume_metastability():
    lattice = build_lattice("square", [6, 6])
    model = commuting_ising_model(lattice, 1.0, stripe_state(lattice, [3, 3]))
    assert not model.is_frustration_free()
    min_eig, _ = volume_block_check(model, None, None, 5)
    assert min_eig == pytest.approx(model.delta_prime, abs=1e-8)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
