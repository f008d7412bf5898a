"""
Local gap scans, volume scans and the metastability diagnostics
"""

import sys

sys.path.insert(0, "src")

import numpy as np
import pytest
import scipy.linalg as la

from basis import assemble_dense
from eigen_solver import lowest_eigenpairs
from errors import ConfigurationError
from lattice import build_lattice, dimension_constant, enumerate_connected_subsets
from metastability import (
    GapRecord,
    GapScan,
    effective_window_hamiltonian,
    energy_tail_check,
    gap_scan,
    gs_overlap_threshold,
    metastability_range,
    robustness_shrink,
    volume_gap,
)
from models import ModelSpec, build_model, ising_hamiltonian, ising_parts, p00pp_hamiltonian
from operator_sum import ProductState, local_norm


def _ring(n):
    return build_lattice("chain", [n], periodic=True)


def _brute_force_gap(H, psi0, R):
    """min over every connected S with diam <= R of the complement-restricted gap"""
    best = np.inf
    for S in enumerate_connected_subsets(H.lattice, max_diam=R):
        M = effective_window_hamiltonian(H, psi0, S)
        phi = psi0.dense(S.sites)
        B = la.null_space(phi[None, :].conj())
        if B.shape[1] == 0:
            continue
        E0 = np.vdot(phi, M @ phi).real
        best = min(best, la.eigvalsh(B.conj().T @ M @ B)[0] - E0)
    return best


def test_ising_one_state_gaps_on_ring():
    H = ising_hamiltonian(_ring(12), delta=1.0, eps=0.1)
    one = ProductState.from_digits([1] * 12, 2, "one")
    scan = gap_scan(H, one, 3)
    expected = [4.0 - 2 * 0.1 * (R + 1) for R in range(4)]
    assert np.allclose(scan.deltas(), expected, atol=1e-10)
    assert metastability_range(scan) == 3


def test_ising_zero_state_gap_is_flat():
    H = ising_hamiltonian(_ring(10), delta=1.0, eps=0.1)
    zero = ProductState.from_digits([0] * 10, 2, "zero")
    assert np.allclose(gap_scan(H, zero, 3).deltas(), 4.2)


def test_boundary_modes():
    H = ising_hamiltonian(_ring(10), delta=1.0, eps=0.1)
    zero = ProductState.from_digits([0] * 10, 2, "zero")
    open_scan = gap_scan(H, zero, 2, boundary_mode="open")
    assert open_scan.deltas()[0] == pytest.approx(0.2)
    M = effective_window_hamiltonian(H, zero, [0, 1, 2], "periodic").real
    assert np.allclose(M, np.diag(np.diag(M)))
    assert np.diag(M)[1:].min() - M[0, 0] == pytest.approx(0.6)
    with pytest.raises(ConfigurationError, match="larger R"):
        gap_scan(H, zero, 0, boundary_mode="periodic")
    with pytest.raises(ConfigurationError):
        gap_scan(H, zero, 1, boundary_mode="mirror")


def test_p00pp_single_site_gap():
    eps = 0.05
    H = p00pp_hamiltonian(_ring(8), eps)
    zero = ProductState.from_digits([0] * 8, 2, "zero")
    scan = gap_scan(H, zero, 0)
    assert scan.deltas()[0] == pytest.approx(4.0 / 3.0 - 2 * eps, abs=1e-10)


def test_helix_motif_gaps():
    spec = ModelSpec.from_config({"model": "helix_antihelix", "N": 12, "periodic": True, "mu1": 0.2, "mu2": 0.12})
    H, states, _ = build_model(spec)
    scan = gap_scan(H, states["motif_012210"], 2)
    assert scan.record(1).delta == pytest.approx(0.68, abs=1e-9)
    assert scan.record(2).delta == pytest.approx(0.56, abs=1e-9)


def test_pxp_windows_stay_in_constrained_space():
    H, states, _ = build_model(ModelSpec.from_config({"model": "pxp", "N": 12}))
    assert H.constraint == "no_adjacent_ones"
    assert H.rotated(states["zero-minus"].frame()).constraint == "no_adjacent_ones"
    scan = gap_scan(H, states["zero-minus"], 3, translation_invariant=True, threads=1)
    deltas = scan.deltas()
    # an edge site next to |-> cannot flip, so odd windows add nothing
    assert deltas[0] == pytest.approx(2.0, abs=1e-10)
    assert deltas[1] == pytest.approx(2.0, abs=1e-10)
    assert deltas[2] == pytest.approx(1.246049, abs=1e-5)
    assert deltas[3] == pytest.approx(deltas[2], abs=1e-9)
    record = scan.record(2)
    phi = states["zero-minus"].dense(record.window.sites)
    assert abs(np.vdot(phi, record.vector)) < 1e-10


def test_pxp_state_outside_constraint_is_rejected():
    H, states, _ = build_model(ModelSpec.from_config({"model": "pxp", "N": 8}))
    with pytest.raises(ConfigurationError, match="constrained space"):
        gap_scan(H, states["one"], 1, threads=1)


@pytest.mark.parametrize(
    "n, r_max, g, eps",
    [(8, 3, 0.3, 0.1), (8, 3, 0.5, 0.0), (8, 3, 0.2, -0.3), (10, 4, 0.3, 0.1), (10, 4, 0.6, -0.2)],
)
def test_window_gap_matches_brute_force(n, r_max, g, eps):
    chain = build_lattice("chain", [n])
    H = ising_hamiltonian(chain, delta=1.0, g=g, eps=eps)
    zero = ProductState.from_digits([0] * n, 2, "zero")
    scan = gap_scan(H, zero, r_max, threads=1)
    for R in range(r_max + 1):
        assert scan.record(R).delta == pytest.approx(_brute_force_gap(H, zero, R), abs=1e-10)


def test_rotated_state_matches_brute_force():
    chain = build_lattice("chain", [6])
    H = ising_hamiltonian(chain, delta=1.0, g=0.4, eps=0.2)
    theta = 0.3
    v = np.array([np.cos(theta), np.sin(theta)], dtype=complex)
    tilted = ProductState([v] * 6, "tilted")
    scan = gap_scan(H, tilted, 2)
    for R in range(3):
        assert scan.record(R).delta == pytest.approx(_brute_force_gap(H, tilted, R), abs=1e-10)


def test_threads_and_translation_invariance_agree():
    H = ising_hamiltonian(_ring(10), delta=1.0, g=0.3, eps=0.1)
    zero = ProductState.from_digits([0] * 10, 2, "zero")
    serial = gap_scan(H, zero, 3, threads=1)
    pooled = gap_scan(H, zero, 3, threads=4)
    reduced = gap_scan(H, zero, 3, translation_invariant=True, threads=1)
    assert np.allclose(serial.deltas(), pooled.deltas())
    assert np.allclose(serial.deltas(), reduced.deltas())
    assert reduced.records[0].n_windows == 1


def test_stop_below_ends_scan():
    H = ising_hamiltonian(_ring(12), delta=1.0, eps=0.5)
    one = ProductState.from_digits([1] * 12, 2, "one")
    scan = gap_scan(H, one, 6, stop_below=0.0)
    # 4 - (R+1) crosses zero at R = 3
    assert [r.size for r in scan.records] == [0, 1, 2, 3]
    assert metastability_range(scan) == 2


def test_excitation_vector_is_orthogonal():
    H = ising_hamiltonian(_ring(8), delta=1.0, g=0.3)
    zero = ProductState.from_digits([0] * 8, 2, "zero")
    record = gap_scan(H, zero, 2).record(2)
    phi = zero.dense(record.window.sites)
    assert abs(np.vdot(phi, record.vector)) < 1e-10
    assert 0.0 < record.gs_overlap <= 1.0 + 1e-12


def test_volume_gap_anchored_at_centre():
    grid = build_lattice("square", [3, 3])
    H = ising_hamiltonian(grid, delta=1.0)
    zero = ProductState.from_digits([0] * 9, 2, "zero")
    scan = volume_gap(H, zero, 3, anchor_policy="center")
    assert np.allclose(scan.deltas(), [8.0, 6.0, 4.0])
    assert scan.to_rows()[0]["V"] == 1
    everywhere = volume_gap(H, zero, 2, anchor_policy="all")
    assert np.allclose(everywhere.deltas(), [4.0, 4.0])


def test_bad_inputs():
    H = ising_hamiltonian(_ring(4), delta=1.0)
    with pytest.raises(ConfigurationError):
        gap_scan(H, ProductState.from_digits([0] * 3, 2), 1)
    with pytest.raises(ConfigurationError):
        gap_scan(H, ProductState.from_digits([0] * 4, 2), 1, solver="magic")
    with pytest.raises(ConfigurationError):
        volume_gap(H, ProductState.from_digits([0] * 4, 2), 2, anchor_policy="middle")


def test_robustness_and_overlap_helpers():
    assert robustness_shrink(1.0, 10.0, 0.25, 2, 1.0) == pytest.approx((0.5, np.sqrt(2.0)))
    assert robustness_shrink(1.0, 3.0, 0.0, 1, 1.0) == (0.5, 3.0)
    assert gs_overlap_threshold(1.0, 2.0) == pytest.approx(0.75)
    with pytest.raises(ConfigurationError):
        gs_overlap_threshold(1.0, 0.0)


def test_gap_does_not_depend_on_system_size():
    zero = {n: ProductState.from_digits([0] * n, 2, "zero") for n in (10, 14)}
    scans = {
        n: gap_scan(ising_hamiltonian(_ring(n), delta=1.0, g=0.3, eps=0.1), zero[n], 3, threads=1)
        for n in (10, 14)
    }
    assert np.allclose(scans[10].deltas(), scans[14].deltas(), atol=1e-12)


@pytest.mark.parametrize("g, eps", [(0.0, 0.1), (0.3, 0.1), (0.5, -0.2)])
def test_gap_bounded_by_local_norm(g, eps):
    H = ising_hamiltonian(_ring(10), delta=1.0, g=g, eps=eps)
    zero = ProductState.from_digits([0] * 10, 2, "zero")
    scan = gap_scan(H, zero, 3, threads=1)
    assert scan.deltas().max() <= 2.0 * local_norm(H, "h", 0.0) + 1e-12


def test_robustness_shrink_holds_for_transverse_field():
    ring = _ring(12)
    H0, V = ising_parts(ring, 1.0, 0.5, 0.1)
    zero = ProductState.from_digits([0] * 12, 2, "zero")
    R = 3
    delta = gap_scan(H0, zero, R, threads=1).deltas().min()
    assert delta == pytest.approx(4.2)
    half, R_new = robustness_shrink(delta, R, local_norm(V, "h", 0.0), 1, dimension_constant(ring, R))
    assert R_new < R
    perturbed = gap_scan(H0 + V, zero, int(np.floor(R_new)), threads=1)
    assert perturbed.deltas().min() >= half


def test_metastability_range_negative_start():
    window = build_lattice("chain", [2]).site_set([0])
    records = [GapRecord(0, -0.1, window, np.zeros(2), 1.0)]
    assert metastability_range(GapScan(records, "product")) == -1


def test_energy_tail_inequality_on_random_excitations():
    chain = _ring(10)
    H0 = p00pp_hamiltonian(chain, 0.0)
    zero = ProductState.from_digits([0] * 10, 2, "zero")
    delta = gap_scan(H0, zero, 2).deltas().min()
    assert delta > 0
    eig = lowest_eigenpairs(assemble_dense(H0), 2**10, mode="dense")
    rng = np.random.default_rng(17)
    for _ in range(1000):
        start = int(rng.integers(10))
        size = int(rng.integers(1, 4))
        sites = sorted({(start + k) % 10 for k in range(size)})
        phi = rng.standard_normal(2**size) + 1j * rng.standard_normal(2**size)
        phi[0] = 0.0
        lhs, rhs = energy_tail_check(H0, eig, zero, sites, phi, delta)
        assert lhs >= rhs - 1e-12


def test_energy_tail_needs_eigenstate():
    chain = _ring(6)
    H = ising_hamiltonian(chain, delta=1.0, g=0.5)
    zero = ProductState.from_digits([0] * 6, 2, "zero")
    eig = lowest_eigenpairs(assemble_dense(H), 64, mode="dense")
    with pytest.raises(ConfigurationError, match="eigenstate"):
        energy_tail_check(H, eig, zero, [0], np.array([0.0, 1.0]), 1.0)


@pytest.mark.slow
def test_pxp_metastability_range():
    H, states, _ = build_model(ModelSpec.from_config({"model": "pxp", "N": 20}))
    scan = gap_scan(H, states["zero-minus"], 8, translation_invariant=True)
    deltas = scan.deltas()
    assert np.all(deltas[:8] > 0)
    assert deltas[8] <= 1e-10
    for k in (1, 2, 3):
        assert deltas[2 * k + 1] == pytest.approx(deltas[2 * k], abs=1e-9)
    assert metastability_range(scan) == 7


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
