"""
Prethermal decomposition H = H0 + V around product states
"""

import sys

sys.path.insert(0, "src")

import numpy as np
import pytest

from basis import assemble_dense
from decomposition import (
    ball_center,
    choose_cutoff_r,
    kappa_norm_closed_form,
    overlap_crossing,
    prethermal_decompose,
    radius_scaling_study,
)
from errors import ConfigurationError
from lattice import build_lattice
from models import ising_hamiltonian, p00pp_hamiltonian
from operator_sum import ProductState


def _ring(n):
    return build_lattice("chain", [n], periodic=True)


def _assert_eigenstate(op, psi0, E0):
    M = assemble_dense(op)
    v = psi0.dense()
    assert np.linalg.norm(M @ v - E0 * v) < 1e-10


@pytest.mark.parametrize("r", [0, 1, 2])
def test_zero_state_is_eigenstate_of_H0(r):
    H = ising_hamiltonian(_ring(8), delta=1.0, g=0.3, eps=0.1)
    zero = ProductState.from_digits([0] * 8, 2, "zero")
    dec = prethermal_decompose(H, zero, r)
    v = zero.dense()
    E = np.vdot(v, assemble_dense(H) @ v).real
    assert dec.E0 == pytest.approx(E)
    _assert_eigenstate(dec.H0, zero, dec.E0)
    assert dec.reconstruction_error(H, seed=1) < 1e-10


def test_tilted_state_is_eigenstate_of_H0():
    H = p00pp_hamiltonian(_ring(6), 0.2)
    v = np.array([np.cos(0.4), np.exp(0.3j) * np.sin(0.4)])
    tilted = ProductState([v] * 6, "tilted")
    dec = prethermal_decompose(H, tilted, 1)
    _assert_eigenstate(dec.H0, tilted, dec.E0)
    assert dec.reconstruction_error(H) < 1e-10


def test_transverse_field_profile():
    g = 0.3
    H = ising_hamiltonian(_ring(10), delta=1.0, g=g)
    zero = ProductState.from_digits([0] * 10, 2, "zero")
    for r in (0, 1):
        dec = prethermal_decompose(H, zero, r, kappa1=0.5)
        eps = dec.eps_values()
        assert len(eps) == 10
        assert np.ptp(eps) < 1e-12
        assert eps[0] == pytest.approx(g)
        assert dec.orthogonality_violation < 1e-12
        assert dec.norm_report["V_kappa1"] == pytest.approx(kappa_norm_closed_form(r, g, 0.5))


def test_stabilized_state_has_no_perturbation():
    H = ising_hamiltonian(_ring(6), delta=1.0, eps=0.2)
    zero = ProductState.from_digits([0] * 6, 2, "zero")
    dec = prethermal_decompose(H, zero, 1)
    assert not dec.V.terms
    assert dec.eps_profile == {}
    assert dec.E0 == pytest.approx(-6.0 - 1.2)


def test_h0_gap_reported():
    H = p00pp_hamiltonian(_ring(8), 0.1)
    zero = ProductState.from_digits([0] * 8, 2, "zero")
    dec = prethermal_decompose(H, zero, 0, probe_R=1)
    assert dec.norm_report["probe_R"] == 1
    assert dec.norm_report["H0_delta_at_probe"] > 0
    assert set(dec.to_dict()) >= {"E0", "r", "eps_profile", "norms", "orthogonality_max_violation"}


def test_ball_centres_translate():
    ring = _ring(10)
    assert ball_center(ring, [3], 1) == 2
    assert ball_center(ring, [4], 1) == 3
    assert ball_center(ring, [0], 1) == 9
    assert ball_center(ring, [2, 3], 1) == 2
    chain = build_lattice("chain", [10])
    assert ball_center(chain, [0], 1) == 0
    with pytest.raises(ConfigurationError):
        ball_center(chain, [0, 5], 1)


def test_choose_cutoff_r():
    assert choose_cutoff_r(1.0, 2.0, 1, 0.5, 1.0, 1.0) == int(np.floor(np.log(8.0))) + 1
    with pytest.raises(ConfigurationError):
        choose_cutoff_r(1.0, 2.0, 1, 0.0, 1.0, 1.0)


def test_bad_inputs():
    H = ising_hamiltonian(_ring(4), delta=1.0, g=0.2)
    zero = ProductState.from_digits([0] * 4, 2)
    with pytest.raises(ConfigurationError):
        prethermal_decompose(H, zero, -1)
    with pytest.raises(ConfigurationError):
        prethermal_decompose(H, zero.dense(), 0)


def test_small_scaling_study():
    study = radius_scaling_study([0.2, 0.25], probe_R_max=3, solver="dense")
    assert [row.eps for row in study.rows] == [0.2, 0.25]
    for row in study.rows:
        assert row.R_full >= -1
        assert -1 <= row.R_H0 <= 3
        assert 1 <= len(row.overlaps_full) <= 4
        assert all(0.0 < p <= 1.0 + 1e-12 for p in row.overlaps_full)
        assert len(row.deltas_full) == len(row.overlaps_full)
        if not row.extrapolated_full:
            # a measured crossing stops the scan right after it
            assert row.overlaps_full[-1] < 0.5
            assert row.R_full == len(row.overlaps_full) - 2
    assert len(study.to_rows()) == 2
    assert "deltas_full_offset" in study.to_rows()[0]
    with pytest.raises(ConfigurationError):
        radius_scaling_study([0.6], probe_R_max=2)
    with pytest.raises(ConfigurationError):
        radius_scaling_study([0.2], probe_R_max=2, overlap_threshold=1.5)


def test_overlap_crossing_interpolates_and_extrapolates():
    # ln p = -0.1 L exactly: ln 0.5 is reached at L = 10 ln 2
    decay = [np.exp(-0.1 * L) for L in range(1, 6)]
    crossing, extrapolated = overlap_crossing(decay, 0.5)
    assert extrapolated
    assert crossing == pytest.approx(10 * np.log(2.0))

    measured = [0.9, 0.7, 0.4]
    crossing, extrapolated = overlap_crossing(measured, 0.5)
    assert not extrapolated
    expected = 2 + (np.log(0.5) - np.log(0.7)) / (np.log(0.4) - np.log(0.7))
    assert crossing == pytest.approx(expected)

    assert overlap_crossing([0.3, 0.2], 0.5) == (None, False)
    assert overlap_crossing([0.9, 0.9, 0.9], 0.5) == (None, True)


@pytest.mark.slow
def test_radius_scaling_slopes():
    study = radius_scaling_study([0.10, 0.15, 0.20, 0.25], probe_R_max=12)
    assert study.slope_full is not None
    assert study.slope_H0 is not None
    assert -2.4 <= study.slope_full <= -1.6
    assert -1.3 <= study.slope_H0 <= -0.7
    for radii in ([row.R_full for row in study.rows], [row.R_H0 for row in study.rows]):
        assert radii == sorted(radii, reverse=True)
    # windows never cover the whole ring, so a deep scan keeps the H0 range it found
    assert all(not row.censored_H0 for row in study.rows)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
