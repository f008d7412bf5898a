"""
Lattice geometry tests: distances, balls, boundaries, subset enumeration
"""

import sys

sys.path.insert(0, "src")

import pytest

from errors import ConfigurationError, NumericalGuardError
from lattice import (
    ball,
    boundary,
    boundary_volume_constant,
    build_lattice,
    enumerate_connected_subsets,
    lattice_from_config,
    maximal_windows,
)


def test_chain_distances_open_and_periodic():
    open_chain = build_lattice("chain", [8])
    ring = build_lattice("chain", [8], periodic=True)
    assert open_chain.distance(0, 7) == 7
    assert ring.distance(0, 7) == 1
    assert ring.distance(0, 4) == 4
    assert len(open_chain.edges) == 7
    assert len(ring.edges) == 8


def test_square_neighbours():
    grid = build_lattice("square", [3, 3])
    torus = build_lattice("square", [3, 3], periodic=True)
    assert grid.neighbors(4) == (1, 3, 5, 7)
    assert grid.neighbors(0) == (1, 3)
    assert torus.neighbors(0) == (1, 2, 3, 6)
    assert grid.site_index((1, 2)) == 5
    assert grid.site_index((3, 0)) is None


def test_ball_and_boundary_on_chain():
    chain = build_lattice("chain", [10])
    B = ball(chain, [3], 1)
    assert B.sites == (2, 3, 4)
    assert B.diameter == 2 and B.connected
    assert boundary(chain, B).sites == (2, 4)
    assert boundary(chain, range(10)).sites == ()


def test_ball_rejects_negative_radius():
    chain = build_lattice("chain", [4])
    with pytest.raises(ConfigurationError):
        ball(chain, [0], -1)


def test_connected_subset_counts():
    chain = build_lattice("chain", [7])
    assert len(list(enumerate_connected_subsets(chain, max_volume=7))) == 7 * 8 // 2

    ring = build_lattice("chain", [6], periodic=True)
    assert len(list(enumerate_connected_subsets(ring, max_volume=6))) == 6 * 5 + 1

    square = build_lattice("square", [2, 2])
    assert len(list(enumerate_connected_subsets(square, max_volume=4))) == 13


def test_subsets_are_distinct_and_connected():
    grid = build_lattice("square", [3, 3])
    sets = [S.sites for S in enumerate_connected_subsets(grid, max_volume=4)]
    assert len(sets) == len(set(sets))
    assert all(grid.is_connected(s) for s in sets)


def test_anchored_enumeration_counts_trominoes():
    grid = build_lattice("square", [5, 5])
    anchored = list(enumerate_connected_subsets(grid, anchor=12, max_volume=3))
    # centre alone, 4 dominoes, 18 trominoes through the centre
    assert len(anchored) == 1 + 4 + 18
    assert all(12 in S for S in anchored)


def test_anchored_chain_counts():
    chain = build_lattice("chain", [6])
    for j in range(6):
        count = len(list(enumerate_connected_subsets(chain, anchor=j, max_volume=6)))
        assert count == (j + 1) * (6 - j)


def test_diameter_cap():
    chain = build_lattice("chain", [9])
    sets = list(enumerate_connected_subsets(chain, max_diam=2))
    assert max(S.diameter for S in sets) == 2
    assert len(sets) == 9 + 8 + 7


def test_enumeration_guard():
    chain = build_lattice("chain", [10])
    with pytest.raises(NumericalGuardError, match="max_volume"):
        list(enumerate_connected_subsets(chain, max_volume=3, guard=5))


def test_enumeration_needs_a_cap():
    chain = build_lattice("chain", [4])
    with pytest.raises(ConfigurationError):
        list(enumerate_connected_subsets(chain))


def test_maximal_windows_on_chains():
    chain = build_lattice("chain", [8])
    ring = build_lattice("chain", [8], periodic=True)
    assert len(maximal_windows(chain, 2)) == 6
    assert len(maximal_windows(ring, 2)) == 8
    assert maximal_windows(ring, 4)[0].sites == tuple(range(8))
    assert maximal_windows(ring, 2)[-1].sites == (0, 1, 7)


def test_boundary_volume_constant_on_chain():
    chain = build_lattice("chain", [6])
    assert boundary_volume_constant(chain, 4) == pytest.approx(1.0)


def test_bad_lattice_inputs():
    with pytest.raises(ConfigurationError):
        build_lattice("hexagonal", [3])
    with pytest.raises(ConfigurationError):
        build_lattice("square", [3])
    with pytest.raises(ConfigurationError):
        build_lattice("chain", [0])
    with pytest.raises(ConfigurationError):
        lattice_from_config({"extents": [4]})


def test_lattice_from_config():
    lat = lattice_from_config({"kind": "square", "extents": [2, 3], "periodic": [False, True]})
    assert lat.n_sites == 6
    assert lat.periodic == (False, True)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
