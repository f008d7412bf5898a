"""
Translation/inversion sectors on rings (k in {0, pi}, inversion j -> N-1-j).

A sector is stored as an isometry from the sector into its parent
computational basis; operators are assembled as iso^T H iso.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
from scipy import sparse

from basis import ComputationalBasis, assemble_operator, digits_to_keys
from errors import ConfigurationError
from lattice import build_lattice
from operator_sum import OperatorSum

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12
TRACE_CHECK_MAX_N = 14


def _group_images(basis: ComputationalBasis):
    """Yield (translation m, reflected flag, image keys) for the dihedral group"""
    digits = basis.digits()
    for reflected in (False, True):
        for m in range(basis.n_sites):
            d = np.roll(digits, m, axis=1)
            if reflected:
                d = d[:, ::-1]
            yield m, reflected, digits_to_keys(d, basis.dims)


def _character(m: int, reflected: bool, k_sign: int, inv: int) -> int:
    value = k_sign**m
    return value * inv if reflected else value


def _momentum_sign(k: float) -> int:
    if abs(k) < 1e-12:
        return 1
    if abs(abs(k) - np.pi) < 1e-9:
        return -1
    raise ConfigurationError(f"only k = 0 or pi sectors are supported, got {k}")


@dataclass
class SectorBasis:
    """Joint (k, inversion) sector of a ring's computational basis"""

    parent: ComputationalBasis
    k: float
    inv: int
    representatives: np.ndarray
    norms: np.ndarray
    isometry: sparse.csr_matrix
    predicate: str
    labels: Dict = field(default_factory=dict)

    is_sector = True

    @property
    def dimension(self) -> int:
        return int(self.representatives.size)

    @property
    def n_sites(self) -> int:
        return self.parent.n_sites

    def project(self, vec: np.ndarray) -> np.ndarray:
        return self.isometry.T @ vec

    def expand(self, vec: np.ndarray) -> np.ndarray:
        return self.isometry @ vec

    def assemble(self, op: OperatorSum) -> sparse.csr_matrix:
        parent_matrix = assemble_operator(op, self.parent)
        check_ring_symmetric(parent_matrix, self.parent)
        return (self.isometry.T @ parent_matrix @ self.isometry).tocsr()


def symmetry_permutation(basis: ComputationalBasis, reflected: bool) -> sparse.csr_matrix:
    """Permutation matrix of one-site translation (or of inversion) on the basis"""
    digits = basis.digits()
    image = digits[:, ::-1] if reflected else np.roll(digits, 1, axis=1)
    rows = basis.index_of(digits_to_keys(image, basis.dims))
    if np.any(rows < 0):
        raise ConfigurationError("basis is not closed under the ring symmetries")
    dim = basis.dimension
    return sparse.csr_matrix((np.ones(dim), (rows, np.arange(dim))), shape=(dim, dim))


def check_ring_symmetric(matrix: sparse.spmatrix, basis: ComputationalBasis):
    for reflected, name in ((False, "translation"), (True, "inversion")):
        P = symmetry_permutation(basis, reflected)
        diff = P @ matrix @ P.T - matrix
        if diff.nnz and np.max(np.abs(diff.data)) > SYMMETRY_TOL:
            raise ConfigurationError(f"operator is not {name}-invariant; symmetry sectors do not apply")


def projector_trace(basis: ComputationalBasis, k: float, inv: int) -> int:
    """Tr P_{k,inv} = (1/|G|) sum_g chi(g) #fixed(g)"""
    k_sign = _momentum_sign(k)
    total = 0
    for m, reflected, image in _group_images(basis):
        fixed = int(np.count_nonzero(image == basis.keys))
        total += _character(m, reflected, k_sign, inv) * fixed
    order = 2 * basis.n_sites
    if total % order:
        raise ConfigurationError("projector trace is not an integer; inconsistent sector labels")
    return total // order


def translation_inversion_sector(parent: ComputationalBasis, k: float, inv: int) -> SectorBasis:
    """Sector basis from orbit-minimal representatives of the dihedral group"""
    n = parent.n_sites
    if inv not in (1, -1):
        raise ConfigurationError("inversion label must be +1 or -1")
    k_sign = _momentum_sign(k)
    if k_sign == -1 and n % 2:
        raise ConfigurationError("k = pi needs an even number of sites")

    keys = parent.keys
    rep = keys.copy()
    for _, _, image in _group_images(parent):
        np.minimum(rep, image, out=rep)

    # coefficient of |z> in sum_g chi(g) g|rep(z)>
    coeff = np.zeros(keys.size)
    for m, reflected, image in _group_images(parent):
        coeff += np.where(image == rep, _character(m, reflected, k_sign, inv), 0)

    rep_keys, rep_of = np.unique(rep, return_inverse=True)
    norm2 = np.bincount(rep_of, weights=coeff**2, minlength=rep_keys.size)
    alive = norm2 > 1e-10
    sector_index = np.full(rep_keys.size, -1)
    sector_index[alive] = np.arange(int(alive.sum()))
    cols = sector_index[rep_of]
    keep = (cols >= 0) & (np.abs(coeff) > 0)
    norms = np.sqrt(norm2[alive])
    values = coeff[keep] / norms[cols[keep]]
    iso = sparse.csr_matrix(
        (values, (np.flatnonzero(keep), cols[keep])), shape=(parent.dimension, int(alive.sum()))
    )

    sector = SectorBasis(
        parent=parent,
        k=0.0 if k_sign == 1 else np.pi,
        inv=inv,
        representatives=rep_keys[alive],
        norms=norms,
        isometry=iso,
        predicate=parent.predicate,
        labels={"k": "0" if k_sign == 1 else "pi", "inv": inv},
    )

    if n <= TRACE_CHECK_MAX_N:
        expected = projector_trace(parent, k, inv)
        if expected != sector.dimension:
            raise ConfigurationError(
                f"sector dimension {sector.dimension} disagrees with projector trace {expected}"
            )
    logger.debug(f"🔢 sector k={sector.labels['k']} I={inv}: dim {sector.dimension}")
    return sector


def pxp_sector_basis(N: int, k: float, inv: int) -> SectorBasis:
    """Joint symmetry sector of the PXP constrained space on an even ring"""
    if N % 2:
        raise ConfigurationError(f"PXP sectors need even N, got {N}")
    ring = build_lattice("chain", [N], periodic=True)
    return translation_inversion_sector(ComputationalBasis.constrained(ring), k, inv)


def sector_labels() -> List[tuple]:
    return [(0.0, 1), (0.0, -1), (np.pi, 1), (np.pi, -1)]
