"""
Computational bases and sparse operator assembly.

Configurations are encoded as one int64 key per basis state,
key = sum_j z_j * prod_{k>j} q_k (site 0 most significant, the kron order).
"""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from config import Config
from errors import ConfigurationError, NumericalGuardError
from lattice import Lattice
from operator_sum import OperatorSum, ProductState, Term

logger = logging.getLogger(__name__)

MAX_KEY = 2**62


def place_values(dims: Sequence[int]) -> np.ndarray:
    weights = np.ones(len(dims), dtype=np.int64)
    for j in range(len(dims) - 2, -1, -1):
        weights[j] = weights[j + 1] * dims[j + 1]
    return weights


def keys_to_digits(keys: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    keys = np.array(keys, dtype=np.int64, copy=True)
    digits = np.empty((keys.size, len(dims)), dtype=np.int64)
    for j in range(len(dims) - 1, -1, -1):
        digits[:, j] = keys % dims[j]
        keys //= dims[j]
    return digits


def digits_to_keys(digits: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    return np.asarray(digits, dtype=np.int64) @ place_values(dims)


class ComputationalBasis:
    """Sorted set of configuration keys spanning a (possibly constrained) space"""

    is_sector = False

    def __init__(self, dims: Sequence[int], keys: np.ndarray, predicate: str = "full"):
        self.dims = tuple(int(q) for q in dims)
        if float(np.prod([float(q) for q in self.dims])) >= MAX_KEY:
            raise NumericalGuardError(f"Hilbert space {self.dims} too large for 64-bit configuration keys")
        self.keys = np.asarray(keys, dtype=np.int64)
        self.predicate = predicate
        self.weights = place_values(self.dims)
        self._digits = None

    @classmethod
    def full(cls, dims: Sequence[int]) -> "ComputationalBasis":
        total = int(np.prod(dims))
        return cls(dims, np.arange(total, dtype=np.int64), "full")

    @classmethod
    def constrained(cls, lattice: Lattice, predicate: str = "no_adjacent_ones") -> "ComputationalBasis":
        """Qubit configurations without two neighbouring 1s"""
        if predicate != "no_adjacent_ones":
            raise ConfigurationError(f"unknown constraint '{predicate}'")
        n = lattice.n_sites
        dims = (2,) * n
        if lattice.kind == "chain":
            keys = _fibonacci_keys(n, lattice.periodic[0])
        else:
            full = np.arange(2**n, dtype=np.int64)
            digits = keys_to_digits(full, dims)
            ok = np.ones(full.size, dtype=bool)
            for i, j in lattice.edges:
                ok &= ~((digits[:, i] == 1) & (digits[:, j] == 1))
            keys = full[ok]
        logger.debug(f"🧱 constrained basis N={n}: {keys.size} states")
        return cls(dims, np.sort(keys), predicate)

    @property
    def dimension(self) -> int:
        return int(self.keys.size)

    @property
    def n_sites(self) -> int:
        return len(self.dims)

    def digits(self) -> np.ndarray:
        if self._digits is None:
            self._digits = keys_to_digits(self.keys, self.dims)
        return self._digits

    def index_of(self, keys: np.ndarray) -> np.ndarray:
        """Positions of keys in the basis, -1 where absent"""
        keys = np.asarray(keys, dtype=np.int64)
        pos = np.searchsorted(self.keys, keys)
        pos = np.clip(pos, 0, max(self.dimension - 1, 0))
        found = self.keys[pos] == keys
        return np.where(found, pos, -1)

    def state_vector(self, state: ProductState, leak_tol: float = 1e-10) -> np.ndarray:
        """Amplitudes of a product state; refuses states leaking out of the basis"""
        if state.dims != self.dims:
            raise ConfigurationError("product state does not match the basis dimensions")
        vec = state.amplitudes(self.digits())
        weight = np.vdot(vec, vec).real
        if abs(weight - 1.0) > leak_tol:
            raise ConfigurationError(
                f"state '{state.label}' has weight {weight:.3e} inside the {self.predicate} basis"
            )
        return vec


def _fibonacci_keys(n: int, periodic: bool) -> np.ndarray:
    # grow strings site by site, tracking whether the last site holds a 1
    end0 = np.array([0], dtype=np.int64)
    end1 = np.array([1], dtype=np.int64)
    for _ in range(n - 1):
        end0, end1 = np.concatenate([end0, end1]) * 2, end0 * 2 + 1
    keys = np.concatenate([end0, end1])
    if periodic and n > 1:
        first = (keys >> (n - 1)) & 1
        last = keys & 1
        keys = keys[~((first == 1) & (last == 1))]
    return keys


def term_action(term: Term, keys: np.ndarray, digits: np.ndarray, dims: Sequence[int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(output keys, input column, value) triples of one term on the given configurations"""
    support = list(term.support)
    qs = [dims[s] for s in support]
    size = int(np.prod(qs))
    weights = place_values(dims)
    local_w = place_values(qs)

    local = digits[:, support] @ local_w
    local_digits = keys_to_digits(np.arange(size), qs)
    offset = local_digits @ weights[support]

    order = np.argsort(local, kind="stable")
    bounds = np.concatenate([[0], np.cumsum(np.bincount(local, minlength=size))])

    out_keys, out_cols, out_vals = [], [], []
    block = term.block
    for a in range(size):
        cols = order[bounds[a] : bounds[a + 1]]
        if cols.size == 0:
            continue
        base = keys[cols] - offset[a]
        for b in np.flatnonzero(np.abs(block[:, a]) > 0):
            out_keys.append(base + offset[b])
            out_cols.append(cols)
            out_vals.append(np.full(cols.size, block[b, a]))
    if not out_keys:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0, dtype=complex)
    return np.concatenate(out_keys), np.concatenate(out_cols), np.concatenate(out_vals)


def operator_action(op: OperatorSum, keys: np.ndarray, digits: Optional[np.ndarray] = None):
    """Action of every term on a set of configurations, as concatenated triples"""
    digits = keys_to_digits(keys, op.qudit_dims) if digits is None else digits
    parts = [term_action(t, keys, digits, op.qudit_dims) for t in op.terms]
    if not parts:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0, dtype=complex)
    return tuple(np.concatenate(p) for p in zip(*parts))


def assemble_operator(op: OperatorSum, basis=None) -> sparse.csr_matrix:
    """Sparse matrix of op in a computational basis or a symmetry sector"""
    if basis is None:
        basis = ComputationalBasis.full(op.qudit_dims)
    if getattr(basis, "is_sector", False):
        return basis.assemble(op)
    if tuple(op.qudit_dims) != basis.dims:
        raise ConfigurationError("operator and basis live on different Hilbert spaces")

    out_keys, cols, vals = operator_action(op, basis.keys, basis.digits())
    rows = basis.index_of(out_keys)
    keep = rows >= 0
    if not np.all(np.abs(vals[~keep]) < 1e-14):
        logger.debug(f"operator leaves the {basis.predicate} basis; outside components dropped")
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    if vals.size and np.max(np.abs(vals.imag)) == 0.0:
        vals = vals.real
    dim = basis.dimension
    matrix = sparse.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
    matrix.sum_duplicates()
    matrix.eliminate_zeros()
    return matrix


def assemble_dense(op: OperatorSum, basis=None, limit: Optional[int] = None) -> np.ndarray:
    limit = limit or Config.DENSE_LIMIT
    matrix = assemble_operator(op, basis)
    if matrix.shape[0] > limit:
        raise NumericalGuardError(
            f"dense matrix of dimension {matrix.shape[0]} exceeds DENSE_LIMIT={limit}; use iterative mode"
        )
    return matrix.toarray()
