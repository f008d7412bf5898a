"""
Commuting-projector Hamiltonians H0' = sum_f λ_f (1 - P_f).

Operators are split into syndrome terms (which checks 2P_f - 1 they
anticommute with), rotated by the exact local SWT step, and tested for
volume metastability on the subspace of bounded-volume excitations.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from basis import ComputationalBasis, assemble_operator, operator_action, place_values
from config import Config
from eigen_solver import lowest_eigenpairs
from errors import ConfigurationError, NumericalGuardError
from lattice import Lattice, boundary, dimension_constant, enumerate_connected_subsets
from operator_sum import PAULI, OperatorSum, ProductState, contract_legs, embed_block, kron_all

logger = logging.getLogger(__name__)

ALGEBRA_TOL = 1e-12
RESIDUAL_TOL = 1e-10
PATTERN_TOL = 1e-12
PAULI_LETTERS = "IXYZ"


@dataclass(frozen=True)
class Factor:
    support: Tuple[int, ...]
    weight: float
    block: np.ndarray


@dataclass
class SyndromeTerm:
    """Block on a strong support S that anticommutes exactly with the checks in `syndrome`"""

    support: Tuple[int, ...]
    syndrome: FrozenSet[int]
    block: np.ndarray

    def norm(self) -> float:
        return float(np.linalg.norm(self.block, 2)) if self.block.size else 0.0


@dataclass
class CommutingModel:
    lattice: Lattice
    qudit_dims: Tuple[int, ...]
    factors: List[Factor]
    ground_state: ProductState
    range_l0: int = 1
    pauli: bool = False
    _by_site: Dict[int, List[int]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for fid, f in enumerate(self.factors):
            if f.weight < 0:
                raise ConfigurationError(f"factor {fid} has negative weight {f.weight}")
            if np.max(np.abs(f.block @ f.block - f.block)) > ALGEBRA_TOL:
                raise ConfigurationError(f"factor {fid} on {f.support} is not a projector")
            for s in f.support:
                self._by_site.setdefault(s, []).append(fid)
        self._check_commuting()

    def _check_commuting(self):
        for a, b in itertools.combinations(range(len(self.factors)), 2):
            fa, fb = self.factors[a], self.factors[b]
            if not set(fa.support) & set(fb.support):
                continue
            union = sorted(set(fa.support) | set(fb.support))
            pa = embed_block(fa.block, fa.support, union, self.qudit_dims)
            pb = embed_block(fb.block, fb.support, union, self.qudit_dims)
            if np.max(np.abs(pa @ pb - pb @ pa)) > ALGEBRA_TOL:
                raise ConfigurationError(f"model factors {fa.support} and {fb.support} do not commute")

    @property
    def delta_prime(self) -> float:
        return float(min(f.weight for f in self.factors))

    def factors_touching(self, sites) -> List[int]:
        return sorted({fid for s in sites for fid in self._by_site.get(int(s), [])})

    def factors_inside(self, sites) -> List[int]:
        members = set(int(s) for s in sites)
        return [fid for fid in self.factors_touching(members) if set(self.factors[fid].support) <= members]

    def hamiltonian(self) -> OperatorSum:
        H = OperatorSum.empty(self.lattice, self.qudit_dims)
        for f in self.factors:
            H.add(f.support, f.weight * (np.eye(f.block.shape[0]) - f.block))
        return H

    def pattern(self, state: Optional[ProductState] = None) -> np.ndarray:
        """<P_f> for every factor; a joint eigenstate gives only 0s and 1s"""
        state = state or self.ground_state
        values = np.empty(len(self.factors))
        for fid, f in enumerate(self.factors):
            v = state.dense(f.support)
            values[fid] = np.vdot(v, f.block @ v).real
        if np.any(np.minimum(np.abs(values), np.abs(values - 1.0)) > PATTERN_TOL):
            raise ConfigurationError("state is not a joint eigenstate of the model projectors")
        return np.round(values)

    def is_frustration_free(self, state: Optional[ProductState] = None) -> bool:
        return bool(np.all(self.pattern(state) == 1.0))

    def reference_energy(self, state: Optional[ProductState] = None) -> float:
        weights = np.array([f.weight for f in self.factors])
        return float(weights @ (1.0 - self.pattern(state)))

    def local_projector(self, sites: Sequence[int], state: Optional[ProductState] = None) -> np.ndarray:
        """Product over factors inside `sites` of the projector onto the state's pattern"""
        sites = sorted(int(s) for s in sites)
        pattern = self.pattern(state)
        dim = int(np.prod([self.qudit_dims[s] for s in sites]))
        P = np.eye(dim, dtype=complex)
        for fid in self.factors_inside(sites):
            f = self.factors[fid]
            block = f.block if pattern[fid] == 1.0 else np.eye(f.block.shape[0]) - f.block
            P = P @ embed_block(block, f.support, sites, self.qudit_dims)
        return P

    def window_hamiltonian(self, sites: Sequence[int], state: Optional[ProductState] = None) -> np.ndarray:
        """sum of λ_f (1 - P_f) over factors inside `sites`, shifted so the state's pattern has energy 0"""
        sites = sorted(int(s) for s in sites)
        pattern = self.pattern(state)
        dim = int(np.prod([self.qudit_dims[s] for s in sites]))
        H = np.zeros((dim, dim), dtype=complex)
        shift = 0.0
        for fid in self.factors_inside(sites):
            f = self.factors[fid]
            H += f.weight * embed_block(np.eye(f.block.shape[0]) - f.block, f.support, sites, self.qudit_dims)
            shift += f.weight * (1.0 - pattern[fid])
        return H - shift * np.eye(dim)


def commuting_ising_model(lattice: Lattice, delta_prime: float = 1.0, ground_state: Optional[ProductState] = None) -> CommutingModel:
    """Bond checks P_f = (1 + Z_i Z_j)/2 with weight Δ' on every lattice edge"""
    if delta_prime <= 0:
        raise ConfigurationError("delta_prime must be positive")
    check = (np.eye(4) + np.kron(PAULI["Z"], PAULI["Z"])) / 2.0
    factors = [Factor((i, j), float(delta_prime), check) for i, j in lattice.edges]
    dims = (2,) * lattice.n_sites
    state = ground_state or ProductState.from_digits([0] * lattice.n_sites, 2, "zero")
    return CommutingModel(lattice, dims, factors, state, 1, True)


# =============================================================================
# Syndromes
# =============================================================================


def _check_operator(model: CommutingModel, fid: int, sites: Sequence[int]) -> np.ndarray:
    f = model.factors[fid]
    return embed_block(2.0 * f.block - np.eye(f.block.shape[0]), f.support, sites, model.qudit_dims)


def term_commutation_residual(term: SyndromeTerm, model: CommutingModel) -> float:
    """Largest violation of 'anticommute for f in s, commute otherwise' over factors inside S"""
    worst = 0.0
    for fid in model.factors_inside(term.support):
        R = _check_operator(model, fid, term.support)
        sign = -1.0 if fid in term.syndrome else 1.0
        worst = max(worst, float(np.max(np.abs(R @ term.block - sign * term.block @ R), initial=0.0)))
    missing = [fid for fid in term.syndrome if not set(model.factors[fid].support) <= set(term.support)]
    if missing:
        return np.inf
    return worst


def _pauli_string(letters: Sequence[int]) -> np.ndarray:
    return kron_all(PAULI[PAULI_LETTERS[p]] for p in letters)


def _pauli_syndromes(block: np.ndarray, support: Tuple[int, ...], model: CommutingModel) -> List[SyndromeTerm]:
    from swt import pauli_coefficients

    coeffs = pauli_coefficients(block, len(support))
    groups: Dict[Tuple, List] = {}
    for letters in zip(*np.nonzero(np.abs(coeffs) > 1e-14)):
        flipped = {support[k] for k, p in enumerate(letters) if p in (1, 2)}
        syndrome = frozenset(
            fid for fid in model.factors_touching(flipped) if len(flipped & set(model.factors[fid].support)) % 2 == 1
        )
        groups.setdefault(syndrome, []).append((letters, coeffs[letters]))

    terms = []
    for syndrome, strings in groups.items():
        sites = set(support)
        for fid in syndrome:
            sites.update(model.factors[fid].support)
        full = tuple(sorted(sites))
        local = sum(c * _pauli_string(letters) for letters, c in strings)
        terms.append(SyndromeTerm(full, syndrome, embed_block(local, support, full, model.qudit_dims)))
    return terms


def _general_syndromes(block: np.ndarray, support: Tuple[int, ...], model: CommutingModel) -> List[SyndromeTerm]:
    touching = model.factors_touching(support)
    sites = set(support)
    for fid in touching:
        sites.update(model.factors[fid].support)
    full = tuple(sorted(sites))
    pieces = [(frozenset(), embed_block(block, support, full, model.qudit_dims))]
    for fid in touching:
        R = _check_operator(model, fid, full)
        split = []
        for syndrome, X in pieces:
            conj = R @ X @ R
            even, odd = (X + conj) / 2.0, (X - conj) / 2.0
            if np.max(np.abs(even), initial=0.0) > 1e-14:
                split.append((syndrome, even))
            if np.max(np.abs(odd), initial=0.0) > 1e-14:
                split.append((syndrome | {fid}, odd))
        pieces = split
    return [SyndromeTerm(full, s, X) for s, X in pieces]


def syndrome_decompose(O: OperatorSum, model: CommutingModel) -> List[SyndromeTerm]:
    """Split O into syndrome terms; terms with equal (support, syndrome) are merged"""
    if tuple(O.qudit_dims) != tuple(model.qudit_dims):
        raise ConfigurationError("operator and commuting model live on different Hilbert spaces")
    merged: Dict[Tuple, SyndromeTerm] = {}
    fast = model.pauli and all(q == 2 for q in model.qudit_dims)
    for t in O.merged().terms:
        parts = _pauli_syndromes(t.block, t.support, model) if fast else _general_syndromes(t.block, t.support, model)
        for part in parts:
            key = (part.support, part.syndrome)
            if key in merged:
                merged[key] = SyndromeTerm(part.support, part.syndrome, merged[key].block + part.block)
            else:
                merged[key] = part
    terms = [t for t in merged.values() if np.max(np.abs(t.block), initial=0.0) > 1e-14]
    logger.debug(f"🧩 syndrome decomposition: {len(O.terms)} terms → {len(terms)} syndrome terms")
    return terms


def syndrome_sum(terms: Sequence[SyndromeTerm], model: CommutingModel) -> OperatorSum:
    out = OperatorSum.empty(model.lattice, model.qudit_dims)
    for t in terms:
        out.add(t.support, t.block)
    return out


def commutator_term(a: SyndromeTerm, b: SyndromeTerm, model: CommutingModel) -> SyndromeTerm:
    """[a, b] on S ∪ S' with syndrome s △ s'"""
    union = tuple(sorted(set(a.support) | set(b.support)))
    A = embed_block(a.block, a.support, union, model.qudit_dims)
    B = embed_block(b.block, b.support, union, model.qudit_dims)
    return SyndromeTerm(union, a.syndrome ^ b.syndrome, A @ B - B @ A)


# =============================================================================
# Local SWT step
# =============================================================================


def shrink_support(term: SyndromeTerm, model: CommutingModel) -> Tuple[int, ...]:
    """Drop sites with no violated adjacent check while the rest stays connected"""
    violated = {s for fid in term.syndrome for s in model.factors[fid].support}
    F = set(term.support)
    changed = True
    while changed:
        changed = False
        for site in sorted(F):
            if site in violated:
                continue
            rest = F - {site}
            if not rest or model.lattice.is_connected(rest):
                F = rest
                changed = True
    return tuple(sorted(F))


def _reduced_block(term: SyndromeTerm, F: Sequence[int], state: ProductState, dims) -> np.ndarray:
    return contract_legs(term.block, term.support, F, dims, state.vectors)


def check_local_nondegeneracy(model: CommutingModel, term: SyndromeTerm, state: Optional[ProductState] = None) -> float:
    """‖O|ψ0> - Õ|ψ0>‖ on the term's support, Õ the term reduced to its shrunk support"""
    state = state or model.ground_state
    F = shrink_support(term, model)
    psi = state.dense(term.support)
    full = term.block @ psi
    if not F:
        reduced = np.vdot(psi, full) * psi
    else:
        tilde = embed_block(_reduced_block(term, F, state, model.qudit_dims), F, term.support, model.qudit_dims)
        reduced = tilde @ psi
    return float(np.linalg.norm(full - reduced))


def _window(model: CommutingModel, F: Sequence[int]) -> Tuple[int, ...]:
    sites = set(F)
    for fid in model.factors_touching(F):
        sites.update(model.factors[fid].support)
    return tuple(sorted(sites))


def _restricted_inverse(H: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Inverse of H on the range of 1 - P (zero on the range of P)"""
    dim = H.shape[0]
    Q = np.eye(dim) - P
    if np.allclose(H, np.diag(np.diag(H))) and np.allclose(P, np.diag(np.diag(P))):
        energies = np.diag(H).real
        excited = np.diag(Q).real > 0.5
        if np.any(np.abs(energies[excited]) < RESIDUAL_TOL):
            raise NumericalGuardError("restricted Hamiltonian is singular outside the local ground space")
        inv = np.zeros(dim)
        inv[excited] = 1.0 / energies[excited]
        return np.diag(inv).astype(complex)
    values, vectors = np.linalg.eigh(Q @ H @ Q)
    weights = np.einsum("ij,ij->j", vectors.conj(), Q @ vectors).real
    excited = weights > 0.5
    if np.any(np.abs(values[excited]) < RESIDUAL_TOL):
        raise NumericalGuardError("restricted Hamiltonian is singular outside the local ground space")
    inv = np.zeros(values.size)
    inv[excited] = 1.0 / values[excited]
    return (vectors * inv) @ vectors.conj().T


def commuting_swt_step(model: CommutingModel, V_term: SyndromeTerm, state: Optional[ProductState] = None):
    """
    One exact SWT step for a syndrome term.

    A = P Ṽ P⊥ H⁺ - h.c. and ℙ'V = [H0', A] + V = V - P Ṽ P⊥ - P⊥ Ṽ P, with
    Ṽ the term reduced to its shrunk support F and P, H built on F plus
    every check touching F.
    """
    state = state or model.ground_state
    F = shrink_support(V_term, model)
    if not F:
        zero = np.zeros_like(V_term.block)
        return SyndromeTerm(V_term.support, V_term.syndrome, zero), V_term

    window = _window(model, F)
    dim = int(np.prod([model.qudit_dims[s] for s in window]))
    if dim > Config.DENSE_LIMIT:
        raise NumericalGuardError(f"SWT window of dimension {dim} exceeds DENSE_LIMIT={Config.DENSE_LIMIT}")

    tilde = embed_block(_reduced_block(V_term, F, state, model.qudit_dims), F, window, model.qudit_dims)
    P = model.local_projector(window, state)
    Q = np.eye(dim) - P
    H_inv = _restricted_inverse(model.window_hamiltonian(window, state), P)

    X = P @ tilde @ Q @ H_inv
    A_block = X - X.conj().T
    offdiag = P @ tilde @ Q + Q @ tilde @ P

    union = tuple(sorted(set(window) | set(V_term.support)))
    PV_block = embed_block(V_term.block, V_term.support, union, model.qudit_dims) - embed_block(
        offdiag, window, union, model.qudit_dims
    )
    return SyndromeTerm(window, V_term.syndrome, A_block), SyndromeTerm(union, V_term.syndrome, PV_block)


def restricted_inverse_gain(model: CommutingModel, flipped: Sequence[int], state: Optional[ProductState] = None):
    """
    (gain, bound) for the state with `flipped` sites excited (qubit X flips).

    gain = ‖H⁺ X_F |ψ0>‖ on the window around F; bound = c_d ℓ0^d / (Δ' |∂F|).
    """
    state = state or model.ground_state
    if any(model.qudit_dims[s] != 2 for s in flipped):
        raise ConfigurationError("restricted_inverse_gain flips qubits")
    F = tuple(sorted(int(s) for s in flipped))
    window = _window(model, F)
    flips = [PAULI["X"] if s in F else np.eye(2) for s in window]
    phi = kron_all(flips) @ state.dense(window)
    P = model.local_projector(window, state)
    H_inv = _restricted_inverse(model.window_hamiltonian(window, state), P)
    gain = float(np.linalg.norm(H_inv @ phi))
    lattice = model.lattice
    c_d = dimension_constant(lattice, max(1, lattice.diameter(F)))
    edge = len(boundary(lattice, F))
    bound = c_d * model.range_l0**lattice.dim_d / (model.delta_prime * max(1, edge))
    return gain, float(bound)


# =============================================================================
# Volume metastability
# =============================================================================


def block_diagonal_residual(model: CommutingModel, D: OperatorSum, state: Optional[ProductState] = None) -> float:
    """max over terms of ‖[D_S, P_S]‖ with P_S the pattern projector on S"""
    state = state or model.ground_state
    worst = 0.0
    for t in D.merged().terms:
        P = model.local_projector(t.support, state)
        worst = max(worst, float(np.max(np.abs(t.block @ P - P @ t.block), initial=0.0)))
    return worst


def excitation_subspace(model: CommutingModel, state: ProductState, volume_cap: int) -> ComputationalBasis:
    """
    Rotated-frame configurations whose flipped sites fit inside a connected set
    of volume <= volume_cap, the reference configuration excluded.
    """
    dims = tuple(model.qudit_dims)
    weights = place_values(dims)
    digit_tables: Dict[Tuple[int, ...], np.ndarray] = {}
    chunks = []
    total = 0
    for S in enumerate_connected_subsets(model.lattice, "all", max_volume=volume_cap):
        local_dims = tuple(dims[s] for s in S.sites)
        if local_dims not in digit_tables:
            digit_tables[local_dims] = np.array(list(itertools.product(*[range(q) for q in local_dims])), dtype=np.int64)
        keys = digit_tables[local_dims] @ weights[list(S.sites)]
        chunks.append(keys)
        total += keys.size
        if total > 20 * Config.SUBSPACE_LIMIT:
            raise NumericalGuardError(f"excitation enumeration too large; lower volume_cap or raise SUBSPACE_LIMIT")
    keys = np.unique(np.concatenate(chunks)) if chunks else np.zeros(0, dtype=np.int64)
    keys = keys[keys != 0]
    if keys.size > Config.SUBSPACE_LIMIT:
        raise NumericalGuardError(
            f"excitation subspace of dimension {keys.size} exceeds SUBSPACE_LIMIT={Config.SUBSPACE_LIMIT}; lower volume_cap"
        )
    return ComputationalBasis(dims, keys, f"volume<={volume_cap}")


def _rotated(model: CommutingModel, D: Optional[OperatorSum], state: ProductState) -> OperatorSum:
    H = model.hamiltonian()
    if D is not None and D.terms:
        H = H + D
    return H.rotated(state.frame())


def _reference_energy(op: OperatorSum) -> float:
    """<0...0| op |0...0> in the rotated frame"""
    zero = np.zeros(1, dtype=np.int64)
    out_keys, _, vals = operator_action(op, zero)
    return float(np.sum(vals[out_keys == 0]).real)


def volume_block_check(model: CommutingModel, D: Optional[OperatorSum], state: Optional[ProductState], volume_cap: int):
    """
    (min_eig, witness): lowest eigenvalue of Q(H0' + D - E_ψ0)Q on the
    bounded-volume excitation subspace Q, with the dominant flipped sites of
    the lowest eigenvector as witness.
    """
    state = state or model.ground_state
    if D is not None and D.terms:
        residual = block_diagonal_residual(model, D, state)
        if residual > RESIDUAL_TOL:
            raise ConfigurationError(f"D is not locally block diagonal (commutator residual {residual:.2e})")
    basis = excitation_subspace(model, state, volume_cap)
    if basis.dimension == 0:
        raise ConfigurationError("excitation subspace is empty; raise volume_cap")
    H_rot = _rotated(model, D, state)
    E_ref = _reference_energy(H_rot)
    matrix = assemble_operator(H_rot, basis) - E_ref * sparse.identity(basis.dimension, format="csr")

    eig = lowest_eigenpairs(matrix, 1, mode="auto", seed=Config.DEFAULT_SEED)
    vec = eig.vectors[:, 0]
    top = int(np.argmax(np.abs(vec)))
    digits = basis.digits()[top]
    witness = {
        "flipped_sites": [int(s) for s in np.flatnonzero(digits)],
        "weight": float(np.abs(vec[top]) ** 2),
        "subspace_dimension": basis.dimension,
    }
    min_eig = float(eig.values[0])
    logger.info(f"📦 volume check cap={volume_cap}: dim={basis.dimension}, min_eig={min_eig:.6f}")
    return min_eig, witness


def relative_bound_check(model: CommutingModel, D: Optional[OperatorSum], state: Optional[ProductState], volume_cap: int) -> float:
    """max over the configuration basis of Q of ‖Dψ‖ / ‖(H0' - E_ψ0)ψ‖"""
    state = state or model.ground_state
    if D is None or not D.terms:
        return 0.0
    basis = excitation_subspace(model, state, volume_cap)
    frame = state.frame()
    H_rot = model.hamiltonian().rotated(frame)
    E_ref = _reference_energy(H_rot)

    def column_norms(op: OperatorSum, shift: float = 0.0) -> np.ndarray:
        out_keys, cols, vals = operator_action(op, basis.keys, basis.digits())
        if shift:
            out_keys = np.concatenate([out_keys, basis.keys])
            cols = np.concatenate([cols, np.arange(basis.dimension)])
            vals = np.concatenate([vals, np.full(basis.dimension, -shift, dtype=complex)])
        rows, inverse = np.unique(out_keys, return_inverse=True)
        m = sparse.coo_matrix((vals, (inverse, cols)), shape=(rows.size, basis.dimension)).tocsc()
        m.sum_duplicates()
        return np.sqrt(np.asarray(abs(m).power(2).sum(axis=0)).ravel())

    numer = column_norms(D.rotated(frame))
    denom = column_norms(H_rot, E_ref)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(denom > RESIDUAL_TOL, numer / np.where(denom > 0, denom, 1.0), np.where(numer > RESIDUAL_TOL, np.inf, 0.0))
    return float(ratios.max(initial=0.0))


def wall_hopping_perturbation(model: CommutingModel, strength: float) -> OperatorSum:
    """strength * sum_i X_i (1 - Z_{i-1} Z_{i+1}) / 2 on a chain: moves domain walls, kills uniform patterns"""
    lattice = model.lattice
    if lattice.kind != "chain":
        raise ConfigurationError("domain-wall hopping is defined on chains")
    n = lattice.n_sites
    block = kron_all([np.eye(2), PAULI["X"], np.eye(2)]) - kron_all([PAULI["Z"], PAULI["X"], PAULI["Z"]])
    D = OperatorSum.empty(lattice, model.qudit_dims)
    for i in range(n):
        left, right = i - 1, i + 1
        if lattice.periodic[0]:
            left, right = left % n, right % n
        elif left < 0 or right >= n:
            continue
        D.add([left, i, right], strength * block / 2.0)
    return D
