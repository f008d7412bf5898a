"""
Iterated Schrieffer-Wolff rotations at exact-diagonalization scale.

Everything runs in the eigenbasis of H0, where ℙ multiplies matrix elements
by ŵ(E_m - E_n) and the generator solving [H0, A] + (1 - ℙ)V = 0 is
A_mn = -g(E_m - E_n) V_mn.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import scipy.linalg as la

from basis import ComputationalBasis, assemble_dense, assemble_operator
from eigen_solver import EigenPairs
from errors import ConfigurationError
from filters import FilterTables, filter_tables, superproject
from krylov import evolve_checkpoints
from operator_sum import PAULI, OperatorSum, ProductState

logger = logging.getLogger(__name__)

EIGENSTATE_TOL = 1e-10
MAX_PROBE_SITES = 4


def swt_generator(V: np.ndarray, eig: EigenPairs, tables: FilterTables, in_eigenbasis: bool = False) -> np.ndarray:
    """A_mn = -g(E_m - E_n) V_mn (anti-Hermitian for Hermitian V)"""
    V_eig = V if in_eigenbasis else eig.to_eigenbasis(V)
    E = np.asarray(eig.values, dtype=float)
    A = -tables.g(E[:, None] - E[None, :]) * V_eig
    return A if in_eigenbasis else eig.from_eigenbasis(A)


def generator_identity_residual(A: np.ndarray, V: np.ndarray, eig: EigenPairs, tables: FilterTables) -> float:
    """‖[H0, A] + (1 - ℙ)V‖ with every operator in the computational basis"""
    H0 = eig.from_eigenbasis(np.diag(eig.values))
    lhs = H0 @ A - A @ H0 + V - superproject(V, eig, tables)
    return float(np.linalg.norm(lhs, 2))


def _state_vector(psi0, dims) -> np.ndarray:
    if isinstance(psi0, ProductState):
        return ComputationalBasis.full(psi0.dims).state_vector(psi0)
    vec = np.asarray(psi0, dtype=complex)
    return vec / np.linalg.norm(vec)


def stabilizer_residual(D: np.ndarray, psi0) -> float:
    """‖(D - <D>)|ψ0>‖"""
    v = _state_vector(psi0, None)
    Dv = D @ v
    return float(np.linalg.norm(Dv - np.vdot(v, Dv) * v))


# =============================================================================
# Pauli volume cutoff
# =============================================================================


def _pauli_forward() -> np.ndarray:
    # row p: coefficient of Pauli p from the flattened 2x2 block M[r, c]
    return np.array([PAULI[p].T.reshape(4) for p in "IXYZ"]) / 2.0


def _pauli_inverse() -> np.ndarray:
    return np.array([PAULI[p].reshape(4) for p in "IXYZ"]).T


def _apply_each_axis(tensor: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    for axis in range(tensor.ndim):
        tensor = np.moveaxis(np.tensordot(matrix, tensor, axes=([1], [axis])), 0, axis)
    return tensor


def pauli_coefficients(O: np.ndarray, n: int) -> np.ndarray:
    """c[p_0, ..., p_{n-1}] with O = Σ c_P P_0 ⊗ ... ⊗ P_{n-1}, p in (I, X, Y, Z)"""
    if O.shape != (2**n, 2**n):
        raise ConfigurationError(f"operator of shape {O.shape} is not on {n} qubits")
    T = np.asarray(O, dtype=complex).reshape([2] * (2 * n))
    order = [ax for k in range(n) for ax in (k, n + k)]
    T = T.transpose(order).reshape([4] * n)
    return _apply_each_axis(T, _pauli_forward())


def from_pauli_coefficients(c: np.ndarray) -> np.ndarray:
    n = c.ndim
    T = _apply_each_axis(np.asarray(c, dtype=complex), _pauli_inverse())
    T = T.reshape([2] * (2 * n))
    rows = list(range(0, 2 * n, 2))
    cols = list(range(1, 2 * n, 2))
    return T.transpose(rows + cols).reshape(2**n, 2**n)


def pauli_weights(n: int) -> np.ndarray:
    """Number of non-identity factors of every Pauli string"""
    grids = np.meshgrid(*[np.arange(4)] * n, indexing="ij")
    return sum((g != 0).astype(int) for g in grids)


def volume_truncate(O: np.ndarray, n: int, cutoff: int):
    """(part of O on Pauli strings of weight <= cutoff, norm of the discarded part)"""
    c = pauli_coefficients(O, n)
    weights = pauli_weights(n)
    kept = np.where(weights <= cutoff, c, 0.0)
    dropped = from_pauli_coefficients(c - kept)
    return from_pauli_coefficients(kept), float(np.linalg.norm(dropped, 2))


# =============================================================================
# Iterated rotation
# =============================================================================


@dataclass
class SwtState:
    """Order-k snapshot: H0 + D_k + V_k (+ discarded terms) ~ H0 + V"""

    order: int
    eig: EigenPairs
    D: np.ndarray
    V: np.ndarray
    generators: List[np.ndarray]
    psi0: np.ndarray
    tables: FilterTables
    trace: List[Dict] = field(default_factory=list)
    garbage: Optional[np.ndarray] = None
    divergence_onset: Optional[int] = None

    @property
    def E0(self) -> float:
        v = self.psi0
        H0 = self.eig.from_eigenbasis(np.diag(self.eig.values))
        return float(np.vdot(v, H0 @ v).real)

    @property
    def E_star(self) -> float:
        return self.E0 + float(np.vdot(self.psi0, self.D @ self.psi0).real)

    def h_star(self) -> np.ndarray:
        """H0 + D_k - (QDP + PDQ), which has |ψ0> as an eigenvector"""
        P = np.outer(self.psi0, self.psi0.conj())
        Q = np.eye(P.shape[0]) - P
        H0 = self.eig.from_eigenbasis(np.diag(self.eig.values))
        return H0 + self.D - (Q @ self.D @ P + P @ self.D @ Q)

    def accumulated_unitary(self, order: Optional[int] = None) -> np.ndarray:
        """U = e^{A_1} ... e^{A_order}"""
        order = len(self.generators) if order is None else order
        U = np.eye(self.psi0.size, dtype=complex)
        for A in self.generators[:order]:
            U = U @ la.expm(A)
        return U

    def to_rows(self) -> List[Dict]:
        return [dict(row) for row in self.trace]


def _trace_row(state: SwtState, reference: np.ndarray, discarded: float, identity_residual: float) -> Dict:
    H0 = state.eig.from_eigenbasis(np.diag(state.eig.values))
    total = H0 + state.D + state.V + (state.garbage if state.garbage is not None else 0.0)
    drift = float(np.max(np.abs(la.eigvalsh(total) - reference)))
    return {
        "k": state.order,
        "norm_Vk": float(np.linalg.norm(state.V, 2)),
        "norm_Dk": float(np.linalg.norm(state.D, 2)),
        "stabilizer_residual": stabilizer_residual(state.D, state.psi0),
        "spectrum_drift": drift,
        "discarded_weight": discarded,
        "identity_residual": identity_residual,
    }


def swt_run(
    H0: OperatorSum,
    V: OperatorSum,
    psi0: ProductState,
    k_max: int,
    size_cutoff: Optional[int] = None,
    tables: Optional[FilterTables] = None,
    delta: Optional[float] = None,
) -> SwtState:
    """
    Rotate H0 + V order by order until k_max or until ‖V_{k+1}‖ > ‖V_k‖.

    Order k holds D_k, V_k and the generators A_1..A_{k-1}; order 1 is D = 0,
    V_1 = V. size_cutoff keeps Pauli strings of weight <= cutoff in each new
    V_k (qubit models only) and carries the dropped part along as garbage.
    """
    if k_max < 1:
        raise ConfigurationError("k_max must be at least 1")
    if tables is None:
        if delta is None:
            raise ConfigurationError("swt_run needs filter tables or the gap Δ")
        tables = filter_tables(delta)
    if size_cutoff is not None and any(q != 2 for q in H0.qudit_dims):
        raise ConfigurationError("size_cutoff uses the Pauli basis and needs a qubit model")

    H0_m = assemble_dense(H0)
    V_m = assemble_dense(V)
    psi = ComputationalBasis.full(psi0.dims).state_vector(psi0)
    H0_psi = H0_m @ psi
    E0 = np.vdot(psi, H0_psi).real
    if np.linalg.norm(H0_psi - E0 * psi) > EIGENSTATE_TOL:
        raise ConfigurationError(
            "ψ0 is not an eigenstate of H0; split the Hamiltonian with prethermal_decompose first"
        )

    values, vectors = la.eigh(H0_m)
    eig = EigenPairs(values, vectors, {"role": "H0"})
    reference = la.eigvalsh(H0_m + V_m)
    n = len(H0.qudit_dims)

    state = SwtState(1, eig, np.zeros_like(V_m, dtype=complex), V_m.astype(complex), [], psi, tables)
    state.trace.append(_trace_row(state, reference, 0.0, 0.0))
    H0_eig = np.diag(values)

    while state.order < k_max:
        V_eig = eig.to_eigenbasis(state.V)
        D_eig = eig.to_eigenbasis(state.D)
        A_eig = swt_generator(V_eig, eig, tables, in_eigenbasis=True)
        PV_eig = superproject(V_eig, eig, tables, in_eigenbasis=True)
        omega = values[:, None] - values[None, :]
        identity = float(np.linalg.norm(omega * A_eig + V_eig - PV_eig, 2))

        rotation = la.expm(A_eig)
        back = la.expm(-A_eig)
        D_next = D_eig + PV_eig
        V_next = back @ (H0_eig + D_eig + V_eig) @ rotation - H0_eig - D_next
        V_next = 0.5 * (V_next + V_next.conj().T)

        garbage = None if state.garbage is None else back @ eig.to_eigenbasis(state.garbage) @ rotation
        discarded = 0.0
        if size_cutoff is not None:
            kept, discarded = volume_truncate(eig.from_eigenbasis(V_next), n, size_cutoff)
            dropped = V_next - eig.to_eigenbasis(kept)
            V_next = eig.to_eigenbasis(kept)
            garbage = dropped if garbage is None else garbage + dropped

        norm_now = float(np.linalg.norm(state.V, 2))
        norm_next = float(np.linalg.norm(V_next, 2))
        if norm_next > norm_now:
            state.divergence_onset = state.order + 1
            logger.info(f"⚠️  ‖V_{state.order + 1}‖={norm_next:.3e} exceeds ‖V_{state.order}‖={norm_now:.3e}; stopping")
            break

        state = SwtState(
            state.order + 1,
            eig,
            eig.from_eigenbasis(D_next),
            eig.from_eigenbasis(V_next),
            state.generators + [eig.from_eigenbasis(A_eig)],
            psi,
            tables,
            state.trace,
            None if garbage is None else eig.from_eigenbasis(garbage),
        )
        state.trace.append(_trace_row(state, reference, discarded, identity))
        logger.info(f"🔄 SWT order {state.order}: ‖V‖={norm_next:.3e}, residual={state.trace[-1]['stabilizer_residual']:.3e}")
    return state


# =============================================================================
# Dressed states and lifetime probes
# =============================================================================


def dressed_state(swt: SwtState, psi0=None, order: Optional[int] = None) -> np.ndarray:
    """e^{A_1} ... e^{A_order} |ψ0> (order 0 is the bare state)"""
    order = len(swt.generators) if order is None else int(order)
    if not 0 <= order <= len(swt.generators):
        raise ConfigurationError(f"dressing order {order} outside 0..{len(swt.generators)}")
    vec = swt.psi0 if psi0 is None else _state_vector(psi0, None)
    for A in reversed(swt.generators[:order]):
        vec = la.expm(A) @ vec
    return vec / np.linalg.norm(vec)


def reduced_density_matrix(vec: np.ndarray, dims: Sequence[int], sites: Sequence[int]) -> np.ndarray:
    sites = list(sites)
    tensor = np.asarray(vec, dtype=complex).reshape(dims)
    rest = [k for k in range(len(dims)) if k not in sites]
    M = tensor.transpose(sites + rest).reshape(int(np.prod([dims[s] for s in sites])), -1)
    return M @ M.conj().T


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """‖ρ - σ‖_1"""
    return float(np.sum(np.abs(la.eigvalsh(rho - sigma))))


def lifetime_probe(
    H: OperatorSum,
    swt: SwtState,
    psi0,
    region: Sequence[int],
    times: Sequence[float],
    order: Optional[int] = None,
    tol: float = 1e-10,
) -> np.ndarray:
    """‖ρ_S(t) - ρ_S(0)‖_1 for the dressed state evolved under the full H"""
    region = sorted(set(int(s) for s in region))
    if len(region) > MAX_PROBE_SITES:
        raise ConfigurationError(f"lifetime probes take at most {MAX_PROBE_SITES} sites, got {len(region)}")
    dims = tuple(H.qudit_dims)
    start = dressed_state(swt, psi0, order)
    matrix = assemble_operator(H)
    rho0 = reduced_density_matrix(start, dims, region)
    drift = []
    for _, psi in evolve_checkpoints(matrix, start, times, tol):
        drift.append(trace_distance(reduced_density_matrix(psi, dims, region), rho0))
    return np.array(drift)
