"""
Local-gap checks for product states.

Each window is handled in the state's own frame: every site is rotated so the
candidate state becomes |0...0>, exterior legs are contracted against |0>, and
the gap is the lowest eigenvalue of the block orthogonal to |0...0>_W minus
its diagonal entry.

Constrained models (H.constraint set, e.g. PXP) stay in the original frame:
the window keeps only configurations allowed by the constraint and by the
exterior state, and the gap is taken on the complement of the state there.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as la

from basis import ComputationalBasis, assemble_operator, keys_to_digits, place_values
from config import Config
from eigen_solver import EigenPairs, lowest_eigenpairs
from errors import ConfigurationError, NumericalGuardError
from lattice import Lattice, SiteSet, enumerate_connected_subsets, maximal_windows
from operator_sum import OperatorSum, ProductState, contract_legs, local_norm

logger = logging.getLogger(__name__)

GAP_TOL = 1e-10
EIGEN_TOL = 1e-10
SMALL_WINDOW = 64
CONSTRAINT_TOL = 1e-12

BOUNDARY_MODES = ("product", "open", "periodic")

__all__ = [
    "GapRecord",
    "GapScan",
    "window_operator",
    "effective_window_hamiltonian",
    "gap_scan",
    "volume_gap",
    "robustness_shrink",
    "energy_tail_check",
    "local_norm",
    "gs_overlap_threshold",
    "metastability_range",
]


@dataclass
class GapRecord:
    """Minimum over the windows of one scan step"""

    size: int
    delta: float
    window: SiteSet
    vector: np.ndarray
    gs_overlap: float
    n_windows: int = 0

    @property
    def metastable(self) -> bool:
        return self.delta > GAP_TOL


@dataclass
class GapScan:
    """Per-R (or per-volume) local gaps of one state"""

    records: List[GapRecord]
    boundary_mode: str
    kind: str = "diameter"
    state_label: str = ""
    solver: str = "dense"

    def deltas(self) -> np.ndarray:
        return np.array([r.delta for r in self.records])

    def record(self, size: int) -> GapRecord:
        for r in self.records:
            if r.size == size:
                return r
        raise KeyError(size)

    def to_rows(self) -> List[Dict]:
        label = "R" if self.kind == "diameter" else "V"
        return [
            {
                label: r.size,
                "delta": r.delta,
                "window_sites": " ".join(str(s) for s in r.window.sites),
                "gs_overlap": r.gs_overlap,
                "boundary_mode": self.boundary_mode,
            }
            for r in self.records
        ]


# =============================================================================
# Window operators
# =============================================================================


def _ring_start(n: int, sites: Sequence[int]) -> int:
    """First site of a window that is an arc of an n-site ring"""
    m = len(sites)
    for a in sorted(sites):
        if all((t - a) % n < m for t in sites):
            return a
    raise ConfigurationError(f"window {list(sites)} is not a contiguous arc of the chain")


def _leftmost(n: int, support: Sequence[int]) -> Tuple[int, int]:
    """(leftmost site, span) of a term read as an arc of the ring"""
    span, a = min((max((t - a) % n for t in support), a) for a in support)
    return a, span


def window_operator(
    H: OperatorSum, vectors: Sequence[np.ndarray], window, boundary_mode: str = "product"
) -> Tuple[OperatorSum, Tuple[int, ...]]:
    """
    Local operator on the window sites, relabelled 0..|W|-1.

    product: every term touching W, exterior legs contracted with `vectors`;
    open: only terms inside W; periodic: terms whose leftmost site lies in W,
    wrapped around W as a ring (chains only).
    Returns the operator and the site order of its tensor factors.
    """
    if boundary_mode not in BOUNDARY_MODES:
        raise ConfigurationError(f"unknown boundary mode '{boundary_mode}' ({', '.join(BOUNDARY_MODES)})")
    members = window.sites if isinstance(window, SiteSet) else tuple(sorted(set(int(s) for s in window)))
    if not members:
        raise ConfigurationError("window must contain at least one site")

    if boundary_mode == "periodic":
        lattice = H.lattice
        if lattice is None or lattice.kind != "chain":
            raise ConfigurationError("periodic boundary mode is defined for chain windows only")
        n = lattice.n_sites
        start = _ring_start(n, members)
        sites = tuple((start + k) % n for k in range(len(members)))
    else:
        sites = tuple(members)

    pos = {s: k for k, s in enumerate(sites)}
    dims = tuple(H.qudit_dims[s] for s in sites)
    op = OperatorSum(dims, [], None, H.hermitian)

    if boundary_mode == "product":
        for t in H.terms_touching(sites):
            inside = [s for s in t.support if s in pos]
            if len(inside) == len(t.support):
                block = t.block
            else:
                block = contract_legs(t.block, t.support, inside, H.qudit_dims, vectors)
            op.add([pos[s] for s in inside], block)
    elif boundary_mode == "open":
        for t in H.terms:
            if all(s in pos for s in t.support):
                op.add([pos[s] for s in t.support], t.block)
    else:
        n = H.lattice.n_sites
        m = len(sites)
        for t in H.terms:
            a, _ = _leftmost(n, t.support)
            if a not in pos:
                continue
            p = pos[a]
            wrapped = [(p + (s - a) % n) % m for s in t.support]
            if len(set(wrapped)) != len(wrapped):
                raise ConfigurationError(
                    f"term on {list(t.support)} does not fit a periodic window of {m} sites; use a larger R"
                )
            op.add(wrapped, t.block)
    return op, sites


def effective_window_hamiltonian(
    H: OperatorSum, psi0: ProductState, window, boundary_mode: str = "product"
) -> np.ndarray:
    """Dense H_eff(W); periodic windows are ordered along the ring from their first site"""
    op, _ = window_operator(H, psi0.vectors, window, boundary_mode)
    dim = int(np.prod(op.qudit_dims))
    if dim > Config.DENSE_LIMIT:
        raise NumericalGuardError(
            f"window dimension {dim} exceeds DENSE_LIMIT={Config.DENSE_LIMIT}; choose a smaller window"
        )
    return assemble_operator(op).toarray()


def _apply_local(vec: np.ndarray, unitaries: Sequence[np.ndarray], dims: Sequence[int]) -> np.ndarray:
    tensor = np.asarray(vec, dtype=complex).reshape(dims)
    for axis, u in enumerate(unitaries):
        tensor = np.moveaxis(np.tensordot(u, tensor, axes=([1], [axis])), 0, axis)
    return tensor.reshape(-1)


def _lowest(matrix, solver: str) -> EigenPairs:
    if solver == "dense" or matrix.shape[0] <= SMALL_WINDOW:
        dense = matrix.toarray() if hasattr(matrix, "toarray") else matrix
        return lowest_eigenpairs(dense, 1, mode="dense")
    return lowest_eigenpairs(matrix.tocsr(), 1, mode="iterative", tol=EIGEN_TOL)


def _window_gap(H_rot: OperatorSum, frame: Sequence[np.ndarray], window: SiteSet, boundary_mode: str, solver: str):
    """(delta, excitation in the original frame, ground overlap) of one window"""
    zeros = []
    for q in H_rot.qudit_dims:
        e0 = np.zeros(q, dtype=complex)
        e0[0] = 1.0
        zeros.append(e0)
    op, sites = window_operator(H_rot, zeros, window, boundary_mode)
    dims = op.qudit_dims
    dim = int(np.prod(dims))
    if solver == "dense" and dim > Config.DENSE_LIMIT:
        raise NumericalGuardError(
            f"window of {len(sites)} sites has dimension {dim} > DENSE_LIMIT={Config.DENSE_LIMIT}; "
            f"use solver='iterative' or a smaller R"
        )
    if dim > Config.SUBSPACE_LIMIT:
        raise NumericalGuardError(f"window dimension {dim} exceeds SUBSPACE_LIMIT={Config.SUBSPACE_LIMIT}")

    matrix = assemble_operator(op).tocsr()
    e0 = float(np.real(matrix[0, 0]))
    excited = _lowest(matrix[1:, 1:], solver)
    ground = _lowest(matrix, solver)

    delta = float(excited.values[0]) - e0
    vec_rot = np.concatenate([[0.0], excited.vectors[:, 0]])
    vector = _apply_local(vec_rot, [frame[s] for s in sites], dims)
    overlap = float(np.sum(np.abs(ground.vectors[0, :]) ** 2))
    return delta, vector, overlap


def _constrained_window_keys(H: OperatorSum, vectors: Sequence[np.ndarray], sites: Sequence[int], boundary_mode: str) -> np.ndarray:
    """
    Window configurations allowed by a no-adjacent-ones constraint.

    Inside the window no two neighbours (along the ring for periodic windows)
    both hold a 1. With a product boundary a window site may only hold a 1 when
    every exterior neighbour has zero weight on |1>.
    """
    if H.constraint != "no_adjacent_ones":
        raise ConfigurationError(f"unknown constraint '{H.constraint}'")
    if any(q != 2 for q in H.qudit_dims):
        raise ConfigurationError("the no-adjacent-ones constraint is defined for qubits only")
    m = len(sites)
    if 2**m > Config.SUBSPACE_LIMIT:
        raise NumericalGuardError(f"constrained window of {m} sites exceeds SUBSPACE_LIMIT={Config.SUBSPACE_LIMIT}")
    keys = np.arange(2**m, dtype=np.int64)
    digits = keys_to_digits(keys, (2,) * m)
    pos = {s: k for k, s in enumerate(sites)}

    if boundary_mode == "periodic":
        pairs = [(k, (k + 1) % m) for k in range(m if m > 2 else m - 1)]
    else:
        pairs = [(pos[i], pos[j]) for i, j in H.lattice.edges if i in pos and j in pos]
    ok = np.ones(keys.size, dtype=bool)
    for a, b in pairs:
        ok &= ~((digits[:, a] == 1) & (digits[:, b] == 1))

    if boundary_mode == "product":
        for s in sites:
            if any(nb not in pos and abs(vectors[nb][1]) > CONSTRAINT_TOL for nb in H.lattice.adjacency[s]):
                ok &= digits[:, pos[s]] == 0
    return keys[ok]


def _constrained_window_gap(H: OperatorSum, psi0: ProductState, window: SiteSet, boundary_mode: str):
    """Window gap inside the constrained space, in the state's original frame"""
    op, sites = window_operator(H, psi0.vectors, window, boundary_mode)
    keys = _constrained_window_keys(H, psi0.vectors, sites, boundary_mode)
    if keys.size > Config.DENSE_LIMIT:
        raise NumericalGuardError(
            f"constrained window dimension {keys.size} exceeds DENSE_LIMIT={Config.DENSE_LIMIT}; choose a smaller R"
        )
    basis = ComputationalBasis(op.qudit_dims, keys, H.constraint)
    M = assemble_operator(op, basis).toarray()
    phi = psi0.dense(sites)[keys]
    weight = float(np.vdot(phi, phi).real)
    if abs(weight - 1.0) > 1e-10:
        raise ConfigurationError(
            f"state '{psi0.label}' has weight {weight:.3e} in the constrained space of window {list(sites)}"
        )

    full_dim = int(np.prod(op.qudit_dims))
    complement = la.null_space(phi[None, :].conj())
    if complement.shape[1] == 0:
        # the constraint freezes the window: nothing to excite
        return np.inf, np.zeros(full_dim, dtype=complex), 1.0

    E0 = float(np.vdot(phi, M @ phi).real)
    values, vecs = la.eigh(complement.conj().T @ M @ complement)
    ground = la.eigh(M)[1][:, 0]

    vector = np.zeros(full_dim, dtype=complex)
    vector[keys] = complement @ vecs[:, 0]
    overlap = float(abs(np.vdot(phi, ground)) ** 2)
    return float(values[0]) - E0, vector, overlap


def _window_evaluator(H: OperatorSum, psi0: ProductState, boundary_mode: str, solver: str) -> Callable:
    if H.constraint:
        return lambda w: _constrained_window_gap(H, psi0, w, boundary_mode)
    frame = psi0.frame()
    H_rot = H.rotated(frame)
    return lambda w: _window_gap(H_rot, frame, w, boundary_mode, solver)


def _scan_windows(evaluate: Callable, windows: List[SiteSet], threads: int):
    if threads > 1 and len(windows) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(evaluate, windows))
    else:
        results = [evaluate(w) for w in windows]
    # ties go to the first window in enumeration order
    best = min(range(len(windows)), key=lambda i: (results[i][0], i))
    return best, results


def _representative_windows(lattice: Lattice, windows: List[SiteSet], period: int) -> List[SiteSet]:
    if lattice.kind != "chain":
        raise ConfigurationError("translation_invariant scans are implemented for chains only")
    if len(windows) <= period:
        return windows
    if lattice.periodic[0]:
        return windows[:period]
    centre = (len(windows) - period) // 2
    return windows[centre : centre + period]


def _check_inputs(H: OperatorSum, psi0: ProductState, solver: str):
    if H.lattice is None:
        raise ConfigurationError("gap scans need an operator with a lattice")
    if psi0.dims != tuple(H.qudit_dims):
        raise ConfigurationError("state and Hamiltonian live on different Hilbert spaces")
    if solver not in ("dense", "iterative"):
        raise ConfigurationError(f"unknown solver '{solver}' (dense or iterative)")


# =============================================================================
# Scans
# =============================================================================


def gap_scan(
    H: OperatorSum,
    psi0: ProductState,
    R_max: int,
    boundary_mode: str = "product",
    translation_invariant: bool = False,
    solver: str = "dense",
    threads: Optional[int] = None,
    stop_below: Optional[float] = None,
    min_overlap: Optional[float] = None,
) -> GapScan:
    """
    Δ(R) for R = 0..R_max over maximal windows of diameter R.

    With stop_below set, the scan ends after the first R whose Δ does not
    exceed it; with min_overlap set, after the first R whose window ground
    state overlaps ψ0 by less than that.
    """
    _check_inputs(H, psi0, solver)
    if R_max < 0:
        raise ConfigurationError("R_max must be non-negative")
    threads = threads or Config.THREADS
    evaluate = _window_evaluator(H, psi0, boundary_mode, solver)
    period = psi0.period() if translation_invariant else None

    records = []
    for R in range(R_max + 1):
        windows = maximal_windows(H.lattice, R)
        if translation_invariant:
            windows = _representative_windows(H.lattice, windows, period)
        best, results = _scan_windows(evaluate, windows, threads)
        delta, vector, overlap = results[best]
        records.append(GapRecord(R, delta, windows[best], vector, overlap, len(windows)))
        logger.info(
            f"🔍 gap scan R={R}: {len(windows)} window(s), Δ={delta:.6f} "
            f"{'✅' if delta > GAP_TOL else '❌'}"
        )
        if stop_below is not None and delta - stop_below <= GAP_TOL:
            break
        if min_overlap is not None and overlap < min_overlap:
            break
    return GapScan(records, boundary_mode, "diameter", psi0.label, solver)


def _anchor_site(lattice: Lattice, anchor_policy) -> Union[int, str]:
    if anchor_policy == "all":
        return "all"
    if anchor_policy == "center":
        return lattice.site_index([e // 2 for e in lattice.extents])
    try:
        return int(anchor_policy)
    except (TypeError, ValueError):
        raise ConfigurationError(f"anchor policy must be 'all', 'center' or a site index, got {anchor_policy!r}")


def volume_gap(
    H: OperatorSum,
    psi0: ProductState,
    V_max: int,
    anchor_policy="all",
    solver: str = "dense",
    threads: Optional[int] = None,
) -> GapScan:
    """Δ(V) = min over connected S with |S| <= V (product boundary)"""
    _check_inputs(H, psi0, solver)
    if V_max < 1:
        raise ConfigurationError("V_max must be at least 1")
    threads = threads or Config.THREADS
    evaluate = _window_evaluator(H, psi0, "product", solver)
    anchor = _anchor_site(H.lattice, anchor_policy)

    by_volume: Dict[int, List[SiteSet]] = {}
    for S in enumerate_connected_subsets(H.lattice, anchor, max_volume=V_max):
        by_volume.setdefault(len(S), []).append(S)

    records: List[GapRecord] = []
    for V in range(1, V_max + 1):
        sets = by_volume.get(V, [])
        if sets:
            best, results = _scan_windows(evaluate, sets, threads)
            delta, vector, overlap = results[best]
            candidate = GapRecord(V, delta, sets[best], vector, overlap, len(sets))
        else:
            candidate = None
        previous = records[-1] if records else None
        if candidate is None or (previous is not None and previous.delta <= candidate.delta):
            if previous is None:
                raise ConfigurationError("lattice has no connected subsets to scan")
            candidate = GapRecord(V, previous.delta, previous.window, previous.vector, previous.gs_overlap, len(sets))
        records.append(candidate)
        logger.info(f"🧩 volume scan V={V}: {len(sets)} subset(s), Δ={candidate.delta:.6f}")
    return GapScan(records, "product", "volume", psi0.label, solver)


# =============================================================================
# Diagnostics
# =============================================================================


def robustness_shrink(delta: float, R: float, eps: float, d: int, c_d: float) -> Tuple[float, float]:
    """(Δ/2, min(R, (Δ/(2 c_d ε))^(1/d))) for a perturbation of local strength ε"""
    if delta <= 0 or c_d <= 0 or d < 1:
        raise ConfigurationError("robustness_shrink needs Δ > 0, c_d > 0 and d >= 1")
    if eps <= 0:
        return delta / 2.0, R
    return delta / 2.0, min(R, (delta / (2.0 * c_d * eps)) ** (1.0 / d))


def gs_overlap_threshold(delta: float, delta_tilde: float) -> float:
    """Overlap with the window ground state that suffices for a local gap Δ"""
    if delta_tilde <= 0:
        raise ConfigurationError("window gap Δ̃ must be positive")
    return 0.5 * (1.0 + delta / delta_tilde)


def metastability_range(scan: GapScan) -> int:
    """Largest size with every Δ up to it positive; -1 if Δ(first) <= 0"""
    best = -1
    for r in scan.records:
        if not r.metastable:
            break
        best = r.size
    return best


def _embedded_state(psi0: ProductState, sites: Sequence[int], phi: np.ndarray) -> np.ndarray:
    """phi on `sites` tensored with psi0 elsewhere, in the full computational basis"""
    basis = ComputationalBasis.full(psi0.dims)
    digits = basis.digits()
    local = digits[:, list(sites)] @ place_values([psi0.dims[s] for s in sites])
    amp = np.asarray(phi, dtype=complex)[local]
    members = set(sites)
    for j, v in enumerate(psi0.vectors):
        if j not in members:
            amp = amp * v[digits[:, j]]
    return amp


def energy_tail_check(
    H0: OperatorSum,
    eig: Optional[EigenPairs],
    psi0: ProductState,
    sites: Sequence[int],
    phi: np.ndarray,
    delta: float,
) -> Tuple[float, float]:
    """
    (‖Π_{>Δ/2} φ⊗ψ0‖, Δ/(4 h0 |S|)) with energies measured from E0 = <ψ0|H0|ψ0>.

    `eig` must hold the complete eigendecomposition of H0 in the full basis.
    """
    total = int(np.prod(psi0.dims))
    if eig is None or len(eig) != total or eig.vectors.shape[0] != total:
        raise ConfigurationError("energy_tail_check needs the complete eigendecomposition of H0")
    sites = sorted(int(s) for s in sites)
    phi = np.asarray(phi, dtype=complex)
    local_dim = int(np.prod([psi0.dims[s] for s in sites]))
    if phi.size != local_dim:
        raise ConfigurationError(f"φ has {phi.size} amplitudes, region needs {local_dim}")
    phi = phi / np.linalg.norm(phi)
    if abs(np.vdot(psi0.dense(sites), phi)) > 1e-10:
        raise ConfigurationError("φ_S must be orthogonal to ψ0 on S")

    weights0 = np.abs(eig.vectors.conj().T @ ComputationalBasis.full(psi0.dims).state_vector(psi0)) ** 2
    E0 = float(weights0 @ eig.values)
    spread = float(np.sqrt(max(weights0 @ (eig.values - E0) ** 2, 0.0)))
    if spread > 1e-10:
        raise ConfigurationError(
            f"ψ0 is not an eigenstate of H0 (energy spread {spread:.2e}); run the prethermal decomposition first"
        )

    x = _embedded_state(psi0, sites, phi)
    amplitudes = eig.vectors.conj().T @ x
    tail = (eig.values - E0) > delta / 2.0
    lhs = float(np.sqrt(np.sum(np.abs(amplitudes[tail]) ** 2)))
    h0 = local_norm(H0, "h", 0.0)
    rhs = delta / (4.0 * h0 * len(sites)) if h0 > 0 else np.inf
    return lhs, float(rhs)
