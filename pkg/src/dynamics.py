"""
Quench dynamics, eigenstate-overlap spectroscopy and entanglement.

Quenches run in whatever computational basis the caller passes (the
constrained PXP basis, or the full space by default); entanglement always
needs the state expanded to the full tensor-product space.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import scipy.linalg as la
from scipy import stats

from basis import ComputationalBasis, assemble_operator
from eigen_cache import EigenCache
from eigen_solver import lowest_eigenpairs
from errors import ConfigurationError, NumericalGuardError
from krylov import evolve_checkpoints
from operator_sum import OperatorSum, ProductState

logger = logging.getLogger(__name__)

NORM_DRIFT_TOL = 1e-8
ENERGY_DRIFT_TOL = 1e-6
IMAG_TOL = 1e-10
DEFAULT_TIMES = np.linspace(0.0, 100.0, 201)


@dataclass
class QuenchSeries:
    times: np.ndarray
    observables: Dict[str, np.ndarray]
    initial: str
    model: Dict = field(default_factory=dict)
    entropies: Optional[np.ndarray] = None
    norm_drift: float = 0.0
    energy_drift: float = 0.0
    max_imag: float = 0.0

    def peak_to_peak(self, name: str) -> float:
        return float(np.ptp(self.observables[name]))

    def to_rows(self) -> List[Dict]:
        rows = []
        for i, t in enumerate(self.times):
            row = {"t": float(t)}
            row.update({name: float(series[i]) for name, series in self.observables.items()})
            if self.entropies is not None:
                row["max_entropy"] = float(self.entropies[i].max(initial=0.0))
            rows.append(row)
        return rows


def _as_vector(state, basis: ComputationalBasis) -> np.ndarray:
    if isinstance(state, ProductState):
        return basis.state_vector(state)
    vec = np.asarray(state, dtype=complex)
    if vec.size != basis.dimension:
        raise ConfigurationError(f"state of size {vec.size} does not match basis dimension {basis.dimension}")
    return vec


def expand_to_full(vec: np.ndarray, basis: ComputationalBasis) -> np.ndarray:
    """Constrained-basis amplitudes placed into the full tensor-product vector"""
    full = np.zeros(int(np.prod(basis.dims)), dtype=complex)
    full[basis.keys] = vec
    return full


def _label(state) -> str:
    return state.label if isinstance(state, ProductState) else "vector"


def quench(
    H: OperatorSum,
    psi_init: Union[ProductState, np.ndarray],
    times: Optional[Sequence[float]] = None,
    observables: Optional[Dict[str, OperatorSum]] = None,
    basis: Optional[ComputationalBasis] = None,
    entanglement: bool = False,
    tol: float = 1e-10,
) -> QuenchSeries:
    """Expectation values along exp(-iHt)|ψ_init> at ascending checkpoint times"""
    times = DEFAULT_TIMES if times is None else np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0):
        raise ConfigurationError("quench times must be ascending")
    basis = basis or ComputationalBasis.full(H.qudit_dims)
    psi0 = _as_vector(psi_init, basis)
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-10:
        raise ConfigurationError("initial state must be normalized")

    matrix = assemble_operator(H, basis)
    obs_matrices = {name: assemble_operator(O, basis) for name, O in (observables or {}).items()}
    series = {name: np.empty(times.size) for name in obs_matrices}
    entropies = np.empty((times.size, len(basis.dims) - 1)) if entanglement else None
    E0 = np.vdot(psi0, matrix @ psi0).real

    max_imag = norm_drift = energy_drift = 0.0
    for i, (t, psi) in enumerate(evolve_checkpoints(matrix, psi0, times, tol)):
        for name, O in obs_matrices.items():
            value = np.vdot(psi, O @ psi)
            max_imag = max(max_imag, abs(value.imag))
            series[name][i] = value.real
        norm_drift = max(norm_drift, abs(np.linalg.norm(psi) - 1.0))
        energy_drift = max(energy_drift, abs(np.vdot(psi, matrix @ psi).real - E0))
        if entanglement:
            entropies[i] = entanglement_entropy(expand_to_full(psi, basis), basis.dims)

    if norm_drift > NORM_DRIFT_TOL or energy_drift > ENERGY_DRIFT_TOL * max(1.0, abs(E0)):
        raise NumericalGuardError(
            f"quench lost conservation (norm drift {norm_drift:.2e}, energy drift {energy_drift:.2e}); lower tol"
        )
    if max_imag > IMAG_TOL:
        logger.warning(f"⚠️  observable expectation has imaginary part {max_imag:.2e}; is it Hermitian?")
    logger.info(f"⏱️  quench from {_label(psi_init)}: {times.size} checkpoints up to t={times[-1]:g}")
    return QuenchSeries(times, series, _label(psi_init), {}, entropies, norm_drift, energy_drift, max_imag)


# =============================================================================
# Overlap spectroscopy
# =============================================================================


@dataclass
class OverlapSpectrum:
    rows: List[Dict]
    ground_energy: float
    sector_weights: Dict[str, float]
    captured_weights: Dict[str, float]

    def energies(self) -> np.ndarray:
        return np.array([r["energy"] for r in self.rows])

    def overlaps(self) -> np.ndarray:
        return np.array([r["overlap"] for r in self.rows])


def _sector_name(sector) -> str:
    labels = getattr(sector, "labels", None)
    if labels:
        return f"k={labels.get('k')},I={labels.get('inv')}"
    return getattr(sector, "predicate", "full")


def _sector_vector(psi, sector) -> np.ndarray:
    parent = sector.parent if getattr(sector, "is_sector", False) else sector
    if isinstance(psi, ProductState):
        if tuple(psi.dims) != tuple(parent.dims):
            raise ConfigurationError("state and sector basis live on different Hilbert spaces")
        vec = parent.state_vector(psi)
    else:
        vec = np.asarray(psi, dtype=complex)
        if vec.size != parent.dimension:
            raise ConfigurationError(f"state of size {vec.size} does not match sector parent {parent.dimension}")
    return sector.project(vec) if getattr(sector, "is_sector", False) else vec


def overlap_spectrum(
    H: OperatorSum,
    psi,
    sector_list: Sequence,
    k_lowest: int = 60,
    mode: str = "auto",
    cache: Optional[EigenCache] = None,
) -> OverlapSpectrum:
    """
    (sector, E_n - E_gs, |<E_n|ψ>|²) for the k_lowest states of every sector.

    sector_list holds SectorBasis or ComputationalBasis objects; E_gs is the
    lowest energy over all of them.
    """
    found = []
    weights, captured = {}, {}
    for sector in sector_list:
        name = _sector_name(sector)
        vec = _sector_vector(psi, sector)
        weight = float(np.vdot(vec, vec).real)
        matrix = assemble_operator(H, sector)
        k = min(k_lowest, matrix.shape[0])
        eig = lowest_eigenpairs(matrix, k, mode=mode, sector={"name": name}, cache=cache)
        overlaps = np.abs(eig.vectors.conj().T @ vec) ** 2
        weights[name] = weight
        captured[name] = float(overlaps.sum())
        if len(eig) == matrix.shape[0] and abs(captured[name] - weight) > 1e-10:
            raise NumericalGuardError(f"sector {name}: overlaps sum to {captured[name]:.12f}, weight {weight:.12f}")
        found.append((name, eig.values, overlaps))
        logger.info(f"🔬 sector {name}: dim={matrix.shape[0]}, weight={weight:.6f}, captured={captured[name]:.6f}")

    if not found:
        raise ConfigurationError("overlap_spectrum needs at least one sector")
    E_gs = float(min(values[0] for _, values, _ in found))
    rows = []
    for name, values, overlaps in found:
        for E, w in zip(values, overlaps):
            rows.append({"sector": name, "energy": float(E - E_gs), "absolute_energy": float(E), "overlap": float(w)})
    rows.sort(key=lambda r: (r["energy"], r["sector"]))
    return OverlapSpectrum(rows, E_gs, weights, captured)


def ground_overlap(H: OperatorSum, psi, sector_list: Sequence, mode: str = "auto") -> float:
    """|<gs|ψ>|² with gs the lowest state over the given sectors"""
    spectrum = overlap_spectrum(H, psi, sector_list, k_lowest=1, mode=mode)
    lowest = min(spectrum.rows, key=lambda r: r["absolute_energy"])
    return lowest["overlap"]


def overlap_decay_fit(sizes: Sequence[int], overlaps: Sequence[float]) -> Dict:
    """Linear fit of ln|<gs|ψ>|² against system size"""
    fit = stats.linregress(np.asarray(sizes, dtype=float), np.log(np.asarray(overlaps, dtype=float)))
    return {"slope": float(fit.slope), "intercept": float(fit.intercept), "r_squared": float(fit.rvalue**2)}


def dominant_peak_spacing(energies: Sequence[float], overlaps: Sequence[float], n_peaks: int = 5, min_separation: float = 0.5) -> float:
    """Median spacing of the n_peaks largest overlaps, peaks closer than min_separation merged"""
    energies = np.asarray(energies, dtype=float)
    overlaps = np.asarray(overlaps, dtype=float)
    chosen: List[float] = []
    for idx in np.argsort(-overlaps):
        if all(abs(energies[idx] - e) >= min_separation for e in chosen):
            chosen.append(energies[idx])
        if len(chosen) == n_peaks:
            break
    if len(chosen) < 2:
        raise ConfigurationError("need at least two separated overlap peaks")
    return float(np.median(np.diff(np.sort(chosen))))


def poisson_cartoon(delta_tilde: float, E_target: float, E_gs: float, n_max: int) -> np.ndarray:
    """Poisson weights of n quasiparticles with mean (E_target - E_gs)/Δ̃, renormalized on 0..n_max"""
    if delta_tilde <= 0:
        raise ConfigurationError("quasiparticle gap must be positive")
    if E_target < E_gs:
        raise ConfigurationError("target energy lies below the ground energy")
    alpha = (E_target - E_gs) / delta_tilde
    weights = stats.poisson.pmf(np.arange(n_max + 1), alpha) if alpha > 0 else np.eye(1, n_max + 1)[0]
    return weights / weights.sum()


def cartoon_spectrum(delta_tilde: float, E_target: float, E_gs: float, n_max: int) -> List[Dict]:
    """(n, E_gs + nΔ̃, weight) rows for overlaying on measured overlap peaks"""
    weights = poisson_cartoon(delta_tilde, E_target, E_gs, n_max)
    return [{"n": n, "energy": float(E_gs + n * delta_tilde), "weight": float(w)} for n, w in enumerate(weights)]


# =============================================================================
# Entanglement
# =============================================================================


def entanglement_entropy(state, dims: Sequence[int], cut: Optional[int] = None):
    """von Neumann entropy (base e) across one cut, or the series over every cut"""
    dims = tuple(int(q) for q in dims)
    if isinstance(state, ProductState):
        return 0.0 if cut is not None else np.zeros(len(dims) - 1)
    vec = np.asarray(state, dtype=complex)
    if vec.size != int(np.prod(dims)):
        raise ConfigurationError(
            f"state of size {vec.size} is not a full-basis vector on {dims}; expand sector or constrained states first"
        )
    cuts = range(1, len(dims)) if cut is None else [int(cut)]
    out = []
    for c in cuts:
        if not 1 <= c < len(dims):
            raise ConfigurationError(f"cut {c} outside 1..{len(dims) - 1}")
        s = la.svdvals(vec.reshape(int(np.prod(dims[:c])), -1))
        p = s**2 / np.sum(s**2)
        p = p[p > 1e-300]
        out.append(float(-np.sum(p * np.log(p))))
    return out[0] if cut is not None else np.array(out)
