"""
Prethermal decomposition H = H0 + V around a product state.

Works in the state's frame (ψ0 -> |0...0>). Each term is split into the part
that stabilizes |0> and the flipping part H_S|0>; flipping parts of small
support are regrouped by flip set F into balls of radius r, one rank-2 term
eps_j (|phi_j><0| + h.c.) per ball centre. Whatever regrouping leaves over
annihilates |0> and joins H0.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from basis import assemble_operator, keys_to_digits, place_values
from config import Config
from errors import ConfigurationError, NumericalGuardError
from lattice import Lattice, ball, build_lattice
from metastability import gap_scan, metastability_range
from models import p00pp_hamiltonian
from operator_sum import OperatorSum, ProductState, embed_block

logger = logging.getLogger(__name__)

FLIP_TOL = 1e-14
# Δ -> 0 limit of gs_overlap_threshold
FULL_OVERLAP_THRESHOLD = 0.5


@dataclass
class Decomposition:
    """H0 + V split with its ball bookkeeping"""

    H0: OperatorSum
    V: OperatorSum
    eps_profile: Dict[int, float]
    r_cutoff: int
    E0: float
    norm_report: Dict = field(default_factory=dict)
    orthogonality_violation: float = 0.0
    ball_sites: Dict[int, Tuple[int, ...]] = field(default_factory=dict)
    wholesale_supports: List[Tuple[int, ...]] = field(default_factory=list)

    def eps_values(self) -> np.ndarray:
        return np.array([self.eps_profile[j] for j in sorted(self.eps_profile)])

    def reconstruction_error(self, H: OperatorSum, seed: Optional[int] = None) -> float:
        """‖(H0 + V - H) x‖ for a random unit vector x"""
        dim = int(np.prod(H.qudit_dims))
        if dim > Config.SUBSPACE_LIMIT:
            raise NumericalGuardError(f"reconstruction check needs dimension <= SUBSPACE_LIMIT, got {dim}")
        rng = np.random.default_rng(Config.DEFAULT_SEED if seed is None else seed)
        x = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        x /= np.linalg.norm(x)
        diff = assemble_operator(self.H0 + self.V) - assemble_operator(H)
        return float(np.linalg.norm(diff @ x))

    def to_dict(self) -> Dict:
        return {
            "E0": self.E0,
            "r": self.r_cutoff,
            "eps_profile": {str(j): e for j, e in sorted(self.eps_profile.items())},
            "norms": self.norm_report,
            "orthogonality_max_violation": self.orthogonality_violation,
            "wholesale_terms": len(self.wholesale_supports),
        }


# =============================================================================
# Ball assignment
# =============================================================================


def _unwrapped_coords(lattice: Lattice, F: Sequence[int]) -> np.ndarray:
    """Coordinates of F relative to its first site, shortest displacement on periodic axes"""
    ref = lattice.coords[F[0]]
    out = []
    for s in F:
        disp = lattice.coords[s] - ref
        for axis, n in enumerate(lattice.extents):
            if lattice.periodic[axis]:
                disp[axis] = (disp[axis] + n // 2) % n - n // 2
        out.append(ref + disp)
    return np.array(out)


def ball_center(lattice: Lattice, F: Sequence[int], r: int) -> int:
    """
    Centre j with F ⊆ B(j, r), chosen from F's shape so translated flip sets
    get translated centres; falls back to the smallest admissible site.
    """
    F = sorted(F)
    coords = _unwrapped_coords(lattice, F)
    low = coords.min(axis=0)
    shape = coords - low
    high = shape.max(axis=0)
    ranges = [range(int(h) - r, r + 1) for h in high]
    dist = lattice.distance_matrix()
    for c in itertools.product(*ranges):
        if np.all(np.abs(shape - np.array(c)).sum(axis=1) <= r):
            site = lattice.site_index(np.array(c) + low)
            if site is not None and all(dist[site, f] <= r for f in F):
                return int(site)
            break
    for j in range(lattice.n_sites):
        if all(dist[j, f] <= r for f in F):
            return j
    raise ConfigurationError(f"flip set {F} fits in no ball of radius {r}")


# =============================================================================
# Decomposition
# =============================================================================


def _flip_groups(support: Sequence[int], dims: Sequence[int], x: np.ndarray) -> Dict[Tuple[int, ...], np.ndarray]:
    """Split a vector on `support` by the set of sites it moves away from |0>"""
    idx = np.flatnonzero(np.abs(x) > FLIP_TOL)
    idx = idx[idx != 0]
    groups: Dict[Tuple[int, ...], List[int]] = {}
    if idx.size:
        digits = keys_to_digits(idx, dims)
        for a, row in zip(idx, digits):
            F = tuple(support[k] for k in np.flatnonzero(row))
            groups.setdefault(F, []).append(int(a))
    out = {}
    for F, members in groups.items():
        part = np.zeros_like(x)
        part[members] = x[members]
        out[F] = part
    return out


def _move_vector(x: np.ndarray, support: Sequence[int], target: Sequence[int], qudit_dims: Sequence[int]) -> np.ndarray:
    """Re-express a vector that is |0> outside its flip set on another site list"""
    dims_s = [qudit_dims[s] for s in support]
    dims_t = [qudit_dims[s] for s in target]
    pos = {s: k for k, s in enumerate(target)}
    weights = place_values(dims_t)
    out = np.zeros(int(np.prod(dims_t)), dtype=complex)
    idx = np.flatnonzero(np.abs(x) > 0)
    if idx.size == 0:
        return out
    digits = keys_to_digits(idx, dims_s)
    for a, row in zip(idx, digits):
        key = 0
        for k, d in enumerate(row):
            if d:
                if support[k] not in pos:
                    raise ConfigurationError(f"flip on site {support[k]} falls outside {list(target)}")
                key += int(d) * int(weights[pos[support[k]]])
        out[key] += x[a]
    return out


def _orthogonality_violation(ball_states: Dict[int, Tuple[Tuple[int, ...], np.ndarray]], qudit_dims) -> float:
    """max |<phi_i ⊗ 0|phi_j ⊗ 0>| over distinct balls, via configurations of flipped sites"""
    index: Dict[Tuple, List[Tuple[int, complex]]] = {}
    for j, (sites, vec) in ball_states.items():
        idx = np.flatnonzero(np.abs(vec) > 0)
        digits = keys_to_digits(idx, [qudit_dims[s] for s in sites])
        for a, row in zip(idx, digits):
            key = tuple((s, int(d)) for s, d in zip(sites, row) if d)
            index.setdefault(key, []).append((j, vec[a]))
    overlaps: Dict[Tuple[int, int], complex] = {}
    for entries in index.values():
        for (i, ai), (j, aj) in itertools.combinations(entries, 2):
            overlaps[(i, j)] = overlaps.get((i, j), 0.0) + np.conj(ai) * aj
    return float(max((abs(v) for v in overlaps.values()), default=0.0))


def prethermal_decompose(
    H: OperatorSum,
    psi0: ProductState,
    r: int,
    kappa1: float = 0.0,
    alpha: float = 1.0,
    mu: float = 0.0,
    probe_R: Optional[int] = None,
) -> Decomposition:
    """Split H into H0 (H0|ψ0> = E0|ψ0>) and ball-grouped V"""
    if not isinstance(psi0, ProductState):
        raise ConfigurationError("prethermal_decompose needs a product state")
    if r < 0:
        raise ConfigurationError("ball radius r must be non-negative")
    if H.lattice is None:
        raise ConfigurationError("prethermal_decompose needs an operator with a lattice")
    lattice = H.lattice
    dims = tuple(H.qudit_dims)
    frame = psi0.frame()
    H_rot = H.merged().rotated(frame)

    H0 = OperatorSum.empty(lattice, dims)
    V = OperatorSum.empty(lattice, dims)
    E0 = 0.0
    balls: Dict[int, Tuple[int, ...]] = {}
    ball_vectors: Dict[int, np.ndarray] = {}
    wholesale = []

    for t in H_rot.terms:
        S = list(t.support)
        dim_s = t.block.shape[0]
        P0 = np.zeros((dim_s, dim_s), dtype=complex)
        P0[0, 0] = 1.0
        Q0 = np.eye(dim_s) - P0
        stab = P0 @ t.block @ P0 + Q0 @ t.block @ Q0
        E0 += float(np.real(t.block[0, 0]))
        H0.add(S, stab)

        x = Q0 @ t.block[:, 0]
        if np.max(np.abs(x), initial=0.0) <= FLIP_TOL:
            continue
        if lattice.diameter(S) > r:
            e0 = np.zeros(dim_s, dtype=complex)
            e0[0] = 1.0
            V.add(S, np.outer(x, e0) + np.outer(e0, x.conj()))
            wholesale.append(tuple(S))
            continue

        for F, x_F in _flip_groups(S, [dims[s] for s in S], x).items():
            j = ball_center(lattice, F, r)
            if j not in balls:
                B = ball(lattice, [j], r).sites
                dim_b = int(np.prod([dims[s] for s in B]))
                if dim_b > Config.DENSE_LIMIT:
                    raise NumericalGuardError(
                        f"ball of radius {r} has dimension {dim_b} > DENSE_LIMIT={Config.DENSE_LIMIT}; lower r"
                    )
                balls[j] = B
                ball_vectors[j] = np.zeros(dim_b, dtype=complex)
            B = balls[j]
            x_B = _move_vector(x_F, S, B, dims)
            ball_vectors[j] += x_B

            # what the ball term does not reproduce still annihilates |0>
            U = sorted(set(S) | set(B))
            f = embed_block(np.outer(x_F, _zero(dim_s)), S, U, dims)
            b = embed_block(np.outer(x_B, _zero(x_B.size)), B, U, dims)
            rest = f - b
            rest = rest + rest.conj().T
            if np.max(np.abs(rest), initial=0.0) > FLIP_TOL:
                H0.add(U, rest)

    eps_profile: Dict[int, float] = {}
    ball_states = {}
    for j in sorted(balls):
        B = balls[j]
        Phi = ball_vectors[j]
        eps = float(np.linalg.norm(Phi))
        eps_profile[j] = eps
        if eps <= FLIP_TOL:
            continue
        phi = Phi / eps
        ball_states[j] = (B, phi)
        e0 = _zero(phi.size)
        V.add(B, eps * (np.outer(phi, e0) + np.outer(e0, phi.conj())))

    violation = _orthogonality_violation(ball_states, dims)

    inverse = [u.conj().T for u in frame]
    H0_out = H0.merged().rotated(inverse)
    V_out = V.merged().rotated(inverse)

    norm_report = {
        "V_kappa1": V_out.kappa_norm(kappa1, alpha) if V_out.terms else 0.0,
        "H0_h": H0_out.h_norm(mu),
        "kappa1": kappa1,
        "alpha": alpha,
        "mu": mu,
    }
    if probe_R is not None:
        norm_report["H0_delta_at_probe"] = gap_scan(H0_out, psi0, probe_R).records[-1].delta
        norm_report["probe_R"] = probe_R

    logger.info(
        f"✂️  decomposition r={r}: {len(eps_profile)} ball(s), {len(wholesale)} wholesale term(s), "
        f"E0={E0:.6f}, max ε_j={max(eps_profile.values(), default=0.0):.4g}"
    )
    return Decomposition(
        H0_out, V_out, eps_profile, r, E0, norm_report, violation, dict(balls), wholesale
    )


def _zero(dim: int) -> np.ndarray:
    e0 = np.zeros(dim, dtype=complex)
    e0[0] = 1.0
    return e0


def kappa_norm_closed_form(r: int, g: float, kappa: float, alpha: float = 1.0) -> float:
    """‖V‖_κ of the ball-grouped transverse field -gΣX on a long ring around |0...0>"""
    return float((2 * r + 1) * abs(g) * np.exp(kappa * max(1, 2 * r) ** alpha))


def choose_cutoff_r(h: float, R: float, d: int, mu: float, delta: float, c_d: float) -> int:
    """⌊ln(4 h R^d / (c_d Δ)) / (2μ)⌋ + 1, floored at 0"""
    if min(h, mu, delta, c_d) <= 0 or R < 1 or d < 1:
        raise ConfigurationError("choose_cutoff_r needs positive h, μ, Δ, c_d and R >= 1")
    value = np.log(4.0 * h * R**d / (c_d * delta)) / (2.0 * mu)
    # tolerate round-off right at integer boundaries
    return max(0, int(np.floor(value + 1e-12)) + 1)


# =============================================================================
# P00++ radius scaling
# =============================================================================


@dataclass
class ScalingRow:
    eps: float
    R_full: int
    R_H0: int
    deltas_full: List[float]
    deltas_H0: List[float]
    overlaps_full: List[float] = field(default_factory=list)
    crossing_full: Optional[float] = None
    extrapolated_full: bool = False
    censored_full: bool = False
    censored_H0: bool = False


@dataclass
class ScalingStudy:
    rows: List[ScalingRow]
    offset: float
    overlap_threshold: float = FULL_OVERLAP_THRESHOLD
    slope_full: Optional[float] = None
    slope_H0: Optional[float] = None

    def to_rows(self) -> List[Dict]:
        return [
            {
                "eps": row.eps,
                "R_full": row.R_full,
                "R_H0": row.R_H0,
                "crossing_length_full": row.crossing_full,
                "extrapolated_full": row.extrapolated_full,
                "censored_full": row.censored_full,
                "censored_H0": row.censored_H0,
                "overlaps_full": " ".join(f"{p:.10g}" for p in row.overlaps_full),
                "deltas_full_offset": " ".join(f"{d - self.offset * row.eps:.10g}" for d in row.deltas_full),
                "deltas_H0": " ".join(f"{d:.10g}" for d in row.deltas_H0),
            }
            for row in self.rows
        ]


def _log_slope(eps: Sequence[float], lengths: Sequence[float]) -> Optional[float]:
    pairs = [(e, L) for e, L in zip(eps, lengths) if L > 0]
    if len(pairs) < 2:
        return None
    x, y = zip(*pairs)
    return float(stats.linregress(np.log(x), np.log(y)).slope)


def overlap_crossing(overlaps: Sequence[float], threshold: float, tail: int = 4) -> Tuple[Optional[float], bool]:
    """
    (L*, extrapolated): region length where ln|<0|gs>|^2 crosses ln threshold.

    overlaps[R] belongs to a window of R + 1 sites. A measured crossing is
    interpolated log-linearly between its bracketing lengths; otherwise the
    last `tail` points are fitted by a line and extended. None when the
    first window already fails or the tail does not decay.
    """
    logs = np.log(np.maximum(np.asarray(overlaps, dtype=float), 1e-300))
    lengths = np.arange(1, logs.size + 1, dtype=float)
    target = np.log(threshold)
    below = np.flatnonzero(logs < target)
    if below.size:
        k = int(below[0])
        if k == 0:
            return None, False
        frac = (target - logs[k - 1]) / (logs[k] - logs[k - 1])
        return float(lengths[k - 1] + frac), False
    if logs.size < 2:
        return None, True
    fit = stats.linregress(lengths[-tail:], logs[-tail:])
    if fit.slope >= -1e-14:
        return None, True
    return float((target - fit.intercept) / fit.slope), True


def radius_scaling_study(
    eps_list: Sequence[float],
    probe_R_max: int,
    offset: float = 3.0,
    solver: str = "iterative",
    overlap_threshold: float = FULL_OVERLAP_THRESHOLD,
) -> ScalingStudy:
    """
    Metastability radii of the P00++ ring around |0...0>, for H and for its H0.

    R_full is the largest R whose window ground state keeps overlap at least
    `overlap_threshold` with |0>; when that never fails up to probe_R_max the
    crossing is extrapolated from the decay of the overlap. R_H0 is the largest
    R with every Δ_H0 positive, censored when it reaches probe_R_max. Slopes
    are log-log fits of the region length R + 1 against ε. `offset` only shifts
    the reported Δ_H column.
    """
    if probe_R_max < 0:
        raise ConfigurationError("probe_R_max must be non-negative")
    if not 0 < overlap_threshold < 1:
        raise ConfigurationError("overlap_threshold must lie in (0, 1)")
    rows = []
    for eps in eps_list:
        if not 0 < eps < 0.5:
            raise ConfigurationError(f"ε must lie in (0, 0.5), got {eps}")
        # windows of diameter R must stay arcs with an exterior on both sides
        lattice = build_lattice("chain", [2 * (probe_R_max + 2)], periodic=True)
        H = p00pp_hamiltonian(lattice, eps)
        psi0 = ProductState.from_digits([0] * lattice.n_sites, 2, "zero")
        H0 = prethermal_decompose(H, psi0, 0).H0

        full = gap_scan(
            H, psi0, probe_R_max, translation_invariant=True, solver=solver, min_overlap=overlap_threshold
        )
        overlaps = [r.gs_overlap for r in full.records]
        crossing, extrapolated = overlap_crossing(overlaps, overlap_threshold)
        R_full = -1 if crossing is None else int(np.floor(crossing + 1e-12)) - 1
        base = gap_scan(H0, psi0, probe_R_max, translation_invariant=True, solver=solver, stop_below=0.0)
        R_H0 = metastability_range(base)

        rows.append(
            ScalingRow(
                eps,
                R_full,
                R_H0,
                list(full.deltas()),
                list(base.deltas()),
                overlaps,
                crossing,
                extrapolated,
                censored_full=extrapolated and crossing is None,
                censored_H0=R_H0 == probe_R_max,
            )
        )
        logger.info(f"📏 ε={eps}: R_full={R_full}{' (extrapolated)' if extrapolated else ''}, R_H0={R_H0}")

    uncensored_full = [(r.eps, r.R_full + 1) for r in rows if not r.censored_full]
    uncensored_h0 = [(r.eps, r.R_H0 + 1) for r in rows if not r.censored_H0]
    study = ScalingStudy(rows, offset, overlap_threshold)
    if uncensored_full:
        study.slope_full = _log_slope(*zip(*uncensored_full))
    if uncensored_h0:
        study.slope_H0 = _log_slope(*zip(*uncensored_h0))
    return study
