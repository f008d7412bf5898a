"""
Model constructors: Ising chains and grids, PXP, helical q-state chains,
the P00++ chain and commuting Ising projector models.

build_model returns (hamiltonian, named_states, named_observables).
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import ConfigurationError
from lattice import Lattice, build_lattice
from operator_sum import PAULI, OperatorSum, ProductState, contract_legs, kron_all, projector

logger = logging.getLogger(__name__)

# default parameters double as the list of accepted names
MODEL_PARAMETERS: Dict[str, Dict] = {
    "ising_longitudinal": {"delta": 1.0, "eps": 0.0},
    "ising_mixed": {"delta": 1.0, "g": 0.0, "eps": 0.0},
    "pxp": {},
    "helix_simple": {"q": 3, "mu": 0.0, "delta": 1.0, "eps": 0.0},
    "helix_antihelix": {"mu1": 0.2, "mu2": 0.12, "eps": 0.0},
    "p00pp": {"eps": 0.1},
    "ising2d_commuting": {"delta_prime": 1.0, "widths": None},
    "ising_commuting": {"delta_prime": 1.0, "widths": None},
}

LATTICE_KINDS = {
    "ising_longitudinal": ("chain", "square"),
    "ising_mixed": ("chain", "square"),
    "pxp": ("chain",),
    "helix_simple": ("chain",),
    "helix_antihelix": ("chain",),
    "p00pp": ("chain",),
    "ising2d_commuting": ("square",),
    "ising_commuting": ("chain", "square"),
}

# q=3 helical model: triples (i-1, i, i+1) that cost no energy
HELIX_ALLOWED = ("000", "001", "012", "122", "221", "210", "100", "101", "020", "002", "200")
HELIX_MOTIF = "012210"


@dataclass
class ModelSpec:
    name: str
    lattice: Lattice
    parameters: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in MODEL_PARAMETERS:
            raise ConfigurationError(
                f"unknown model '{self.name}' (choose from {', '.join(MODEL_PARAMETERS)})"
            )
        allowed = MODEL_PARAMETERS[self.name]
        unknown = set(self.parameters) - set(allowed)
        if unknown:
            raise ConfigurationError(f"unknown parameter(s) {sorted(unknown)} for model {self.name}")
        if self.lattice.kind not in LATTICE_KINDS[self.name]:
            raise ConfigurationError(
                f"model {self.name} needs a {' or '.join(LATTICE_KINDS[self.name])} lattice, got {self.lattice.kind}"
            )
        self.parameters = {**allowed, **self.parameters}

    @classmethod
    def from_config(cls, config: Dict) -> "ModelSpec":
        """{"model": "pxp", "N": 24} style mapping, optional "lattice" block"""
        config = dict(config)
        try:
            name = config.pop("model")
        except KeyError:
            raise ConfigurationError("model config needs a 'model' key")
        lattice_cfg = config.pop("lattice", None)
        periodic = config.pop("periodic", True if name in ("pxp",) else False)
        sizes = {k: config.pop(k) for k in ("N", "L", "lx", "ly") if k in config}
        if lattice_cfg is not None:
            lattice = build_lattice(lattice_cfg["kind"], lattice_cfg["extents"], lattice_cfg.get("periodic", False))
        elif "lx" in sizes or "ly" in sizes:
            lattice = build_lattice("square", [sizes.get("lx", 1), sizes.get("ly", 1)], periodic)
        elif "N" in sizes or "L" in sizes:
            lattice = build_lattice("chain", [sizes.get("N", sizes.get("L"))], periodic)
        else:
            raise ConfigurationError("model config needs N/L, lx/ly or a lattice block")
        return cls(name, lattice, config)


def _site_dims(lattice: Lattice, q: int) -> Tuple[int, ...]:
    return (q,) * lattice.n_sites


def _single_site(lattice: Lattice, q: int, block: np.ndarray, sites: Optional[Sequence[int]] = None) -> OperatorSum:
    op = OperatorSum.empty(lattice, q)
    for i in range(lattice.n_sites) if sites is None else sites:
        op.add([i], block)
    return op


# =============================================================================
# Ising
# =============================================================================


def ising_parts(lattice: Lattice, delta: float, g: float, eps: float) -> Tuple[OperatorSum, OperatorSum]:
    """(ZZ + Z part, transverse -gX part) of -delta ZZ - g X - eps Z"""
    diag = OperatorSum.empty(lattice, 2)
    zz = np.kron(PAULI["Z"], PAULI["Z"])
    for i, j in lattice.edges:
        diag.add([i, j], -delta * zz)
    if eps:
        for i in range(lattice.n_sites):
            diag.add([i], -eps * PAULI["Z"])
    transverse = OperatorSum.empty(lattice, 2)
    if g:
        for i in range(lattice.n_sites):
            transverse.add([i], -g * PAULI["X"])
    return diag, transverse


def ising_hamiltonian(lattice: Lattice, delta: float = 1.0, g: float = 0.0, eps: float = 0.0) -> OperatorSum:
    """-delta sum ZZ - g sum X - eps sum Z, single-site parts merged per site"""
    H = OperatorSum.empty(lattice, 2)
    zz = np.kron(PAULI["Z"], PAULI["Z"])
    for i, j in lattice.edges:
        H.add([i, j], -delta * zz)
    site_block = -g * PAULI["X"] - eps * PAULI["Z"]
    if np.any(site_block):
        for i in range(lattice.n_sites):
            H.add([i], site_block)
    return H


def stripe_state(lattice: Lattice, widths: Sequence[int]) -> ProductState:
    """Alternating 0/1 stripes along the first axis with the given widths"""
    widths = [int(w) for w in widths]
    if sum(widths) != lattice.extents[0] or any(w <= 0 for w in widths):
        raise ConfigurationError(f"stripe widths {widths} must be positive and sum to {lattice.extents[0]}")
    column_value = []
    for k, w in enumerate(widths):
        column_value += [k % 2] * w
    digits = [column_value[int(lattice.coords[s][0])] for s in range(lattice.n_sites)]
    return ProductState.from_digits(digits, 2, label=f"stripes{widths}")


def _ising_states(lattice: Lattice, widths=None) -> Dict[str, ProductState]:
    n = lattice.n_sites
    states = {
        "zero": ProductState.from_digits([0] * n, 2, "zero"),
        "one": ProductState.from_digits([1] * n, 2, "one"),
    }
    if lattice.kind == "square":
        if widths is None and lattice.extents[0] % 3 == 0:
            widths = [3] * (lattice.extents[0] // 3)
        if widths is not None:
            states["stripes"] = stripe_state(lattice, widths)
    return states


def _ising_observables(lattice: Lattice) -> Dict[str, OperatorSum]:
    n = lattice.n_sites
    return {
        "magnetization": _single_site(lattice, 2, PAULI["Z"] / n),
        "n_zero": _single_site(lattice, 2, projector(2, 0)),
    }


# =============================================================================
# PXP
# =============================================================================


def pxp_hamiltonian(lattice: Lattice) -> OperatorSum:
    """sum_i P_{i-1} X_i P_{i+1} with P = |0><0| (boundary sites lose a projector)"""
    n = lattice.n_sites
    periodic = lattice.periodic[0]
    P = projector(2, 0)
    H = OperatorSum.empty(lattice, 2)
    for i in range(n):
        left = (i - 1) % n if (periodic or i > 0) else None
        right = (i + 1) % n if (periodic or i < n - 1) else None
        sites, mats = [], []
        if left is not None:
            sites.append(left)
            mats.append(P)
        sites.append(i)
        mats.append(PAULI["X"])
        if right is not None and right != left:
            sites.append(right)
            mats.append(P)
        H.add(sites, kron_all(mats))
    H.constraint = "no_adjacent_ones"
    return H


def _pxp_states(lattice: Lattice) -> Dict[str, ProductState]:
    n = lattice.n_sites
    zero = np.array([1, 0], dtype=complex)
    one = np.array([0, 1], dtype=complex)
    minus = np.array([1, -1], dtype=complex) / np.sqrt(2)
    return {
        "zero": ProductState([zero] * n, "zero"),
        "one": ProductState([one] * n, "one"),
        "zero-minus": ProductState([zero if i % 2 == 0 else minus for i in range(n)], "zero-minus"),
        "minus-zero": ProductState([minus if i % 2 == 0 else zero for i in range(n)], "minus-zero"),
        "cdw": ProductState([zero if i % 2 == 0 else one for i in range(n)], "cdw"),
    }


def _pxp_observables(lattice: Lattice) -> Dict[str, OperatorSum]:
    n = lattice.n_sites
    even = range(0, n, 2)
    odd = range(1, n, 2)
    return {
        "z_even": _single_site(lattice, 2, PAULI["Z"] / len(even), even),
        "z_odd": _single_site(lattice, 2, PAULI["Z"] / max(1, len(odd)), odd),
        "x_odd": _single_site(lattice, 2, PAULI["X"] / max(1, len(odd)), odd),
        "n_one": _single_site(lattice, 2, projector(2, 1)),
    }


# =============================================================================
# Helical chains
# =============================================================================


def _triple_projector(q: int, patterns: Sequence[Sequence[int]]) -> np.ndarray:
    P = np.zeros((q**3, q**3), dtype=complex)
    for a, b, c in patterns:
        idx = (a * q + b) * q + c
        P[idx, idx] = 1.0
    return P


def _add_triples(H: OperatorSum, lattice: Lattice, q: int, block: np.ndarray):
    """Add a 3-site block centred on every site; open ends see phantom |0> sites"""
    n = lattice.n_sites
    periodic = lattice.periodic[0]
    zero = np.zeros(q, dtype=complex)
    zero[0] = 1.0
    for i in range(n):
        triple = [i - 1, i, i + 1]
        if periodic:
            H.add([s % n for s in triple], block)
            continue
        # phantom sites get labels n, n+1 in a padded index space
        padded = [s if 0 <= s < n else n + (0 if s < 0 else 1) for s in triple]
        real = [s for s in padded if s < n]
        dims = {s: q for s in padded}
        vectors = {s: zero for s in padded}
        reduced = contract_legs(block, padded, real, dims, vectors)
        H.add(real, reduced)


def helix_perturbation(lattice: Lattice, q: int, eps: float) -> OperatorSum:
    """eps sum_i (|0><1| + |1><2| + ... + |q-1><0| + h.c.)"""
    cyc = np.zeros((q, q), dtype=complex)
    for k in range(q):
        cyc[k, (k + 1) % q] = 1.0
    return _single_site(lattice, q, eps * (cyc + cyc.T))


def helix_antihelix_parts(lattice: Lattice, mu1: float, mu2: float, eps: float) -> Tuple[OperatorSum, OperatorSum]:
    q = 3
    allowed = [[int(c) for c in s] for s in HELIX_ALLOWED]
    H0 = OperatorSum.empty(lattice, q)
    _add_triples(H0, lattice, q, np.eye(q**3) - _triple_projector(q, allowed))
    chem = mu1 * projector(q, 1) + mu2 * projector(q, 2)
    if np.any(chem):
        for i in range(lattice.n_sites):
            H0.add([i], chem)
    return H0, helix_perturbation(lattice, q, eps)


def helix_simple_parts(lattice: Lattice, q: int, mu: float, delta: float, eps: float) -> Tuple[OperatorSum, OperatorSum]:
    """sum_i (1-P_i) delta (1-P_i) - mu sum_i |0><0| plus the cyclic perturbation"""
    q = int(q)
    if q < 3:
        raise ConfigurationError("helix_simple needs q >= 3")
    patterns = [(0, 0, 0), (0, 0, 1), (q - 1, 0, 0)]
    patterns += [(k, (k + 1) % q, (k + 2) % q) for k in range(q - 1)]
    H0 = OperatorSum.empty(lattice, q)
    _add_triples(H0, lattice, q, delta * (np.eye(q**3) - _triple_projector(q, patterns)))
    if mu:
        for i in range(lattice.n_sites):
            H0.add([i], -mu * projector(q, 0))
    return H0, helix_perturbation(lattice, q, eps)


def helix_ground_tilings(L: int, q: int) -> List[str]:
    """All tilings by blocks 0^(q+1) and 0 1 ... (q-1) 0, zero-padded to length L"""
    block = q + 1
    motif = "".join(str(k) for k in range(q)) + "0"
    zeros = "0" * block
    n_blocks = L // block
    tilings = []
    for choice in itertools.product((zeros, motif), repeat=n_blocks):
        tilings.append("".join(choice) + "0" * (L - block * n_blocks))
    return tilings


def repeated_pattern(pattern: str, L: int) -> str:
    if L % len(pattern):
        raise ConfigurationError(f"pattern '{pattern}' does not tile a chain of length {L}")
    return pattern * (L // len(pattern))


def _helix_states(lattice: Lattice, q: int) -> Dict[str, ProductState]:
    L = lattice.n_sites
    states = {"zero": ProductState.from_digits([0] * L, q, "zero")}
    if q == 3:
        for pattern in ("01221", HELIX_MOTIF):
            if L % len(pattern) == 0:
                digits = repeated_pattern(pattern, L)
                states[f"motif_{pattern}"] = ProductState.from_digits([int(c) for c in digits], q, digits)
        if L >= 2:
            ref = "0" * (L - 2) + "12"
            states["reference"] = ProductState.from_digits([int(c) for c in ref], q, ref)
    motif = "".join(str(k) for k in range(q)) + "0"
    if L >= len(motif):
        digits = motif * (L // len(motif)) + "0" * (L % len(motif))
        states["helix_blocks"] = ProductState.from_digits([int(c) for c in digits], q, digits)
    return states


def _helix_observables(lattice: Lattice, q: int) -> Dict[str, OperatorSum]:
    L = lattice.n_sites
    obs = {"n_zero": _single_site(lattice, q, projector(q, 0))}
    weight = sum(k * projector(q, k) for k in range(1, q))
    for j in range(L):
        obs[f"n_site_{j}"] = _single_site(lattice, q, weight, [j])
    if q == 3 and L >= len(HELIX_MOTIF):
        motif_vec = np.zeros(q ** len(HELIX_MOTIF), dtype=complex)
        motif_vec[int(HELIX_MOTIF, q)] = 1.0
        block = np.outer(motif_vec, motif_vec)
        counter = OperatorSum.empty(lattice, q)
        starts = range(L) if lattice.periodic[0] else range(L - len(HELIX_MOTIF) + 1)
        for i in starts:
            counter.add([(i + k) % L for k in range(len(HELIX_MOTIF))], block)
        obs["n_motif"] = counter
    return obs


# =============================================================================
# P00++
# =============================================================================


def p00pp_projector() -> np.ndarray:
    """Projector onto span(|00>, |++>) on two qubits"""
    P = np.zeros((4, 4), dtype=complex)
    P[0, 0] = 1.0
    v = np.array([0, 1, 1, 1], dtype=complex) / np.sqrt(3)
    return P + np.outer(v, v.conj())


def p00pp_hamiltonian(lattice: Lattice, eps: float) -> OperatorSum:
    """sum (1 - P_{00,++})_{i,i+1} + eps sum (Z_i + X_i)"""
    H = OperatorSum.empty(lattice, 2)
    bond = np.eye(4) - p00pp_projector()
    for i, j in lattice.edges:
        H.add([i, j], bond)
    if eps:
        for i in range(lattice.n_sites):
            H.add([i], eps * (PAULI["Z"] + PAULI["X"]))
    return H


# =============================================================================
# Dispatcher
# =============================================================================


def build_model(spec: ModelSpec):
    """(hamiltonian, named_states, named_observables) for a model spec"""
    p = spec.parameters
    lat = spec.lattice
    name = spec.name

    if name in ("ising_longitudinal", "ising_mixed"):
        H = ising_hamiltonian(lat, p["delta"], p.get("g", 0.0), p["eps"])
        states, observables = _ising_states(lat), _ising_observables(lat)
    elif name == "pxp":
        H = pxp_hamiltonian(lat)
        states, observables = _pxp_states(lat), _pxp_observables(lat)
    elif name == "helix_antihelix":
        H0, V = helix_antihelix_parts(lat, p["mu1"], p["mu2"], p["eps"])
        H = H0 + V if p["eps"] else H0
        states, observables = _helix_states(lat, 3), _helix_observables(lat, 3)
    elif name == "helix_simple":
        H0, V = helix_simple_parts(lat, p["q"], p["mu"], p["delta"], p["eps"])
        H = H0 + V if p["eps"] else H0
        q = int(p["q"])
        states, observables = _helix_states(lat, q), _helix_observables(lat, q)
    elif name == "p00pp":
        H = p00pp_hamiltonian(lat, p["eps"])
        states, observables = _ising_states(lat), _ising_observables(lat)
        plus = np.array([1, 1], dtype=complex) / np.sqrt(2)
        states["plus"] = ProductState([plus] * lat.n_sites, "plus")
    else:
        from commuting import commuting_ising_model

        model = commuting_ising_model(lat, p["delta_prime"])
        H = model.hamiltonian()
        states, observables = _ising_states(lat, p.get("widths")), _ising_observables(lat)

    logger.debug(f"🏗️  built {name} on {lat.describe()}: {H.describe()}")
    return H, states, observables


def resolve_state(name_or_digits: str, states: Dict[str, ProductState], dims: Sequence[int]) -> ProductState:
    """Named state, or a digit string such as '0122101221'"""
    if name_or_digits in states:
        return states[name_or_digits]
    if name_or_digits.isdigit() and len(name_or_digits) == len(dims):
        return ProductState.from_digits([int(c) for c in name_or_digits], dims, name_or_digits)
    raise ConfigurationError(
        f"unknown state '{name_or_digits}' (named states: {', '.join(sorted(states))}, or a digit string)"
    )
