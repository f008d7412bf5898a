"""
Local operators and product states.

An OperatorSum stores a Hamiltonian or observable as a list of local terms,
each a dense block on a sorted support (site order = kron order, first site
most significant). A ProductState stores one unit vector per site.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from errors import ConfigurationError
from lattice import Lattice

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def kron_all(mats: Iterable[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def projector(q: int, k: int) -> np.ndarray:
    """|k><k| on a q-level site"""
    p = np.zeros((q, q), dtype=complex)
    p[k, k] = 1.0
    return p


def embed_block(block: np.ndarray, support: Sequence[int], target: Sequence[int], dims: Sequence[int]) -> np.ndarray:
    """Extend a block on `support` to the ordered superset `target` with identities"""
    support = list(support)
    target = list(target)
    if support == target:
        return np.asarray(block, dtype=complex)
    pos = {s: i for i, s in enumerate(target)}
    try:
        inner = [pos[s] for s in support]
    except KeyError as e:
        raise ConfigurationError(f"site {e} of the block is not in the target support")
    rest = [i for i in range(len(target)) if i not in inner]
    q_in = [dims[s] for s in support]
    q_rest = [dims[target[i]] for i in rest]
    k, r = len(inner), len(rest)

    op = np.asarray(block, dtype=complex).reshape(q_in + q_in)
    ident = np.eye(int(np.prod(q_rest)) if q_rest else 1, dtype=complex).reshape(q_rest + q_rest)
    full = np.tensordot(op, ident, axes=0)  # out_inner, in_inner, out_rest, in_rest

    perm_out, perm_in = [], []
    for i in range(len(target)):
        if i in inner:
            a = inner.index(i)
            perm_out.append(a)
            perm_in.append(k + a)
        else:
            b = rest.index(i)
            perm_out.append(2 * k + b)
            perm_in.append(2 * k + r + b)
    dim = int(np.prod([dims[s] for s in target]))
    return full.transpose(perm_out + perm_in).reshape(dim, dim)


def contract_legs(block: np.ndarray, support: Sequence[int], keep: Sequence[int], dims: Sequence[int], vectors) -> np.ndarray:
    """<a|_{S\\keep} block |a>_{S\\keep}, leaving a block on support ∩ keep"""
    support = list(support)
    keep_set = set(keep)
    tensor = np.asarray(block, dtype=complex).reshape([dims[s] for s in support] * 2)
    n = len(support)
    # contract from the last site so axis positions of earlier sites stay valid
    for pos in reversed(range(n)):
        site = support[pos]
        if site in keep_set:
            continue
        vec = np.asarray(vectors[site], dtype=complex)
        n_now = tensor.ndim // 2
        tensor = np.tensordot(tensor, vec, axes=([n_now + pos], [0]))
        tensor = np.tensordot(vec.conj(), tensor, axes=([0], [pos]))
    remaining = [s for s in support if s in keep_set]
    dim = int(np.prod([dims[s] for s in remaining])) if remaining else 1
    return tensor.reshape(dim, dim)


def local_unitary(vec: np.ndarray) -> np.ndarray:
    """Unitary U with U|0> = vec (Householder reflection times a phase)"""
    a = np.asarray(vec, dtype=complex)
    q = a.size
    e0 = np.zeros(q, dtype=complex)
    e0[0] = 1.0
    phase = a[0] / abs(a[0]) if abs(a[0]) > 1e-15 else 1.0
    u = a - phase * e0
    norm_u = np.linalg.norm(u)
    if norm_u < 1e-14:
        return phase * np.eye(q, dtype=complex)
    w = u / norm_u
    reflection = np.eye(q, dtype=complex) - 2.0 * np.outer(w, w.conj())
    return phase * reflection


@dataclass(frozen=True)
class Term:
    support: Tuple[int, ...]
    block: np.ndarray


@dataclass
class OperatorSum:
    """Sum of local terms on a lattice of qudits"""

    qudit_dims: Tuple[int, ...]
    terms: List[Term] = field(default_factory=list)
    lattice: Optional[Lattice] = None
    hermitian: bool = True
    on_disconnected: str = "reject"
    # basis predicate the model lives in (e.g. "no_adjacent_ones"); None for the full space
    constraint: Optional[str] = None

    @classmethod
    def empty(cls, lattice: Lattice, q, hermitian: bool = True) -> "OperatorSum":
        dims = tuple([q] * lattice.n_sites) if np.isscalar(q) else tuple(q)
        return cls(dims, [], lattice, hermitian)

    @property
    def n_sites(self) -> int:
        return len(self.qudit_dims)

    def add(self, support: Sequence[int], block: np.ndarray, coefficient: complex = 1.0) -> "OperatorSum":
        """Add coefficient * block on support (any site order; reordered here)"""
        support = [int(s) for s in support]
        if len(set(support)) != len(support):
            raise ConfigurationError(f"repeated site in support {support}")
        for s in support:
            if not 0 <= s < self.n_sites:
                raise ConfigurationError(f"site {s} outside the {self.n_sites}-site system")
        block = np.asarray(block, dtype=complex) * coefficient
        dims = [self.qudit_dims[s] for s in support]
        size = int(np.prod(dims))
        if block.shape != (size, size):
            raise ConfigurationError(f"block shape {block.shape} does not match support dims {dims}")

        order = sorted(range(len(support)), key=lambda i: support[i])
        if order != list(range(len(support))):
            tensor = block.reshape(dims + dims)
            k = len(support)
            tensor = tensor.transpose(order + [k + i for i in order])
            block = tensor.reshape(size, size)
            support = [support[i] for i in order]

        if self.hermitian and np.max(np.abs(block - block.conj().T), initial=0.0) > HERMITIAN_TOL:
            raise ConfigurationError(f"non-Hermitian block on support {support}")

        if self.lattice is not None and len(support) > 1 and not self.lattice.is_connected(support):
            if self.on_disconnected == "fatten":
                hull = connected_hull(self.lattice, support)
                block = embed_block(block, support, hull, self.qudit_dims)
                support = hull
            else:
                raise ConfigurationError(
                    f"support {support} is not connected; use on_disconnected='fatten' to embed it in its hull"
                )

        self.terms.append(Term(tuple(support), block))
        return self

    def copy(self) -> "OperatorSum":
        return OperatorSum(
            self.qudit_dims, list(self.terms), self.lattice, self.hermitian, self.on_disconnected, self.constraint
        )

    def scaled(self, factor: complex) -> "OperatorSum":
        out = self.copy()
        out.terms = [Term(t.support, t.block * factor) for t in self.terms]
        if np.iscomplexobj(factor) and abs(np.imag(factor)) > 0:
            out.hermitian = False
        return out

    def __add__(self, other: "OperatorSum") -> "OperatorSum":
        if tuple(other.qudit_dims) != tuple(self.qudit_dims):
            raise ConfigurationError("cannot add operators on different Hilbert spaces")
        out = self.copy()
        out.terms = list(self.terms) + list(other.terms)
        out.hermitian = self.hermitian and other.hermitian
        out.constraint = self.constraint or other.constraint
        return out

    def __sub__(self, other: "OperatorSum") -> "OperatorSum":
        return self + other.scaled(-1.0)

    def merged(self, tol: float = 0.0) -> "OperatorSum":
        """One term per support (blocks on identical supports summed)"""
        acc: Dict[Tuple[int, ...], np.ndarray] = {}
        for t in self.terms:
            acc[t.support] = acc.get(t.support, 0) + t.block
        out = self.copy()
        out.terms = [Term(s, b) for s, b in acc.items() if np.max(np.abs(b), initial=0.0) > tol]
        return out

    def terms_touching(self, sites: Iterable[int]) -> List[Term]:
        members = set(sites)
        return [t for t in self.terms if members.intersection(t.support)]

    def rotated(self, frame: Sequence[np.ndarray]) -> "OperatorSum":
        """Conjugate every block: U^dag O U with U = kron of per-site unitaries"""
        out = self.copy()
        new_terms = []
        for t in self.terms:
            u = kron_all(frame[s] for s in t.support)
            new_terms.append(Term(t.support, u.conj().T @ t.block @ u))
        out.terms = new_terms
        return out

    def h_norm(self, mu: float) -> float:
        return local_norm(self, "h", mu)

    def kappa_norm(self, kappa: float, alpha: float = 1.0) -> float:
        return local_norm(self, "kappa", (kappa, alpha))

    def k_norm(self, K: float) -> float:
        return local_norm(self, "volume", K)

    def describe(self) -> Dict:
        supports = sorted({t.support for t in self.terms})
        return {
            "n_terms": len(self.terms),
            "n_supports": len(supports),
            "max_support": max((len(s) for s in supports), default=0),
        }


def connected_hull(lattice: Lattice, sites: Sequence[int]) -> List[int]:
    """Grow a site set along shortest paths until it is connected"""
    members = set(sites)
    dist = lattice.distance_matrix()
    while not lattice.is_connected(members):
        # pick the closest pair of sites in different components
        comp = _component(lattice, members, next(iter(sorted(members))))
        others = members - comp
        a, b = min(((i, j) for i in comp for j in others), key=lambda p: (dist[p], p))
        path_site = a
        while path_site != b:
            path_site = min(
                (nb for nb in lattice.adjacency[path_site] if dist[nb, b] < dist[path_site, b]),
            )
            members.add(path_site)
    return sorted(members)


def _component(lattice: Lattice, members: set, start: int) -> set:
    seen = {start}
    stack = [start]
    while stack:
        s = stack.pop()
        for nb in lattice.adjacency[s]:
            if nb in members and nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return seen


def local_norm(O: OperatorSum, kind: str, params) -> float:
    """
    max_i sum_{S ∋ i} weight(S) ||O_S|| over the merged decomposition.

    kind="h": weight exp(2 mu diam S); kind="kappa": exp(kappa max(1, diam S)^alpha);
    kind="volume": exp(K |S|).
    """
    if O.lattice is None:
        raise ConfigurationError("local norms need the operator's lattice")
    per_site = np.zeros(O.n_sites)
    for t in O.merged().terms:
        diam = O.lattice.diameter(t.support)
        if kind == "h":
            weight = np.exp(2.0 * float(params) * diam)
        elif kind == "kappa":
            kappa, alpha = params if isinstance(params, (tuple, list)) else (params, 1.0)
            weight = np.exp(kappa * max(1, diam) ** alpha)
        elif kind == "volume":
            weight = np.exp(float(params) * len(t.support))
        else:
            raise ConfigurationError(f"unknown norm kind '{kind}' (h, kappa, volume)")
        value = weight * np.linalg.norm(t.block, 2)
        per_site[list(t.support)] += value
    return float(per_site.max(initial=0.0))


@dataclass
class ProductState:
    """One normalized local vector per site"""

    vectors: List[np.ndarray]
    label: str = ""

    def __post_init__(self):
        self.vectors = [np.asarray(v, dtype=complex) for v in self.vectors]
        for i, v in enumerate(self.vectors):
            if abs(np.linalg.norm(v) - 1.0) > 1e-12:
                raise ConfigurationError(f"local vector on site {i} is not normalized")

    @classmethod
    def from_digits(cls, digits: Sequence[int], dims, label: str = "") -> "ProductState":
        digits = [int(d) for d in digits]
        dims = [dims] * len(digits) if np.isscalar(dims) else list(dims)
        vecs = []
        for d, q in zip(digits, dims):
            if not 0 <= d < q:
                raise ConfigurationError(f"digit {d} outside local dimension {q}")
            v = np.zeros(q, dtype=complex)
            v[d] = 1.0
            vecs.append(v)
        return cls(vecs, label or "".join(str(d) for d in digits))

    @property
    def n_sites(self) -> int:
        return len(self.vectors)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(v.size for v in self.vectors)

    def dense(self, sites: Optional[Sequence[int]] = None) -> np.ndarray:
        sites = range(self.n_sites) if sites is None else sites
        out = np.ones(1, dtype=complex)
        for s in sites:
            out = np.kron(out, self.vectors[s])
        return out

    def frame(self) -> List[np.ndarray]:
        """Per-site unitaries mapping |0> to this state's local vectors"""
        return [local_unitary(v) for v in self.vectors]

    def amplitudes(self, digits: np.ndarray) -> np.ndarray:
        """<z|psi> for configurations given as a (count, n_sites) digit array"""
        amp = np.ones(digits.shape[0], dtype=complex)
        for s, v in enumerate(self.vectors):
            amp *= v[digits[:, s]]
        return amp

    def is_computational(self) -> bool:
        return all(np.count_nonzero(np.abs(v) > 1e-14) == 1 for v in self.vectors)

    def digits(self) -> Optional[List[int]]:
        if not self.is_computational():
            return None
        return [int(np.argmax(np.abs(v))) for v in self.vectors]

    def period(self, tol: float = 1e-12) -> int:
        """Smallest p dividing n with v_{i+p} = v_i on a ring"""
        n = self.n_sites
        for p in range(1, n + 1):
            if n % p:
                continue
            if all(np.allclose(self.vectors[i], self.vectors[(i + p) % n], atol=tol) for i in range(n)):
                return p
        return n
