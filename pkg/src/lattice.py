"""
Lattice geometry: chains and square grids with graph distance,
balls, boundaries and connected-subset enumeration.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from config import Config
from errors import ConfigurationError, NumericalGuardError

logger = logging.getLogger(__name__)

DISTANCE_CACHE_LIMIT = 4096


@dataclass(frozen=True)
class SiteSet:
    """Sorted site indices with cached diameter and connectedness"""

    sites: Tuple[int, ...]
    diameter: int
    connected: bool

    def __len__(self) -> int:
        return len(self.sites)

    def __iter__(self):
        return iter(self.sites)

    def __contains__(self, site) -> bool:
        return site in self.sites

    @property
    def volume(self) -> int:
        return len(self.sites)


@dataclass
class Lattice:
    """Finite chain or square grid with nearest-neighbour adjacency"""

    kind: str
    extents: Tuple[int, ...]
    periodic: Tuple[bool, ...]
    coords: np.ndarray
    adjacency: Tuple[Tuple[int, ...], ...]
    _distances: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_sites(self) -> int:
        return len(self.adjacency)

    @property
    def dim_d(self) -> int:
        return len(self.extents)

    @property
    def edges(self) -> List[Tuple[int, int]]:
        """Nearest-neighbour bonds (i < j), each once"""
        return [(i, j) for i in range(self.n_sites) for j in self.adjacency[i] if i < j]

    def neighbors(self, site: int) -> Tuple[int, ...]:
        return self.adjacency[site]

    def site_index(self, coord: Sequence[int]) -> Optional[int]:
        """Row-major index of a coordinate, wrapping periodic axes"""
        wrapped = []
        for axis, (c, n) in enumerate(zip(coord, self.extents)):
            if self.periodic[axis]:
                c = c % n
            elif not 0 <= c < n:
                return None
            wrapped.append(c)
        index = 0
        for c, n in zip(wrapped, self.extents):
            index = index * n + c
        return index

    def shift_site(self, site: int, offset: Sequence[int]) -> Optional[int]:
        return self.site_index(self.coords[site] + np.asarray(offset))

    def distance_matrix(self) -> np.ndarray:
        if self._distances is None:
            if self.n_sites > DISTANCE_CACHE_LIMIT:
                raise NumericalGuardError(
                    f"distance cache limited to {DISTANCE_CACHE_LIMIT} sites, lattice has {self.n_sites}"
                )
            rows = [i for i in range(self.n_sites) for _ in self.adjacency[i]]
            cols = [j for i in range(self.n_sites) for j in self.adjacency[i]]
            graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n_sites,) * 2)
            dist = shortest_path(graph, method="D", unweighted=True, directed=False)
            self._distances = dist.astype(np.int64)
        return self._distances

    def distance(self, i: int, j: int) -> int:
        return int(self.distance_matrix()[i, j])

    def diameter(self, sites: Iterable[int]) -> int:
        idx = np.fromiter(sites, dtype=np.int64)
        if idx.size <= 1:
            return 0
        return int(self.distance_matrix()[np.ix_(idx, idx)].max())

    def is_connected(self, sites: Iterable[int]) -> bool:
        members = set(sites)
        if not members:
            return False
        start = next(iter(members))
        seen = {start}
        stack = [start]
        while stack:
            site = stack.pop()
            for nb in self.adjacency[site]:
                if nb in members and nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return len(seen) == len(members)

    def site_set(self, sites: Iterable[int]) -> SiteSet:
        ordered = tuple(sorted(set(int(s) for s in sites)))
        for s in ordered:
            if not 0 <= s < self.n_sites:
                raise ConfigurationError(f"site {s} outside lattice of {self.n_sites} sites")
        return SiteSet(ordered, self.diameter(ordered), self.is_connected(ordered) if ordered else False)

    def describe(self) -> Dict:
        return {"kind": self.kind, "extents": list(self.extents), "periodic": list(self.periodic)}


def build_lattice(kind: str, extents: Sequence[int], periodic: Union[bool, Sequence[bool]] = False) -> Lattice:
    """Build a chain (one extent) or square grid (two extents)"""
    extents = tuple(int(e) for e in extents)
    expected = {"chain": 1, "square": 2}
    if kind not in expected:
        raise ConfigurationError(f"unknown lattice kind '{kind}' (use chain or square)")
    if len(extents) != expected[kind]:
        raise ConfigurationError(f"{kind} lattice takes {expected[kind]} extent(s), got {len(extents)}")
    if any(e <= 0 for e in extents):
        raise ConfigurationError(f"lattice extents must be positive, got {list(extents)}")
    if isinstance(periodic, (bool, np.bool_)):
        periodic = (bool(periodic),) * len(extents)
    periodic = tuple(bool(p) for p in periodic)
    if len(periodic) != len(extents):
        raise ConfigurationError("one periodic flag per axis is required")

    coords = np.array(np.unravel_index(np.arange(int(np.prod(extents))), extents)).T
    lattice = Lattice(kind, extents, periodic, coords, ())

    adjacency = []
    for site in range(len(coords)):
        nbs = set()
        for axis in range(len(extents)):
            for step in (-1, 1):
                offset = np.zeros(len(extents), dtype=int)
                offset[axis] = step
                nb = lattice.shift_site(site, offset)
                if nb is not None and nb != site:
                    nbs.add(nb)
        adjacency.append(tuple(sorted(nbs)))
    lattice.adjacency = tuple(adjacency)
    return lattice


def _as_sites(lattice: Lattice, S) -> Tuple[int, ...]:
    sites = S.sites if isinstance(S, SiteSet) else tuple(sorted(set(int(s) for s in S)))
    if not sites:
        raise ConfigurationError("site set must be nonempty")
    return sites


def ball(lattice: Lattice, S, r: int) -> SiteSet:
    """{i : d(i, S) <= r}"""
    if r < 0:
        raise ConfigurationError("ball radius must be non-negative")
    sites = _as_sites(lattice, S)
    dist = lattice.distance_matrix()[:, list(sites)].min(axis=1)
    return lattice.site_set(np.flatnonzero(dist <= r))


def boundary(lattice: Lattice, S) -> SiteSet:
    """Sites of S with a neighbour outside S"""
    sites = _as_sites(lattice, S)
    members = set(sites)
    edge = [i for i in sites if any(nb not in members for nb in lattice.adjacency[i])]
    return lattice.site_set(edge)


def _esu(lattice: Lattice, root: int, restrict_above_root: bool, max_diam, max_volume) -> Iterator[Tuple[int, ...]]:
    # Exactly-once enumeration of connected sets grown from root (ESU order).
    dist = lattice.distance_matrix()

    def admissible(u, members):
        if restrict_above_root and u < root:
            return False
        if max_diam is not None and max(dist[u, m] for m in members) > max_diam:
            return False
        return True

    def extend(members: List[int], extension: List[int], closed: set):
        yield tuple(sorted(members))
        if max_volume is not None and len(members) >= max_volume:
            return
        extension = list(extension)
        while extension:
            w = extension.pop(0)
            if not admissible(w, members):
                continue
            new_ext = list(extension)
            new_closed = set(closed)
            for u in lattice.adjacency[w]:
                if u not in new_closed:
                    new_closed.add(u)
                    new_ext.append(u)
            new_ext.sort()
            yield from extend(members + [w], new_ext, new_closed)

    first = sorted(u for u in lattice.adjacency[root] if not restrict_above_root or u > root)
    closed = {root} | set(lattice.adjacency[root])
    yield from extend([root], first, closed)


def enumerate_connected_subsets(
    lattice: Lattice,
    anchor: Union[int, str] = "all",
    max_diam: Optional[int] = None,
    max_volume: Optional[int] = None,
    guard: Optional[int] = None,
) -> Iterator[SiteSet]:
    """
    Yield every connected subset within the caps exactly once.

    anchor="all" yields each set once (grown from its smallest site);
    an integer anchor yields the sets containing that site.
    """
    if max_diam is None and max_volume is None:
        raise ConfigurationError("give max_diam or max_volume to bound the enumeration")
    guard = guard or Config.ENUMERATION_GUARD
    cap_name = "max_volume" if max_volume is not None else "max_diam"

    if anchor == "all":
        roots = [(v, True) for v in range(lattice.n_sites)]
    else:
        if not 0 <= int(anchor) < lattice.n_sites:
            raise ConfigurationError(f"anchor {anchor} outside lattice")
        roots = [(int(anchor), False)]

    produced = 0
    for root, restrict in roots:
        for sites in _esu(lattice, root, restrict, max_diam, max_volume):
            produced += 1
            if produced > guard:
                raise NumericalGuardError(
                    f"connected-subset count exceeds guard {guard}; lower {cap_name} "
                    f"(or raise ENUMERATION_GUARD)"
                )
            yield lattice.site_set(sites)


def maximal_windows(lattice: Lattice, R: int) -> List[SiteSet]:
    """Connected sets of diameter <= R that no single added site keeps within R"""
    if lattice.kind == "chain":
        n = lattice.n_sites
        whole_diam = n // 2 if lattice.periodic[0] else n - 1
        if R >= whole_diam:
            return [lattice.site_set(range(n))]
        starts = range(n) if lattice.periodic[0] else range(n - R)
        return [lattice.site_set((s + k) % n for k in range(R + 1)) for s in starts]

    dist = lattice.distance_matrix()
    windows = []
    for S in enumerate_connected_subsets(lattice, "all", max_diam=R):
        members = set(S.sites)
        frontier = {nb for i in S.sites for nb in lattice.adjacency[i]} - members
        if all(max(dist[j, m] for m in members) > R for j in frontier):
            windows.append(S)
    return windows


def dimension_constant(lattice: Lattice, max_diam: int) -> float:
    """Empirical c_d: max of |dS|/max(1,diam)^(d-1) and |S|/max(1,diam)^d"""
    d = lattice.dim_d
    c_d = 0.0
    for S in enumerate_connected_subsets(lattice, "all", max_diam=max_diam):
        scale = max(1, S.diameter)
        c_d = max(c_d, len(boundary(lattice, S)) / scale ** (d - 1), len(S) / scale**d)
    return c_d


def boundary_volume_constant(lattice: Lattice, max_volume: int) -> float:
    """Empirical c'_d = min |dS| / |S|^(1-1/d) over proper connected subsets"""
    d = lattice.dim_d
    best = np.inf
    for S in enumerate_connected_subsets(lattice, "all", max_volume=max_volume):
        if len(S) == lattice.n_sites:
            continue
        best = min(best, len(boundary(lattice, S)) / len(S) ** (1 - 1 / d))
    return float(best)


def lattice_from_config(config: Dict) -> Lattice:
    """Build from a run-config mapping {"kind", "extents", "periodic"}"""
    try:
        return build_lattice(config["kind"], config["extents"], config.get("periodic", False))
    except KeyError as e:
        raise ConfigurationError(f"lattice config missing key {e}")
