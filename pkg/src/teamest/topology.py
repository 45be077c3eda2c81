"""Communication graphs: construction, hop structure, spanning trees and cells.

Agents are numbered ``1..m``. Every topology is undirected, simple and
connected; the constructor refuses anything else.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import networkx as nx
import numpy as np

from .errors import (DisconnectedGraphError, GenerationError, InvalidInputError,
                     InvalidSizeError, NotACellTreeError)

KINDS = ("fully_connected", "star", "line", "cycle", "random")
MAX_GENERATION_ATTEMPTS = 100


@dataclass(frozen=True)
class NetworkTopology:
    m: int
    edges: frozenset
    adjacency: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.m < 1:
            raise InvalidSizeError(f"need at least one agent, got m={self.m}")
        norm = set()
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise InvalidInputError(f"self-loop on agent {a}")
            if not (1 <= a <= self.m and 1 <= b <= self.m):
                raise InvalidInputError(f"edge ({a}, {b}) outside agents 1..{self.m}")
            norm.add((min(a, b), max(a, b)))
        object.__setattr__(self, "edges", frozenset(norm))
        nbrs = [[] for _ in range(self.m + 1)]
        for a, b in norm:
            nbrs[a].append(b)
            nbrs[b].append(a)
        adjacency = tuple(tuple(sorted(n)) for n in nbrs)
        object.__setattr__(self, "adjacency", adjacency)
        if not _is_connected(self.m, adjacency):
            raise DisconnectedGraphError("topology is not connected")

    @classmethod
    def from_edges(cls, m: int, edges: Iterable[tuple[int, int]]) -> "NetworkTopology":
        return cls(m, frozenset(tuple(e) for e in edges))

    def neighbors(self, i: int) -> tuple[int, ...]:
        """Sorted neighbor list of agent ``i``."""
        return self.adjacency[i]

    def degree(self, i: int) -> int:
        return len(self.adjacency[i])

    @property
    def agents(self) -> range:
        return range(1, self.m + 1)

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.agents)
        g.add_edges_from(self.edges)
        return g

    def __str__(self):
        return f"NetworkTopology(m={self.m}, edges={self.sorted_edges()})"


def _is_connected(m: int, adjacency) -> bool:
    seen = {1}
    queue = deque([1])
    while queue:
        v = queue.popleft()
        for w in adjacency[v]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == m


def make_topology(kind: str, m: int, seed: int | None = None) -> NetworkTopology:
    """Build one of the standard network shapes.

    ``star`` uses agent 1 as the hub, ``line`` links ``i`` to ``i+1`` and
    ``random`` draws per-agent target degrees uniformly on
    ``[2, min(10, m-1)]`` (see :func:`random_topology`).
    """
    if kind not in KINDS:
        raise InvalidInputError(f"unknown topology kind {kind!r}; expected one of {KINDS}")
    if m < 2:
        raise InvalidSizeError(f"topology needs m >= 2 agents, got {m}")
    if (kind == "random") != (seed is not None):
        raise InvalidInputError("seed is required for kind='random' and only for it")
    if kind == "fully_connected":
        edges = itertools.combinations(range(1, m + 1), 2)
    elif kind == "star":
        edges = ((1, j) for j in range(2, m + 1))
    elif kind == "line":
        edges = ((i, i + 1) for i in range(1, m))
    elif kind == "cycle":
        if m < 3:
            raise InvalidSizeError("a cycle needs at least 3 agents")
        edges = [(i, i + 1) for i in range(1, m)] + [(1, m)]
    else:
        return random_topology(m, seed)
    return NetworkTopology.from_edges(m, edges)


def random_topology(m: int, seed: int, min_degree: int = 2,
                    max_degree: int = 10) -> NetworkTopology:
    """Connected random graph with uniformly drawn target degrees.

    Target degrees are uniform on ``[min(min_degree, m-1), min(max_degree, m-1)]``.
    Stubs are paired at random, skipping pairs that would form self-loops or
    duplicate edges, then components are joined with the fewest extra edges
    while respecting the maximum degree. Attempts that cannot be joined are
    redrawn, up to ``MAX_GENERATION_ATTEMPTS`` times.
    """
    if m < 2:
        raise InvalidSizeError(f"topology needs m >= 2 agents, got {m}")
    hi = min(max_degree, m - 1)
    lo = min(min_degree, hi)
    rng = np.random.default_rng(seed)
    for _ in range(MAX_GENERATION_ATTEMPTS):
        targets = rng.integers(lo, hi + 1, size=m)
        edges = _pair_stubs(targets, rng)
        if _join_components(m, edges, hi, rng):
            return NetworkTopology.from_edges(m, edges)
    raise GenerationError(
        f"could not generate a connected graph with m={m} in {MAX_GENERATION_ATTEMPTS} attempts")


def _pair_stubs(targets: np.ndarray, rng: np.random.Generator) -> set:
    stubs = [i + 1 for i, d in enumerate(targets) for _ in range(int(d))]
    rng.shuffle(stubs)
    edges: set = set()
    while stubs:
        a = stubs.pop()
        for idx in range(len(stubs) - 1, -1, -1):
            b = stubs[idx]
            e = (min(a, b), max(a, b))
            if b != a and e not in edges:
                edges.add(e)
                stubs.pop(idx)
                break
    return edges


def _join_components(m: int, edges: set, max_degree: int, rng: np.random.Generator) -> bool:
    g = nx.Graph()
    g.add_nodes_from(range(1, m + 1))
    g.add_edges_from(edges)
    comps = [sorted(c) for c in nx.connected_components(g)]
    comps.sort()
    for left, right in zip(comps, comps[1:]):
        a_free = [v for v in left if g.degree(v) < max_degree]
        b_free = [v for v in right if g.degree(v) < max_degree]
        if not a_free or not b_free:
            return False
        a = a_free[rng.integers(len(a_free))]
        b = b_free[rng.integers(len(b_free))]
        g.add_edge(a, b)
        edges.add((min(a, b), max(a, b)))
    return True


def random_tree(m: int, seed: int) -> NetworkTopology:
    """Uniform-attachment random tree: agent k links to a random earlier agent."""
    if m < 2:
        raise InvalidSizeError(f"topology needs m >= 2 agents, got {m}")
    rng = np.random.default_rng(seed)
    edges = [(int(rng.integers(1, k)), k) for k in range(2, m + 1)]
    return NetworkTopology.from_edges(m, edges)


def random_cell_tree(m: int, seed: int, max_cell: int = 4) -> NetworkTopology:
    """Random tree of cliques ("cells") with ``m`` agents.

    Each new cell is attached at one existing agent and filled with fresh
    agents, so the agent-cell incidence graph is a tree by construction.
    """
    if m < 2:
        raise InvalidSizeError(f"topology needs m >= 2 agents, got {m}")
    rng = np.random.default_rng(seed)
    first = int(min(m, rng.integers(2, max_cell + 1)))
    cells = [list(range(1, first + 1))]
    n = first
    while n < m:
        size = int(min(rng.integers(2, max_cell + 1), m - n + 1))
        anchor = int(rng.integers(1, n + 1))
        cells.append([anchor] + list(range(n + 1, n + size)))
        n += size - 1
    edges = {(a, b) for c in cells for a, b in itertools.combinations(sorted(c), 2)}
    return NetworkTopology.from_edges(m, edges)


@dataclass(frozen=True)
class HopStructure:
    """k-hop neighborhoods ``khop[i][k]`` and eccentricities ``ecc[i]``.

    Index 0 of ``khop`` and ``ecc`` is unused so agents index directly.
    ``dist`` is the (m+1)x(m+1) shortest-path matrix, also 1-based.
    """
    khop: tuple
    ecc: tuple
    dist: np.ndarray = field(repr=False, compare=False)

    @property
    def m(self) -> int:
        return len(self.ecc) - 1

    @property
    def max_ecc(self) -> int:
        return max(self.ecc[1:])

    def ring(self, i: int, k: int) -> frozenset:
        if k < 0 or k > self.ecc[i]:
            return frozenset()
        return self.khop[i][k]


def hop_structure(topo: NetworkTopology) -> HopStructure:
    m = topo.m
    dist = np.full((m + 1, m + 1), -1, dtype=int)
    khop: list = [()]
    ecc: list = [0]
    for i in topo.agents:
        d = {i: 0}
        queue = deque([i])
        while queue:
            v = queue.popleft()
            for w in topo.neighbors(v):
                if w not in d:
                    d[w] = d[v] + 1
                    queue.append(w)
        kappa = max(d.values())
        rings = [set() for _ in range(kappa + 1)]
        for j, k in d.items():
            rings[k].add(j)
            dist[i, j] = k
        khop.append(tuple(frozenset(r) for r in rings))
        ecc.append(kappa)
    dist.setflags(write=False)
    return HopStructure(tuple(khop), tuple(ecc), dist)


def is_tree(topo: NetworkTopology) -> bool:
    return len(topo.edges) == topo.m - 1


def spanning_tree(topo: NetworkTopology) -> NetworkTopology:
    """BFS spanning tree rooted at the highest-degree agent.

    Degree ties go to the lowest id and neighbors are expanded in ascending
    id order, so the result is deterministic.
    """
    if is_tree(topo):
        return topo
    root = max(topo.agents, key=lambda i: (topo.degree(i), -i))
    seen = {root}
    queue = deque([root])
    edges = []
    while queue:
        v = queue.popleft()
        for w in topo.neighbors(v):
            if w not in seen:
                seen.add(w)
                edges.append((v, w))
                queue.append(w)
    return NetworkTopology.from_edges(topo.m, edges)


def cycle_edge(topo: NetworkTopology) -> tuple[int, int] | None:
    """Smallest edge that is not in :func:`spanning_tree`, or None for trees."""
    extra = sorted(topo.edges - spanning_tree(topo).edges)
    return extra[0] if extra else None


@dataclass(frozen=True)
class CellDecomposition:
    cells: tuple          # sorted tuples of agent ids
    membership: tuple     # membership[i] = tuple of cell indices, index 0 unused

    def cell_of(self, i: int, j: int) -> tuple | None:
        """The cell ``C_{i,j}`` containing both ``i`` and ``j``."""
        shared = set(self.membership[i]) & set(self.membership[j])
        return self.cells[shared.pop()] if shared else None


def cell_decomposition(topo: NetworkTopology) -> CellDecomposition:
    """Split the graph into maximal cliques and check they form a tree of cells.

    The tree condition is checked on the bipartite agent-cell incidence
    graph, which is acyclic exactly when cells meet in single agents and no
    chain of cells closes a loop.
    """
    cells = sorted(tuple(sorted(c)) for c in nx.find_cliques(topo.to_networkx()))
    membership = [[] for _ in range(topo.m + 1)]
    for idx, c in enumerate(cells):
        if len(c) < 2:
            raise NotACellTreeError(f"cell {c} has fewer than 2 agents")
        for a in c:
            membership[a].append(idx)
    for i in topo.agents:
        if not membership[i]:
            raise NotACellTreeError(f"agent {i} belongs to no cell")
    pair_owner: dict = {}
    for idx, c in enumerate(cells):
        for pair in itertools.combinations(c, 2):
            if pair in pair_owner:
                raise NotACellTreeError(
                    f"agents {pair} share cells {cells[pair_owner[pair]]} and {c}")
            pair_owner[pair] = idx
    incidence = nx.Graph()
    incidence.add_nodes_from(("a", i) for i in topo.agents)
    for idx, c in enumerate(cells):
        incidence.add_edges_from((("c", idx), ("a", a)) for a in c)
    if not nx.is_tree(incidence):
        raise NotACellTreeError("cells do not form a tree (cell graph has a cycle)")
    return CellDecomposition(tuple(cells), tuple(tuple(ms) for ms in membership))


def is_cell_tree(topo: NetworkTopology) -> bool:
    try:
        cell_decomposition(topo)
    except NotACellTreeError:
        return False
    return True


def write_edge_list(topo: NetworkTopology, path) -> None:
    lines = [f"{a} {b}" for a, b in topo.sorted_edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path, m: int | None = None) -> NetworkTopology:
    edges = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise InvalidInputError(f"{path}:{lineno}: expected 'i j', got {line!r}")
        edges.append((int(parts[0]), int(parts[1])))
    if m is None:
        m = max(max(e) for e in edges) if edges else 1
    return NetworkTopology.from_edges(m, edges)
