"""Finite connected graphs, graph metrics, balls and boundaries.

Vertices are opaque hashable ids (ints for paths, tuples for boxes). Every
graph keeps a fixed vertex order; matrices built on a graph or on a subset of
it always follow that order, which is what makes trial outputs reproducible.
"""
from __future__ import annotations

import itertools
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import EmptyBoundary, InvalidDomain, InvalidSize, UnknownVertex

Vertex = Hashable

MAX_VERTICES = 2_000_000


class FiniteGraph:
    """Finite connected simple graph with cached BFS distances.

    Parameters
    ----------
    vertices : sequence of hashable
        Vertex ids; their order fixes matrix indexing everywhere.
    edges : iterable of (id, id)
        Undirected edges. Duplicates are merged.
    dim_hint : int
        Declared growth dimension ``d`` used in ``|B_L| <= C_d L^d``.
    """

    def __init__(self, vertices: Sequence[Vertex], edges: Iterable[tuple], dim_hint: int = 1):
        if dim_hint < 1:
            raise InvalidSize(f"dim_hint must be >= 1, got {dim_hint}")
        self.vertices = tuple(vertices)
        if not self.vertices:
            raise InvalidSize("a graph needs at least one vertex")
        self.index = {v: i for i, v in enumerate(self.vertices)}
        if len(self.index) != len(self.vertices):
            raise InvalidDomain("duplicate vertex ids")
        self.dim_hint = int(dim_hint)

        nbrs: list[set[int]] = [set() for _ in self.vertices]
        for u, v in edges:
            i, j = self._idx(u), self._idx(v)
            if i == j:
                raise InvalidDomain(f"self-loop at {u!r}")
            nbrs[i].add(j)
            nbrs[j].add(i)
        self.neighbors = tuple(tuple(sorted(s)) for s in nbrs)
        self._dist_cache: dict[int, np.ndarray] = {}
        self._dmat: np.ndarray | None = None

        if len(self.vertices) > 1:
            ncomp, _ = connected_components(self.adjacency_matrix(), directed=False)
            if ncomp != 1:
                raise InvalidDomain(f"graph has {ncomp} connected components")

    # -- basic queries -------------------------------------------------------

    def __len__(self) -> int:
        return len(self.vertices)

    def __contains__(self, v) -> bool:
        try:
            return v in self.index
        except TypeError:
            return False

    def __repr__(self) -> str:
        return f"FiniteGraph(|V|={len(self)}, |E|={self.n_edges}, d={self.dim_hint})"

    def _idx(self, v) -> int:
        try:
            return self.index[v]
        except (KeyError, TypeError):
            raise UnknownVertex(v) from None

    def idx(self, v) -> int:
        """Row index of vertex ``v``."""
        return self._idx(v)

    @property
    def n_edges(self) -> int:
        return sum(len(n) for n in self.neighbors) // 2

    def edges(self) -> list[tuple[int, int]]:
        """Edges as index pairs ``(i, j)`` with ``i < j``, sorted."""
        return [(i, j) for i, nb in enumerate(self.neighbors) for j in nb if i < j]

    def degree(self, v) -> int:
        """Coordination number n(x)."""
        return len(self.neighbors[self._idx(v)])

    def degrees(self) -> np.ndarray:
        return np.array([len(n) for n in self.neighbors], dtype=np.int64)

    def adjacency_matrix(self) -> csr_matrix:
        n = len(self.vertices)
        rows, cols = [], []
        for i, nb in enumerate(self.neighbors):
            rows.extend([i] * len(nb))
            cols.extend(nb)
        data = np.ones(len(rows), dtype=np.int8)
        return csr_matrix((data, (rows, cols)), shape=(n, n))

    # -- metric ---------------------------------------------------------------

    def distances_from(self, v) -> np.ndarray:
        """BFS distances from ``v`` to every vertex, in vertex order."""
        i = self._idx(v)
        return self._bfs(i)

    def _bfs(self, i: int) -> np.ndarray:
        if self._dmat is not None:
            return self._dmat[i]
        cached = self._dist_cache.get(i)
        if cached is not None:
            return cached
        dist = np.full(len(self.vertices), -1, dtype=np.int64)
        dist[i] = 0
        queue = deque([i])
        while queue:
            a = queue.popleft()
            da = dist[a] + 1
            for b in self.neighbors[a]:
                if dist[b] < 0:
                    dist[b] = da
                    queue.append(b)
        dist.setflags(write=False)
        self._dist_cache[i] = dist
        return dist

    def distance(self, u, v) -> int:
        return int(self.distances_from(u)[self._idx(v)])

    def distance_matrix(self) -> np.ndarray:
        """All-pairs distances (computed once, read-only)."""
        if self._dmat is None:
            if len(self.vertices) == 1:
                d = np.zeros((1, 1), dtype=np.int64)
            else:
                d = shortest_path(self.adjacency_matrix(), unweighted=True, directed=False)
                d = d.astype(np.int64)
            d.setflags(write=False)
            self._dmat = d
        return self._dmat

    # -- subgraphs ------------------------------------------------------------

    def induced(self, members: Iterable[Vertex]) -> "FiniteGraph":
        """Induced subgraph on ``members`` (ambient order kept), intrinsic metric."""
        idx = sorted({self._idx(v) for v in members})
        keep = set(idx)
        verts = [self.vertices[i] for i in idx]
        edges = [
            (self.vertices[i], self.vertices[j])
            for i in idx
            for j in self.neighbors[i]
            if j in keep and i < j
        ]
        return FiniteGraph(verts, edges, self.dim_hint)

    # -- serialization --------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "vertices": [list(v) if isinstance(v, tuple) else v for v in self.vertices],
            "edges": [[i, j] for i, j in self.edges()],
            "dim_hint": self.dim_hint,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, data: dict) -> "FiniteGraph":
        verts = [tuple(v) if isinstance(v, list) else v for v in data["vertices"]]
        edges = [(verts[i], verts[j]) for i, j in data["edges"]]
        return cls(verts, edges, int(data.get("dim_hint", 1)))


@dataclass(frozen=True)
class SubgraphView:
    """A connected vertex subset of an ambient graph.

    ``members`` is stored in ambient vertex order.
    """

    ambient: FiniteGraph
    members: tuple
    _set: frozenset = field(repr=False, compare=False, default=frozenset())

    def __init__(self, ambient: FiniteGraph, members: Iterable[Vertex]):
        uniq = {ambient.idx(v) for v in members}
        if not uniq:
            raise InvalidDomain("empty subgraph")
        ordered = tuple(ambient.vertices[i] for i in sorted(uniq))
        object.__setattr__(self, "ambient", ambient)
        object.__setattr__(self, "members", ordered)
        object.__setattr__(self, "_set", frozenset(ordered))
        if len(ordered) > 1:
            idx = np.array(sorted(uniq))
            sub = ambient.adjacency_matrix()[idx][:, idx]
            ncomp, _ = connected_components(sub, directed=False)
            if ncomp != 1:
                raise InvalidDomain(f"subgraph is disconnected ({ncomp} components)")

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, v) -> bool:
        return v in self._set

    @property
    def member_set(self) -> frozenset:
        return self._set

    @property
    def indices(self) -> np.ndarray:
        """Ambient row indices of the members, ascending."""
        return np.array([self.ambient.idx(v) for v in self.members], dtype=np.int64)

    @property
    def is_proper(self) -> bool:
        return len(self.members) < len(self.ambient)

    def graph(self) -> FiniteGraph:
        """The induced subgraph with its intrinsic metric."""
        return self.ambient.induced(self.members)


@dataclass(frozen=True)
class EdgeBoundary:
    inner: frozenset
    outer: frozenset
    edges: tuple  # (inner vertex, outer vertex) pairs, ambient order

    def __len__(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class GrowthCertificate:
    C_d: float
    probe_range: int
    dim: int


def build_interval_graph(n: int) -> FiniteGraph:
    """Path graph on ``0..n-1``."""
    if n < 1:
        raise InvalidSize(f"interval needs n >= 1, got {n}")
    return FiniteGraph(range(n), ((i, i + 1) for i in range(n - 1)), dim_hint=1)


def build_box_graph(d: int, side: int) -> FiniteGraph:
    """Box ``{0..side-1}^d`` with nearest-neighbour edges.

    For ``d == 1`` the vertices are plain ints, so the result equals
    ``build_interval_graph(side)``.
    """
    if d < 1 or side < 1:
        raise InvalidSize(f"box needs d >= 1 and side >= 1, got d={d}, side={side}")
    if side ** d > MAX_VERTICES:
        raise InvalidSize(f"box {side}^{d} exceeds {MAX_VERTICES} vertices")
    if d == 1:
        return build_interval_graph(side)
    verts = list(itertools.product(range(side), repeat=d))
    edges = []
    for v in verts:
        for k in range(d):
            if v[k] + 1 < side:
                w = v[:k] + (v[k] + 1,) + v[k + 1:]
                edges.append((v, w))
    return FiniteGraph(verts, edges, dim_hint=d)


def box_center(g: FiniteGraph, side: int):
    c = (side - 1) // 2
    return c if g.dim_hint == 1 else (c,) * g.dim_hint


def ball(g: FiniteGraph, center, r: int) -> frozenset:
    """``{y : d_g(center, y) <= r}`` in the metric of ``g``."""
    if r < 0:
        raise InvalidSize(f"radius must be >= 0, got {r}")
    dist = g.distances_from(center)
    return frozenset(g.vertices[i] for i in np.flatnonzero((dist >= 0) & (dist <= r)))


def ball_view(g: FiniteGraph, center, r: int) -> SubgraphView:
    return SubgraphView(g, ball(g, center, r))


def sphere(g: FiniteGraph, center, r: int) -> frozenset:
    dist = g.distances_from(center)
    return frozenset(g.vertices[i] for i in np.flatnonzero(dist == r))


def boundary(ambient: FiniteGraph, view: SubgraphView) -> EdgeBoundary:
    """Inner, outer and edge boundary of ``view`` relative to ``ambient``."""
    if not view.is_proper:
        raise EmptyBoundary("subgraph equals the ambient graph")
    inside = np.zeros(len(ambient), dtype=bool)
    inside[view.indices] = True
    inner, outer, pairs = set(), set(), []
    for i in view.indices:
        for j in ambient.neighbors[i]:
            if not inside[j]:
                inner.add(i)
                outer.add(j)
                pairs.append((i, j))
    pairs.sort()
    V = ambient.vertices
    return EdgeBoundary(
        inner=frozenset(V[i] for i in inner),
        outer=frozenset(V[j] for j in outer),
        edges=tuple((V[i], V[j]) for i, j in pairs),
    )


def ball_growth_constant(g: FiniteGraph, L_max: int) -> GrowthCertificate:
    """Smallest ``C_d`` with ``|B_L(x)| <= C_d L^d`` over all centres, ``1 <= L <= L_max``."""
    if L_max < 1:
        raise InvalidSize(f"L_max must be >= 1, got {L_max}")
    d = g.dim_hint
    D = g.distance_matrix()
    best = 0.0
    for L in range(1, L_max + 1):
        sizes = (D <= L).sum(axis=1)
        best = max(best, float(sizes.max()) / L ** d)
    return GrowthCertificate(C_d=best, probe_range=L_max, dim=d)


def lattice_ball_growth(d: int, L_max: int) -> GrowthCertificate:
    """Growth certificate for l1-balls of the infinite lattice Z^d.

    Uses the exact count ``sum_k 2^k C(d,k) C(L,k)`` of lattice points with
    l1 norm at most ``L``.
    """
    best = 0.0
    for L in range(1, L_max + 1):
        size = sum(2 ** k * math.comb(d, k) * math.comb(L, k) for k in range(d + 1))
        best = max(best, size / L ** d)
    return GrowthCertificate(C_d=best, probe_range=L_max, dim=d)
