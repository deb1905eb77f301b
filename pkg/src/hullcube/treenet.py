"""Minimal networks, clusters, stable trees and stable decompositions.

A stable tree is stored as an abstract weighted tree whose nodes are tagged
tuples ``('c', cluster, v)`` (cluster pieces) or ``('e', component, v)``
(interior of edge pieces), with ``phi`` sending a node to its host vertex.
Edge pieces are glued to cluster pieces at shared ``'c'`` nodes.
"""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Hashable, Iterable, Sequence

import networkx as nx
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .errors import ArgumentError, CapacityError, CheckFailure, ConfigurationError, SetupError
from .space import MetricGraph

log = logging.getLogger(__name__)

MAX_TERMINALS = 10
SETUP_FORMAT = "hullcube.setup/1"
DECOMP_FORMAT = "hullcube.decomposition/1"

Node = Hashable
Edge = tuple  # (a, b) with a < b


def _ekey(a: Node, b: Node) -> Edge:
    return (a, b) if a < b else (b, a)


# ---------------------------------------------------------------------------
# minimal networks

@dataclass(frozen=True)
class SteinerNetwork:
    graph: MetricGraph
    groups: tuple[frozenset[int], ...]
    edges: frozenset[tuple[int, int]]
    weight: int

    @property
    def vertices(self) -> frozenset[int]:
        vs = {v for e in self.edges for v in e}
        if not vs and len(self.groups) == 1 and len(self.groups[0]) == 1:
            vs = set(self.groups[0])
        for g in self.groups:
            if len(g) == 1:
                vs |= g
        return frozenset(vs)

    def adjacency(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = defaultdict(list)
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def components(self) -> list[frozenset[int]]:
        g = nx.Graph()
        g.add_edges_from(self.edges)
        return sorted((frozenset(c) for c in nx.connected_components(g)), key=min)

    def is_forest(self) -> bool:
        g = nx.Graph()
        g.add_edges_from(self.edges)
        return nx.is_forest(g) if g.number_of_nodes() else True

    def quotient_connected(self) -> bool:
        g = nx.Graph()
        label = {}
        for i, grp in enumerate(self.groups):
            for v in grp:
                label[v] = ("g", i)
            g.add_node(("g", i))
        for u, v in self.edges:
            g.add_edge(label.get(u, u), label.get(v, v))
        return nx.is_connected(g)


class _Quotient:
    """Host graph with each group collapsed to a supernode (ids 0..k-1)."""

    def __init__(self, graph: MetricGraph, groups: Sequence[frozenset[int]]) -> None:
        k = len(groups)
        qid = np.full(graph.n, -1, dtype=np.int64)
        for i, g in enumerate(groups):
            for v in g:
                qid[v] = i
        nxt = k
        for v in range(graph.n):
            if qid[v] < 0:
                qid[v] = nxt
                nxt += 1
        self.n = nxt
        self.qid = qid
        best: dict[tuple[int, int], tuple[int, tuple[int, int]]] = {}
        for u, v, w in graph.edges:
            a, b = int(qid[u]), int(qid[v])
            if a == b:
                continue
            key = (min(a, b), max(a, b))
            cand = (w, (u, v))
            if key not in best or cand < best[key]:
                best[key] = cand
        self.rep = {key: hv for key, (w, hv) in best.items()}
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n)]
        for (a, b), (w, _) in best.items():
            adj[a].append((b, w))
            adj[b].append((a, w))
        self.adj = [sorted(x) for x in adj]
        if best:
            keys = list(best)
            rows = [a for a, b in keys] + [b for a, b in keys]
            cols = [b for a, b in keys] + [a for a, b in keys]
            vals = [best[kk][0] for kk in keys] * 2
            mat = csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))
        else:
            mat = csr_matrix((self.n, self.n))
        self.dist = shortest_path(mat, method="D", directed=False)

    def geodesic(self, u: int, v: int) -> list[int]:
        path = [u]
        col = self.dist[:, v]
        cur = u
        while cur != v:
            for x, w in self.adj[cur]:
                if w + col[x] == col[cur]:
                    cur = x
                    break
            path.append(cur)
        return path


def minimal_network(graph: MetricGraph, groups: Sequence[Iterable[int]]) -> SteinerNetwork:
    """Exact minimum forest whose quotient by the groups is connected.

    Dreyfus-Wagner over terminal subsets on the supernode quotient, then lifted.
    Ties are broken by least index at every argmin, so the result is deterministic.
    """
    gs = [frozenset(int(v) for v in g) for g in groups]
    if not gs or any(not g for g in gs):
        raise ArgumentError("groups must be nonempty")
    union: set[int] = set()
    for g in gs:
        if union & g:
            raise ArgumentError("groups overlap", sorted(union & g))
        union |= g
    k = len(gs)
    if k > MAX_TERMINALS:
        raise CapacityError(f"at most {MAX_TERMINALS} quotient terminals", k)
    if k == 1:
        return SteinerNetwork(graph, tuple(gs), frozenset(), 0)
    if k == 2:
        # two groups: a least closest pair joined by its tie-broken geodesic
        a, b = sorted(gs[0]), sorted(gs[1])
        sub = graph.dist[np.ix_(a, b)]
        i, j = np.argwhere(sub == sub.min())[0]
        p = graph.geodesic(a[i], b[j])
        host = frozenset((min(x, y), max(x, y)) for x, y in zip(p, p[1:]))
        return SteinerNetwork(graph, tuple(gs), host, int(sub.min()))
    q = _Quotient(graph, gs)
    D = q.dist
    full = (1 << k) - 1
    dp = np.full((full + 1, q.n), np.inf)
    move = np.zeros((full + 1, q.n), dtype=np.int64)
    split = np.zeros((full + 1, q.n), dtype=np.int64)
    for t in range(k):
        dp[1 << t] = D[t]
        move[1 << t] = t
    for S in range(1, full + 1):
        if S & (S - 1) == 0:
            continue
        low = S & -S
        rest = S ^ low
        base = np.full(q.n, np.inf)
        choice = np.zeros(q.n, dtype=np.int64)
        sub = rest
        # proper submasks S1 of S containing the lowest bit
        while True:
            S1 = sub | low
            if S1 != S:
                val = dp[S1] + dp[S ^ S1]
                better = val < base
                base[better] = val[better]
                choice[better] = S1
            if sub == 0:
                break
            sub = (sub - 1) & rest
        tot = base[:, None] + D
        arg = np.argmin(tot, axis=0)
        dp[S] = tot[arg, np.arange(q.n)]
        move[S] = arg
        split[S] = choice
    qedges: set[tuple[int, int]] = set()

    def build(S: int, v: int) -> None:
        u = int(move[S, v])
        p = q.geodesic(u, v)
        for a, b in zip(p, p[1:]):
            qedges.add((min(a, b), max(a, b)))
        if S & (S - 1) == 0:
            return
        S1 = int(split[S, u])
        build(S1, u)
        build(S ^ S1, u)

    build(full, 0)
    host = frozenset(tuple(sorted(q.rep[e])) for e in qedges)
    weight = sum(graph.weight(u, v) for u, v in host)
    return SteinerNetwork(graph, tuple(gs), host, int(weight))


def steiner_tree(graph: MetricGraph, F: Iterable[int]) -> SteinerNetwork:
    """The network spanning the distinct points of F."""
    pts = sorted(set(int(f) for f in F))
    return minimal_network(graph, [{f} for f in pts])


def brute_force_steiner_weight(graph: MetricGraph, terminals: Iterable[int]) -> int:
    """Minimum over Steiner vertex subsets of the MST weight on the metric closure."""
    from itertools import combinations

    term = sorted(set(terminals))
    others = [v for v in range(graph.n) if v not in term]
    best = None
    for r in range(0, min(len(term) - 2, len(others)) + 1 if len(term) > 1 else 1):
        for extra in combinations(others, r):
            pts = term + list(extra)
            sub = graph.dist[np.ix_(pts, pts)]
            g = nx.Graph()
            for i in range(len(pts)):
                for j in range(i + 1, len(pts)):
                    g.add_edge(i, j, weight=int(sub[i, j]))
            w = 0 if len(pts) < 2 else sum(d["weight"] for _, _, d in nx.minimum_spanning_edges(g, data=True))
            best = w if best is None else min(best, w)
    return int(best or 0)


def _prune_to(adj: dict[int, list[int]], keep: set) -> set:
    """Smallest subtree of a forest containing ``keep`` (within one tree)."""
    alive = set(adj) | set(keep)
    deg = {v: len([u for u in adj.get(v, []) if u in alive]) for v in alive}
    stack = [v for v in alive if deg[v] <= 1 and v not in keep]
    while stack:
        v = stack.pop()
        if v not in alive:
            continue
        alive.discard(v)
        for u in adj.get(v, []):
            if u in alive:
                deg[u] -= 1
                if deg[u] <= 1 and u not in keep:
                    stack.append(u)
    return alive


def shadow(lambdaF: SteinerNetwork, A: Iterable[int], eps: float) -> set[int]:
    """Convex hull inside the network of its vertices within eps of A (closed)."""
    A = list(A)
    verts = sorted(lambdaF.vertices)
    if not A or not verts:
        return set()
    dA = lambdaF.graph.distance_to_set(A)
    near = {v for v in verts if dA[v] <= eps}
    if not near:
        return set()
    return _prune_to(lambdaF.adjacency(), near)


# ---------------------------------------------------------------------------
# setups and clusters

@dataclass(frozen=True)
class EpsilonSetup:
    graph: MetricGraph
    F: tuple[int, ...]
    Y: tuple[int, ...]
    eps: Fraction
    labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.F:
            raise SetupError("F must be nonempty")
        if self.eps <= 0:
            raise SetupError("eps must be positive", str(self.eps))
        lam = steiner_tree(self.graph, self.F)
        dl = self.graph.distance_to_set(lam.vertices)
        for y in self.Y:
            if not dl[y] < Fraction(self.eps) / 2:
                raise SetupError("cluster point too far from the network of F", {"y": y, "distance": int(dl[y])})
        object.__setattr__(self, "_lam", lam)

    @classmethod
    def build(cls, graph: MetricGraph, F: Iterable[int], Y: Iterable[int] = (), eps: float | Fraction = 1, labels: Iterable[str] = ()) -> "EpsilonSetup":
        return cls(graph, tuple(int(f) for f in F), tuple(int(y) for y in Y), Fraction(eps).limit_denominator(10**6), tuple(labels))

    @property
    def network(self) -> SteinerNetwork:
        return self._lam  # type: ignore[attr-defined]

    def with_point(self, w: int) -> "EpsilonSetup":
        return EpsilonSetup(self.graph, self.F, self.Y + (int(w),), self.eps)

    def to_json(self) -> dict:
        return {"format": SETUP_FORMAT, "F": list(self.F), "Y": list(self.Y), "eps": str(self.eps), "labels": list(self.labels)}

    @classmethod
    def from_json(cls, graph: MetricGraph, doc: dict) -> "EpsilonSetup":
        try:
            return cls.build(graph, doc["F"], doc.get("Y", []), Fraction(str(doc.get("eps", 1))), doc.get("labels", []))
        except (KeyError, TypeError, ValueError) as exc:
            from .errors import InstanceFormatError

            raise InstanceFormatError(f"bad setup document: {exc}", doc) from exc


def default_constants(eps: float | Fraction) -> tuple[Fraction, Fraction]:
    """(eps', E) = (eps + 1, 8 eps')."""
    ep = Fraction(eps) + 1
    return ep, 8 * ep


def _gate(eps: Fraction, eps_p: Fraction, E: Fraction) -> None:
    if not 2 * eps_p > eps + eps_p:
        raise ConfigurationError("need 2 eps' > eps + eps'", {"eps": str(eps), "eps_p": str(eps_p)})
    if not E >= 8 * eps_p:
        raise ConfigurationError("need E >= 8 eps'", {"E": str(E), "eps_p": str(eps_p)})


def _closest_paths(graph: MetricGraph, A: frozenset[int], B: frozenset[int], cache: dict) -> list[list[int]]:
    key = (A, B)
    if key not in cache:
        cache[key] = graph.path_vertices_between(A, B)
    return cache[key]


def separation_detail(graph: MetricGraph, C1: Iterable[int], C2: Iterable[int], C3: Iterable[int], eps_p: float) -> tuple[bool, bool]:
    """(some, every) tie-broken closest-pair geodesic from C1 to C3 meets N_{2eps'}(C2)."""
    A, B = frozenset(C1), frozenset(C3)
    d2 = graph.distance_to_set(C2)
    hits = [bool((d2[p] <= 2 * eps_p).any()) for p in graph.path_vertices_between(A, B)]
    return any(hits), all(hits)


def separates(graph: MetricGraph, C1: Iterable[int], C2: Iterable[int], C3: Iterable[int], eps_p: float) -> bool:
    some, every = separation_detail(graph, C1, C2, C3, eps_p)
    if some != every:
        log.debug("separation differs between existential and universal readings")
    return some


@dataclass
class ClusterGraph:
    clusters: list[frozenset[int]]
    adjacency: set[tuple[int, int]]
    bivalent: list[bool]
    eps: Fraction
    eps_p: Fraction
    E: Fraction
    has_F: list[bool]
    diagnostics: dict = field(default_factory=dict)

    def neighbors(self, i: int) -> list[int]:
        return sorted({b for a, b in self.adjacency if a == i} | {a for a, b in self.adjacency if b == i})

    def degree(self, i: int) -> int:
        return len(self.neighbors(i))

    def cluster_of(self, v: int) -> int:
        for i, c in enumerate(self.clusters):
            if v in c:
                return i
        raise ArgumentError("vertex not in any cluster", v)

    def nx_graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(len(self.clusters)))
        g.add_edges_from(self.adjacency)
        return g


def cluster_graph(setup: EpsilonSetup, eps_p: float | Fraction | None = None, E: float | Fraction | None = None) -> ClusterGraph:
    """Clusters of F and Y with the non-separation adjacency."""
    eps = Fraction(setup.eps)
    dp, dE = default_constants(eps)
    eps_p = dp if eps_p is None else Fraction(eps_p)
    E = dE if E is None else Fraction(E)
    _gate(eps, eps_p, E)
    g = setup.graph
    pts = sorted(set(setup.F) | set(setup.Y))
    idx = np.array(pts)
    close = g.dist[np.ix_(idx, idx)] <= E
    pg = nx.Graph()
    pg.add_nodes_from(range(len(pts)))
    ii, jj = np.nonzero(np.triu(close, 1))
    pg.add_edges_from(zip(ii.tolist(), jj.tolist()))
    clusters = sorted((frozenset(pts[i] for i in comp) for comp in nx.connected_components(pg)), key=min)
    m = len(clusters)
    rows = np.stack([g.distance_to_set(c) for c in clusters]) if m else np.zeros((0, g.n))
    reach = float(2 * eps_p)
    near = rows <= reach
    adjacency: set[tuple[int, int]] = set()
    universal_diff = []
    cache: dict = {}
    M = np.stack([rows[:, sorted(c)].min(axis=1) for c in clusters], axis=1) if m else np.zeros((0, 0))
    for a in range(m):
        for b in range(a + 1, m):
            # a cluster can only meet a closest-pair geodesic if it is nearly between a and b
            cand = np.flatnonzero(M[a] + M[:, b] <= M[a, b] + 2 * reach)
            cand = cand[(cand != a) & (cand != b)]
            if cand.size == 0:
                adjacency.add((a, b))
                continue
            paths = _closest_paths(g, clusters[a], clusters[b], cache)
            sub = near[cand]
            hit = np.zeros((cand.size, len(paths)), dtype=bool)
            for k, p in enumerate(paths):
                hit[:, k] = sub[:, p].any(axis=1)
            some = hit.any(axis=1)
            every = hit.all(axis=1)
            if not some.any():
                adjacency.add((a, b))
            if (some != every).any():
                universal_diff.append((a, b))
    has_F = [bool(c & set(setup.F)) for c in clusters]
    cg = ClusterGraph(clusters, adjacency, [False] * m, eps, eps_p, E, has_F)
    cg.bivalent = [cg.degree(i) == 2 and not has_F[i] for i in range(m)]
    ng = cg.nx_graph()
    cg.diagnostics = {
        "connected": bool(m == 0 or nx.is_connected(ng)),
        "clusters": m,
        "non_bivalent": int(sum(not b for b in cg.bivalent)),
        "max_degree": int(max((d for _, d in ng.degree()), default=0)),
        "universal_reading_differs": universal_diff,
    }
    return cg


# ---------------------------------------------------------------------------
# abstract pieced trees

@dataclass(frozen=True)
class Piece:
    pid: int
    kind: str  # 'e' (edge part) or 'c' (cluster part)
    nodes: frozenset
    edges: frozenset
    cluster: int | None = None


@dataclass
class StableTree:
    """Abstract tree with realization ``phi`` and a partition into pieces."""

    host: MetricGraph
    graph: nx.Graph
    phi: dict
    pieces: list[Piece]
    marked: dict  # point of F -> node
    carriers: dict  # cluster index -> piece id
    point_cluster: dict  # point of F or Y -> cluster index
    clusters: list[frozenset[int]]
    cluster_graph: ClusterGraph | None = None
    setup: EpsilonSetup | None = None
    info: dict = field(default_factory=dict)

    # -- indexing helpers
    def __post_init__(self) -> None:
        self._index()

    def _index(self) -> None:
        self.node_list = sorted(self.graph.nodes)
        self.node_index = {n: i for i, n in enumerate(self.node_list)}
        self.edge_piece: dict = {}
        self.node_pieces: dict = defaultdict(list)
        for p in self.pieces:
            for e in p.edges:
                self.edge_piece[e] = p.pid
            for n in p.nodes:
                self.node_pieces[n].append(p.pid)
        self._dist: np.ndarray | None = None

    def piece(self, pid: int) -> Piece:
        return self.pieces[pid]

    def c_nodes(self) -> set:
        return {n for p in self.pieces if p.kind == "c" for n in p.nodes}

    def weight(self, a: Node, b: Node) -> int:
        return int(self.graph[a][b]["weight"])

    def dist_matrix(self) -> np.ndarray:
        if self._dist is None:
            n = len(self.node_list)
            if n == 0:
                self._dist = np.zeros((0, 0))
            else:
                rows, cols, vals = [], [], []
                for a, b, d in self.graph.edges(data=True):
                    i, j = self.node_index[a], self.node_index[b]
                    rows += [i, j]
                    cols += [j, i]
                    vals += [d["weight"]] * 2
                mat = csr_matrix((vals, (rows, cols)), shape=(n, n))
                self._dist = np.rint(shortest_path(mat, method="D", directed=False)).astype(np.int64) if vals else np.zeros((n, n), dtype=np.int64)
        return self._dist

    def tdist(self, a: Node, b: Node) -> int:
        return int(self.dist_matrix()[self.node_index[a], self.node_index[b]])

    def is_tree(self) -> bool:
        return self.graph.number_of_nodes() > 0 and nx.is_tree(self.graph)

    def hull_nodes(self, marks: Iterable[Node]) -> set:
        keep = set(marks)
        if not keep:
            return set()
        adj = {n: list(self.graph.neighbors(n)) for n in self.graph.nodes}
        return _prune_to(adj, keep)

    def restrict(self, nodes: set) -> "StableTree":
        """Subtree induced on ``nodes`` with pieces intersected."""
        sub = nx.Graph(self.graph.subgraph(nodes))
        pieces: list[Piece] = []
        remap = {}
        for p in self.pieces:
            pn = p.nodes & nodes
            pe = frozenset(e for e in p.edges if e[0] in nodes and e[1] in nodes)
            if not pn:
                continue
            remap[p.pid] = len(pieces)
            pieces.append(Piece(len(pieces), p.kind, pn, pe, p.cluster))
        carriers = {c: remap[pid] for c, pid in self.carriers.items() if pid in remap}
        marked = {f: n for f, n in self.marked.items() if n in nodes}
        return StableTree(self.host, sub, {n: self.phi[n] for n in sub.nodes}, pieces, marked, carriers,
                          dict(self.point_cluster), self.clusters, self.cluster_graph, self.setup, dict(self.info))

    def with_pieces(self, pieces: list[Piece], carriers: dict) -> "StableTree":
        return StableTree(self.host, self.graph, self.phi, pieces, dict(self.marked), carriers,
                          dict(self.point_cluster), self.clusters, self.cluster_graph, self.setup, dict(self.info))

    def piece_signature(self, p: Piece) -> tuple:
        he = frozenset(tuple(sorted((self.phi[a], self.phi[b]))) for a, b in p.edges)
        hn = frozenset(self.phi[n] for n in p.nodes)
        return (p.kind, he, hn)

    def quality(self) -> dict:
        """Distortion of phi, Hausdorff gap to the network of F, branching, D1."""
        D = self.dist_matrix()
        hv = np.array([self.phi[n] for n in self.node_list])
        H = self.host.dist[np.ix_(hv, hv)]
        report = {
            "nodes": len(self.node_list),
            "is_tree": self.is_tree(),
            "max_contraction": int((D - H).max()) if len(hv) else 0,
            "max_expansion": int((H - D).max()) if len(hv) else 0,
            "branching": int(max((d for _, d in self.graph.degree()), default=0)),
        }
        if self.setup is not None:
            lam = sorted(self.setup.network.vertices)
            img = sorted(set(hv.tolist()))
            sub = self.host.dist[np.ix_(lam, img)]
            report["hausdorff_to_network"] = int(max(sub.min(axis=1).max(), sub.min(axis=0).max()))
        d1 = 0
        for ci, pid in self.carriers.items():
            pts = [self.phi[n] for n in self.pieces[pid].nodes]
            if ci < len(self.clusters) and pts:
                d1 = max(d1, int(self.host.distance_to_set(self.clusters[ci])[pts].max()))
        report["D1"] = d1
        return report

    def to_dot(self, stable: Iterable[Sequence[Node]] = ()) -> str:
        stable_edges = set()
        for path in stable:
            for a, b in zip(path, path[1:]):
                stable_edges.add(_ekey(a, b))
        lines = ["graph T {"]
        for n in self.node_list:
            shape = "box" if n[0] == "c" else "circle"
            lines.append(f'  "{_nid(n)}" [label="{self.phi[n]}", shape={shape}];')
        for a, b, d in sorted(self.graph.edges(data=True), key=lambda t: _ekey(t[0], t[1])):
            color = "blue" if _ekey(a, b) in stable_edges else "black"
            lines.append(f'  "{_nid(a)}" -- "{_nid(b)}" [label="{d["weight"]}", color={color}];')
        lines.append("}")
        return "\n".join(lines)


def _nid(n: Node) -> str:
    return "_".join(str(t) for t in n) if isinstance(n, tuple) else str(n)


def _pieces_from_c(graph: nx.Graph, c_groups: list[tuple[int | None, set, set]]) -> tuple[list[Piece], dict]:
    """Cluster pieces as given, edge pieces = components of the remaining edges."""
    pieces: list[Piece] = []
    carriers: dict = {}
    c_edges = set()
    c_nodes = set()
    for cl, nodes, edges in c_groups:
        pid = len(pieces)
        pieces.append(Piece(pid, "c", frozenset(nodes), frozenset(edges), cl))
        if cl is not None:
            carriers[cl] = pid
        c_edges |= edges
        c_nodes |= nodes
    rest = nx.Graph()
    for a, b in graph.edges:
        e = _ekey(a, b)
        if e not in c_edges:
            rest.add_edge(a, b)
    # split at cluster nodes so each edge piece is a component of T_e
    cut = nx.Graph()
    for a, b in rest.edges:
        cut.add_edge(("n", a) if a not in c_nodes else ("n", a, "x", b), ("n", b) if b not in c_nodes else ("n", b, "x", a))
    groups = defaultdict(set)
    for comp in nx.connected_components(cut):
        key = min(comp)
        groups[key] = comp
    for key in sorted(groups):
        comp = groups[key]
        nodes = {t[1] for t in comp}
        edges = {_ekey(a, b) for a, b in rest.edges if a in nodes and b in nodes}
        # keep only edges actually inside this split component
        edges = {e for e in edges if _same_component(cut, comp, e, c_nodes)}
        if edges:
            pieces.append(Piece(len(pieces), "e", frozenset(nodes), frozenset(edges), None))
    return pieces, carriers


def _same_component(cut: nx.Graph, comp: set, e: Edge, c_nodes: set) -> bool:
    a, b = e
    ka = ("n", a) if a not in c_nodes else ("n", a, "x", b)
    kb = ("n", b) if b not in c_nodes else ("n", b, "x", a)
    return ka in comp and kb in comp


# ---------------------------------------------------------------------------
# stable trees

def stable_tree(setup: EpsilonSetup, eps_p: float | Fraction | None = None, E: float | Fraction | None = None,
                cg: ClusterGraph | None = None) -> StableTree:
    """Edge forest over closures of components of the cluster graph minus bivalent clusters, glued to cluster trees."""
    if cg is None:
        cg = cluster_graph(setup, eps_p, E)
    host = setup.graph
    m = len(cg.clusters)
    ng = cg.nx_graph()
    biv = {i for i in range(m) if cg.bivalent[i]}
    # closures of components of the graph with bivalent vertices removed
    closures: list[list[int]] = []
    rest = ng.subgraph([i for i in range(m) if i not in biv])
    for comp in sorted(nx.connected_components(rest), key=min):
        vs = set(comp)
        for i in comp:
            vs |= {j for j in ng.neighbors(i) if j in biv}
        closures.append(sorted(vs))
    for a, b in sorted(cg.adjacency):
        if a in biv and b in biv:
            closures.append([a, b])
    tree = nx.Graph()
    phi: dict = {}
    e_comp_edges: list[set] = []
    touched: dict[int, set[int]] = defaultdict(set)  # cluster -> host points on T_e (own closures)
    te_host: set[int] = set()
    for V in closures:
        if len(V) < 2:
            continue
        if len(V) > MAX_TERMINALS:
            raise CapacityError("closure has too many clusters for the exact network", len(V))
        net = minimal_network(host, [cg.clusters[i] for i in V])
        owner = {v: i for i in V for v in cg.clusters[i]}
        for comp in net.components():
            ei = len(e_comp_edges)
            cedges = set()
            for u, v in net.edges:
                if u in comp:
                    a = ("c", owner[u], u) if u in owner else ("e", ei, u)
                    b = ("c", owner[v], v) if v in owner else ("e", ei, v)
                    tree.add_edge(a, b, weight=host.weight(u, v))
                    phi[a], phi[b] = u, v
                    cedges.add(_ekey(a, b))
                    te_host.update((u, v))
                    for x, nd in ((u, a), (v, b)):
                        if nd[0] == "c":
                            touched[nd[1]].add(x)
            e_comp_edges.append(cedges)
    Fset = set(setup.F)
    c_groups = []
    for ci, C in enumerate(cg.clusters):
        r = (C & te_host) | (C & Fset)
        r |= touched[ci]
        if not r:
            r = {min(C)}
        if len(r) == 1:
            (v,) = r
            node = ("c", ci, v)
            tree.add_node(node)
            phi[node] = v
            c_groups.append((ci, {node}, set()))
            continue
        net = steiner_tree(host, r)
        nodes = {("c", ci, v) for v in net.vertices}
        edges = set()
        for u, v in net.edges:
            a, b = ("c", ci, u), ("c", ci, v)
            tree.add_edge(a, b, weight=host.weight(u, v))
            edges.add(_ekey(a, b))
        for nd in nodes:
            tree.add_node(nd)
            phi[nd] = nd[2]
        c_groups.append((ci, nodes, edges))
    pieces, carriers = _pieces_from_c(tree, c_groups)
    point_cluster = {}
    for ci, C in enumerate(cg.clusters):
        for v in C:
            point_cluster[v] = ci
    marked = {f: ("c", point_cluster[f], f) for f in setup.F}
    for f, nd in marked.items():
        if nd not in tree:
            raise CheckFailure("marked point missing from its cluster tree", f)
    st = StableTree(host, tree, phi, pieces, marked, carriers, point_cluster, list(cg.clusters), cg, setup)
    st.info["closures"] = closures
    st.info["is_tree"] = st.is_tree()
    if not st.info["is_tree"]:
        log.warning("stable tree is not a tree (%d nodes)", tree.number_of_nodes())
    return st


# ---------------------------------------------------------------------------
# stable decompositions

@dataclass(frozen=True)
class StablePair:
    left: tuple  # node path in T, open at both ends
    right: tuple  # node path in T', i(left[k]) = right[k]

    def __len__(self) -> int:
        return len(self.left)


@dataclass
class ClauseResult:
    name: str
    passed: bool
    detail: object = None


@dataclass
class DecompositionReport:
    clauses: list[ClauseResult]
    L1: float
    L2: float
    measured_L1: int
    measured_L2: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def failed(self) -> list[str]:
        return [c.name for c in self.clauses if not c.passed]

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "L1": self.L1,
            "L2": self.L2,
            "measured_L1": self.measured_L1,
            "measured_L2": self.measured_L2,
            "clauses": [{"name": c.name, "passed": c.passed, "detail": _jsonable(c.detail)} for c in self.clauses],
        }


def _jsonable(x: object) -> object:
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, set, frozenset)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, Fraction):
        return str(x)
    return x


@dataclass
class StableDecomposition:
    T: StableTree
    T2: StableTree  # target tree (full)
    H: StableTree  # hull of F in the target, where the decomposition lives
    pairs: list[StablePair]
    beta: dict  # left complement index -> right complement index
    diff_left: set
    diff_right: set
    F: tuple
    Y0: tuple
    report: DecompositionReport | None = None
    extras: dict = field(default_factory=dict)

    def complements(self) -> tuple[list[frozenset], list[frozenset]]:
        return (_complement_components(self.T, [p.left for p in self.pairs]),
                _complement_components(self.H, [p.right for p in self.pairs]))

    def to_json(self) -> dict:
        return {
            "format": DECOMP_FORMAT,
            "pairs": [{"left": [self.T.phi[n] for n in p.left], "right": [self.H.phi[n] for n in p.right]} for p in self.pairs],
            "diff_left": sorted(self.diff_left),
            "diff_right": sorted(self.diff_right),
            "report": self.report.to_json() if self.report else None,
        }


def _complement_components(T: StableTree, intervals: Sequence[tuple]) -> list[frozenset]:
    interior = {n for path in intervals for n in path[1:-1]}
    iedges = {_ekey(a, b) for path in intervals for a, b in zip(path, path[1:])}
    g = nx.Graph()
    g.add_nodes_from(n for n in T.graph.nodes if n not in interior)
    for a, b in T.graph.edges:
        if a in interior or b in interior or _ekey(a, b) in iedges:
            continue
        g.add_edge(a, b)
    return sorted((frozenset(c) for c in nx.connected_components(g)), key=min)


def _edge_unstable_components(T: StableTree, intervals: Sequence[tuple]) -> list[frozenset]:
    """Components of T_e minus the stable intervals, ignoring bare gluing points."""
    interior = {n for path in intervals for n in path[1:-1]}
    iedges = {_ekey(a, b) for path in intervals for a, b in zip(path, path[1:])}
    cn = T.c_nodes()
    g = nx.Graph()
    for p in T.pieces:
        if p.kind != "e":
            continue
        for n in p.nodes:
            if n not in interior:
                g.add_node(n)
        for a, b in p.edges:
            if a in interior or b in interior or (a, b) in iedges:
                continue
            g.add_edge(a, b)
    out = []
    for comp in nx.connected_components(g):
        sub = g.subgraph(comp)
        if sub.number_of_edges() == 0 and all(n in cn for n in comp):
            continue
        out.append(frozenset(comp))
    return sorted(out, key=min)


def _diameter(T: StableTree, nodes: Iterable[Node]) -> int:
    idx = [T.node_index[n] for n in nodes]
    if len(idx) <= 1:
        return 0
    D = T.dist_matrix()
    return int(D[np.ix_(idx, idx)].max())


def _piece_graph_components(T: StableTree, excluded: set) -> list[frozenset[int]]:
    g = nx.Graph()
    keep = [p.pid for p in T.pieces if p.pid not in excluded]
    g.add_nodes_from(keep)
    for n, pids in T.node_pieces.items():
        live = [p for p in pids if p not in excluded]
        for a, b in zip(live, live[1:]):
            g.add_edge(a, b)
    return sorted((frozenset(c) for c in nx.connected_components(g)), key=min)


def _comp_signature(T: StableTree, comp: frozenset[int]) -> frozenset:
    return frozenset(T.piece_signature(T.pieces[p]) for p in comp)


def check_decomposition(dec: StableDecomposition, L1: float | None = None, L2: float | None = None) -> DecompositionReport:
    """Mechanical check of the seven clauses; L1, L2 default to the measured values."""
    T, H = dec.T, dec.H
    clauses: list[ClauseResult] = []
    lefts = [p.left for p in dec.pairs]
    rights = [p.right for p in dec.pairs]

    # structure: intervals are open paths inside edge pieces avoiding branch and gluing points
    def interval_ok(tree: StableTree, path: tuple) -> str | None:
        if len(path) < 2:
            return "interval shorter than one edge"
        cn = tree.c_nodes()
        pid = None
        for a, b in zip(path, path[1:]):
            if not tree.graph.has_edge(a, b):
                return f"not a path at {a}-{b}"
            ep = tree.edge_piece.get(_ekey(a, b))
            if ep is None or tree.pieces[ep].kind != "e":
                return "edge outside the edge forest"
            if pid is None:
                pid = ep
            elif ep != pid:
                return "interval crosses edge pieces"
        for k, n in enumerate(path[1:-1], start=1):
            if n in cn or tree.graph.degree(n) != 2:
                return f"interior node {n} is a gluing or branch point"
        if len(set(path)) != len(path):
            return "interval repeats a node"
        return None

    bad = []
    for side, tree, ints in (("left", T, lefts), ("right", H, rights)):
        used: set = set()
        for k, path in enumerate(ints):
            why = interval_ok(tree, path)
            if why:
                bad.append((side, k, why))
            inner = set(path[1:-1])
            edges = {_ekey(a, b) for a, b in zip(path, path[1:])}
            if inner & used or any(e in used for e in edges):
                bad.append((side, k, "intervals overlap"))
            used |= inner | edges
    clauses.append(ClauseResult("1-alpha-bijection", not bad, bad[:5]))

    iso_bad = []
    for k, p in enumerate(dec.pairs):
        if len(p.left) != len(p.right):
            iso_bad.append((k, "length"))
            continue
        for (a, b), (c, d) in zip(zip(p.left, p.left[1:]), zip(p.right, p.right[1:])):
            if T.graph.has_edge(a, b) and H.graph.has_edge(c, d) and T.weight(a, b) != H.weight(c, d):
                iso_bad.append((k, "weights"))
                break
    clauses.append(ClauseResult("2-pair-isometry", not iso_bad, iso_bad[:5]))

    nonid = []
    dev = 0
    for k, p in enumerate(dec.pairs):
        if len(p.left) != len(p.right):
            continue
        hl = [T.phi[n] for n in p.left]
        hr = [H.phi[n] for n in p.right]
        if hl != hr:
            d = int(max(T.host.dist[a, b] for a, b in zip(hl, hr)))
            nonid.append((k, d))
            dev = max(dev, d)

    uleft = _edge_unstable_components(T, lefts)
    uright = _edge_unstable_components(H, rights)
    udiam = max([_diameter(T, c) for c in uleft] + [_diameter(H, c) for c in uright] + [0])
    measured_L1 = max(len(nonid), len(uleft), len(uright), len(dec.diff_left), len(dec.diff_right))
    measured_L2 = max(dev, udiam)
    L1v = measured_L1 if L1 is None else L1
    L2v = measured_L2 if L2 is None else L2
    clauses.append(ClauseResult("3-identical-pairs", len(nonid) <= L1v, {"non_identical": len(nonid)}))
    clauses.append(ClauseResult("4-near-pairs", dev <= L2v, {"max_deviation": dev}))
    clauses.append(ClauseResult(
        "5-unstable-edge-parts",
        len(uleft) <= L1v and len(uright) <= L1v and udiam <= L2v,
        {"left": len(uleft), "right": len(uright), "max_diameter": udiam},
    ))

    # clause 6: complements of the difference forests have identical components
    cl = _piece_graph_components(T, dec.diff_left)
    cr = _piece_graph_components(H, dec.diff_right)
    sl = Counter(_comp_signature(T, c) for c in cl)
    sr = Counter(_comp_signature(H, c) for c in cr)
    ok6 = sl == sr and len(dec.diff_left) <= L1v and len(dec.diff_right) <= L1v
    clauses.append(ClauseResult("6-difference-forests", ok6, {"diff_left": len(dec.diff_left), "diff_right": len(dec.diff_right), "components_match": sl == sr}))

    # clause 7: beta
    compL = _complement_components(T, lefts)
    compR = _complement_components(H, rights)
    whereL = {n: i for i, c in enumerate(compL) for n in c}
    whereR = {n: i for i, c in enumerate(compR) for n in c}
    beta = dec.beta
    bij = (sorted(beta) == list(range(len(compL))) and sorted(beta.values()) == list(range(len(compR))))
    c7a = []
    for y in tuple(dec.Y0) + tuple(dec.F):
        if y not in T.point_cluster or y not in H.point_cluster:
            continue
        pl = T.carriers.get(T.point_cluster[y])
        pr = H.carriers.get(H.point_cluster[y])
        if pl is None or pr is None:
            continue
        nl = next(iter(T.pieces[pl].nodes))
        nr = next(iter(H.pieces[pr].nodes))
        if nl not in whereL or nr not in whereR or beta.get(whereL[nl]) != whereR[nr]:
            c7a.append(y)
    c7b = []
    for k, p in enumerate(dec.pairs):
        for end in (0, -1):
            x, ix = p.left[end], p.right[end]
            if x not in whereL or ix not in whereR or beta.get(whereL[x]) != whereR[ix]:
                c7b.append((k, end))
    clauses.append(ClauseResult("7-beta", bij and not c7a and not c7b,
                                {"bijection": bij, "carrier_failures": c7a[:5], "adjacency_failures": c7b[:5]}))
    return DecompositionReport(clauses, L1v, L2v, measured_L1, measured_L2)


def _arcs(T: StableTree, pid: int) -> list[tuple]:
    """Maximal paths in an edge piece between gluing, branch or end nodes."""
    p = T.pieces[pid]
    cn = T.c_nodes()
    adj = defaultdict(list)
    for a, b in p.edges:
        adj[a].append(b)
        adj[b].append(a)
    special = {n for n in adj if n in cn or T.graph.degree(n) != 2 or len(adj[n]) != 2}
    seen: set = set()
    arcs = []
    for s in sorted(special):
        for nb in sorted(adj[s]):
            e = _ekey(s, nb)
            if e in seen:
                continue
            path = [s, nb]
            seen.add(e)
            while path[-1] not in special:
                cur = path[-1]
                nxt = [x for x in adj[cur] if x != path[-2]][0]
                seen.add(_ekey(cur, nxt))
                path.append(nxt)
            arcs.append(tuple(path))
    return arcs


def _match_runs(T: StableTree, H: StableTree, left_arcs: list[tuple], right_arcs: list[tuple], used_r: set, min_len: int) -> list[StablePair]:
    """Greedy maximal runs of identical host edges between arcs."""
    index: dict = defaultdict(list)
    for ai, arc in enumerate(right_arcs):
        hs = [H.phi[n] for n in arc]
        for k in range(len(arc) - 1):
            index[(hs[k], hs[k + 1])].append((ai, k, 1))
            index[(hs[k + 1], hs[k])].append((ai, k + 1, -1))
    out = []
    for arc in left_arcs:
        hs = [T.phi[n] for n in arc]
        k = 0
        while k < len(arc) - 1:
            best = None
            for ai, pos, step in index.get((hs[k], hs[k + 1]), []):
                rarc = right_arcs[ai]
                ln = 0
                while True:
                    kk = k + ln
                    rp = pos + step * ln
                    rq = rp + step
                    if kk + 1 >= len(arc) or not (0 <= rq < len(rarc)):
                        break
                    if H.phi[rarc[rp]] != hs[kk] or H.phi[rarc[rq]] != hs[kk + 1]:
                        break
                    if _ekey(rarc[rp], rarc[rq]) in used_r:
                        break
                    if T.weight(arc[kk], arc[kk + 1]) != H.weight(rarc[rp], rarc[rq]):
                        break
                    ln += 1
                if ln and (best is None or ln > best[0]):
                    best = (ln, ai, pos, step)
            if best is None or best[0] < min_len:
                k += 1
                continue
            ln, ai, pos, step = best
            rarc = right_arcs[ai]
            left = arc[k:k + ln + 1]
            right = tuple(rarc[pos + step * j] for j in range(ln + 1))
            for a, b in zip(right, right[1:]):
                used_r.add(_ekey(a, b))
            out.append(StablePair(tuple(left), right))
            k += ln
    return out


def _twins(T: StableTree, H: StableTree) -> tuple[dict, set, set]:
    sig_r: dict = defaultdict(list)
    for p in H.pieces:
        sig_r[H.piece_signature(p)].append(p.pid)
    twin = {}
    for p in T.pieces:
        s = T.piece_signature(p)
        if sig_r.get(s):
            twin[p.pid] = sig_r[s].pop(0)
    diff_l = {p.pid for p in T.pieces if p.pid not in twin}
    diff_r = {p.pid for p in H.pieces if p.pid not in set(twin.values())}
    # grow the difference forests until complements correspond component-wise
    for _ in range(len(T.pieces) + len(H.pieces) + 1):
        cl = _piece_graph_components(T, diff_l)
        cr = _piece_graph_components(H, diff_r)
        where_r = {p: i for i, c in enumerate(cr) for p in c}
        changed = False
        for comp in cl:
            imgs = {where_r.get(twin.get(p)) for p in comp}
            target = cr[next(iter(imgs))] if len(imgs) == 1 and None not in imgs else None
            if target is None or {twin[p] for p in comp} != set(target):
                diff_l |= set(comp)
                for p in comp:
                    if p in twin:
                        diff_r.add(twin[p])
                if target is not None:
                    diff_r |= set(target)
                changed = True
        if not changed:
            break
    live = {p: q for p, q in twin.items() if p not in diff_l and q not in diff_r}
    return live, diff_l, diff_r


def _assign_beta(T: StableTree, H: StableTree, pairs: list[StablePair], F: Sequence[int], Y0: Sequence[int]) -> tuple[dict, list[int]]:
    """Beta from adjacency and carriers; returns conflicting pair indices."""
    compL = _complement_components(T, [p.left for p in pairs])
    compR = _complement_components(H, [p.right for p in pairs])
    whereL = {n: i for i, c in enumerate(compL) for n in c}
    whereR = {n: i for i, c in enumerate(compR) for n in c}
    votes: dict[int, dict[int, list[int]]] = defaultdict(lambda: defaultdict(list))
    for k, p in enumerate(pairs):
        for end in (0, -1):
            votes[whereL[p.left[end]]][whereR[p.right[end]]].append(k)
    for y in tuple(F) + tuple(Y0):
        if y in T.point_cluster and y in H.point_cluster:
            pl = T.carriers.get(T.point_cluster[y])
            pr = H.carriers.get(H.point_cluster[y])
            if pl is not None and pr is not None:
                nl = next(iter(T.pieces[pl].nodes))
                nr = next(iter(H.pieces[pr].nodes))
                if nl in whereL and nr in whereR:
                    votes[whereL[nl]][whereR[nr]].append(-1)
    beta: dict = {}
    conflicts: list[int] = []
    taken: dict = {}
    for i in range(len(compL)):
        v = votes.get(i)
        if not v:
            continue
        if len(v) > 1:
            ranked = sorted(v.items(), key=lambda kv: (-(-1 in kv[1]), -len(kv[1]), kv[0]))
            for j, ks in ranked[1:]:
                conflicts.extend(k for k in ks if k >= 0)
            j = ranked[0][0]
        else:
            j = next(iter(v))
        if j in taken:
            conflicts.extend(k for k in v[j] if k >= 0)
            continue
        beta[i] = j
        taken[j] = i
    freeL = [i for i in range(len(compL)) if i not in beta]
    freeR = [j for j in range(len(compR)) if j not in taken]
    if len(freeL) == 1 and len(freeR) == 1:
        beta[freeL[0]] = freeR[0]
    return beta, sorted(set(conflicts))


def assemble_decomposition(T: StableTree, T2: StableTree, H: StableTree, pairs: list[StablePair], F: Sequence[int],
                           Y0: Sequence[int], diff: tuple[set, set] | None = None) -> StableDecomposition:
    """Compute beta (dropping pairs that make it inconsistent) and run the checker."""
    pairs = list(pairs)
    for _ in range(len(pairs) + 1):
        beta, conflicts = _assign_beta(T, H, pairs, F, Y0)
        if not conflicts:
            break
        drop = set(conflicts)
        pairs = [p for k, p in enumerate(pairs) if k not in drop]
    if diff is None:
        _, dl, dr = _twins(T, H)
    else:
        dl, dr = diff
    dec = StableDecomposition(T, T2, H, pairs, beta, dl, dr, tuple(F), tuple(Y0))
    dec.report = check_decomposition(dec)
    return dec


def decompose(T: StableTree, T2: StableTree, F: Sequence[int], Y0: Sequence[int] = (), min_len: int = 1) -> StableDecomposition:
    """Constructive stable decomposition between T and the hull of F in T2."""
    marks = [T2.marked[f] for f in F if f in T2.marked]
    H = T2.restrict(T2.hull_nodes(marks)) if marks else T2
    twin, dl, dr = _twins(T, H)
    used_r: set = set()
    pairs: list[StablePair] = []
    done_left: set = set()
    for pl in sorted(twin):
        if T.pieces[pl].kind != "e":
            continue
        la = _arcs(T, pl)
        ra = _arcs(H, twin[pl])
        pairs += _match_runs(T, H, la, ra, used_r, min_len)
        done_left.add(pl)
    rest_l = [a for p in T.pieces if p.kind == "e" and p.pid not in done_left for a in _arcs(T, p.pid)]
    rest_r = [a for p in H.pieces if p.kind == "e" and p.pid not in set(twin.values()) for a in _arcs(H, p.pid)]
    pairs += _match_runs(T, H, rest_l, rest_r, used_r, min_len)
    # intervals are open; trim degenerate single-edge intervals touching nothing stable is fine
    return assemble_decomposition(T, T2, H, pairs, F, Y0, (dl, dr))


# ---------------------------------------------------------------------------
# one-point and layered constructions

@dataclass
class UnstableCore:
    absorbed: list[int]
    affected: list[int]
    raw_core: list[int]
    core_clusters: list[int]
    core_clusters_new: list[int]
    left_pieces: set
    right_pieces: set
    gamma: dict  # left complement component (piece ids) -> right


def _piece_components(T: StableTree, pieces: set) -> list[frozenset[int]]:
    return sorted(_piece_graph_components(T, pieces), key=min)


def one_point_decomposition(setup: EpsilonSetup, w: int, eps_p: float | None = None, E: float | None = None, A1: int = 1) -> StableDecomposition:
    lam = setup.network
    dl = setup.graph.distance_to_set(lam.vertices)
    if not dl[w] < Fraction(setup.eps) / 2:
        raise SetupError("new point too far from the network of F", {"w": int(w), "distance": int(dl[w])})
    setup2 = setup.with_point(w)
    cg = cluster_graph(setup, eps_p, E)
    cg2 = cluster_graph(setup2, eps_p, E)
    T = stable_tree(setup, cg=cg)
    T2 = stable_tree(setup2, cg=cg2)
    g = setup.graph
    absorbed = [i for i, C in enumerate(cg.clusters) if g.set_distance(C, [w]) < cg.E]
    ng, ng2 = cg.nx_graph(), cg2.nx_graph()
    new_index = {}
    for i, C in enumerate(cg.clusters):
        for j, C2 in enumerate(cg2.clusters):
            if C == C2:
                new_index[i] = j
    affected = set(absorbed)
    for a in absorbed:
        affected |= set(ng.neighbors(a))
    for a, b in cg.adjacency:
        if a in new_index and b in new_index and not ng2.has_edge(new_index[a], new_index[b]):
            affected |= {a, b}
    if not affected:
        affected = set()
    raw = set()
    for a in affected:
        lengths = nx.single_source_shortest_path_length(ng, a, cutoff=A1 + 2)
        raw |= set(lengths)
    biv_out = {i for i in range(len(cg.clusters)) if cg.bivalent[i] and i not in raw}
    core = set(raw)
    if raw:
        sub = ng.subgraph([i for i in ng.nodes if i not in biv_out])
        for comp in nx.connected_components(sub):
            if comp & raw:
                core |= comp
        core |= {j for i in list(core) for j in ng.neighbors(i) if j in biv_out}
    core2 = {new_index[i] for i in core if i in new_index}
    core2 |= {j for j, C2 in enumerate(cg2.clusters) if w in C2}
    left_p = {pid for ci, pid in T.carriers.items() if ci in core}
    right_p = {pid for ci, pid in T2.carriers.items() if ci in core2}
    for p in T.pieces:
        if p.kind == "e" and all(n[1] in core for n in p.nodes if n[0] == "c"):
            left_p.add(p.pid)
    for p in T2.pieces:
        if p.kind == "e" and all(n[1] in core2 for n in p.nodes if n[0] == "c"):
            right_p.add(p.pid)
    compL = _piece_components(T, left_p)
    compR = _piece_components(T2, right_p)
    sigR = {_comp_signature(T2, c): i for i, c in enumerate(compR)}
    gamma = {i: sigR.get(_comp_signature(T, c)) for i, c in enumerate(compL)}
    dec = decompose(T, T2, setup.F, setup.Y)
    dec.extras["core"] = UnstableCore(sorted(absorbed), sorted(affected), sorted(raw), sorted(core), sorted(core2), left_p, right_p, gamma)
    return dec


def _net(graph: MetricGraph, pts: Sequence[int], order_from: int, a: int, start: Sequence[int] = ()) -> list[int]:
    """Greedy net: scan by distance from ``order_from``, keep points >= a from the net."""
    order = sorted(pts, key=lambda v: (int(graph.dist[order_from, v]), v))
    net = list(start)
    for v in order:
        if not net or int(graph.dist[v, net].min()) >= a:
            net.append(v)
    return sorted(set(net))


def fake_cluster_points(setupF: EpsilonSetup, setupF2: EpsilonSetup, x: int, a: int = 2, A: int = 1, B: int | None = None,
                        E: float | None = None) -> tuple[list[int], list[int]]:
    eps_p, dE = default_constants(setupF.eps)
    E = dE if E is None else Fraction(E)
    B = int(8 * eps_p) if B is None else B
    if not (a <= E / 2 and A <= a):
        raise ConfigurationError("need a <= E/2 and A <= a", {"a": a, "A": A, "E": str(E)})
    g = setupF.graph
    lam = sorted(setupF.network.vertices)
    p = g.project(x, lam)
    hood = [v for v in lam if g.dist[p, v] <= B]
    net = _net(g, hood, p, a)
    lam2 = sorted(setupF2.network.vertices)
    hood2 = [v for v in lam2 if g.dist[p, v] <= B]
    net2 = _net(g, hood2, p, a, start=net)
    return net, net2


def sporadic_points(setupF: EpsilonSetup, new_point: int, Y2: Iterable[int], S: float) -> list[int]:
    """Points y with y outside the S-neighborhood of hull(x, f) for some f in F."""
    from .space import hull

    g = setupF.graph
    out = []
    hulls = [hull(g, [new_point, f]) for f in setupF.F]
    for y in sorted(set(Y2)):
        if not all(g.distance_to_set(h)[y] <= S for h in hulls):
            out.append(y)
    return out


def stabler_decomposition(setupF: EpsilonSetup, setupF2: EpsilonSetup, S: float, N: int, eps_p: float | None = None,
                          E: float | None = None) -> StableDecomposition:
    if not set(setupF.F) <= set(setupF2.F) or not set(setupF.Y) <= set(setupF2.Y):
        raise ArgumentError("need F within F' and Y within Y'")
    layers = []
    cur = list(setupF.F)
    for x in [f for f in setupF2.F if f not in set(setupF.F)]:
        base = EpsilonSetup.build(setupF.graph, cur, (), setupF.eps)
        spor = sporadic_points(base, x, [y for y in setupF2.Y if y not in set(setupF.Y)], S)
        layers.append({"new_point": x, "sporadic": spor})
        if len(spor) > N:
            raise SetupError("setup is not well-layered", {"layer": len(layers) - 1, "new_point": x, "sporadic": spor})
        cur.append(x)
    T = stable_tree(setupF, eps_p, E)
    T2 = stable_tree(setupF2, eps_p, E)
    dec = decompose(T, T2, setupF.F, setupF.Y)
    dec.extras["layers"] = layers
    if layers:
        x = layers[0]["new_point"]
        mid = EpsilonSetup.build(setupF.graph, list(setupF.F) + [x], (), setupF.eps)
        dec.extras["fake"] = fake_cluster_points(setupF, mid, x, E=E)
    return dec


# ---------------------------------------------------------------------------
# composition, gluing data, collapse

def gluing_data_violations(dec: StableDecomposition) -> list[tuple[int, int]]:
    """Pairs (C, D) where the endpoint of C facing D is not carried to the one facing alpha(D)."""
    T, H = dec.T, dec.H
    out = []
    pairs = dec.pairs
    DL = T.dist_matrix()
    DR = H.dist_matrix()
    for ci, C in enumerate(pairs):
        ends_l = [T.node_index[C.left[0]], T.node_index[C.left[-1]]]
        ends_r = [H.node_index[C.right[0]], H.node_index[C.right[-1]]]
        for di, Dp in enumerate(pairs):
            if di == ci:
                continue
            dn = [T.node_index[n] for n in Dp.left]
            dd = DL[np.ix_(ends_l, dn)].min(axis=1)
            if dd[0] == dd[1]:
                continue
            gl = 0 if dd[0] < dd[1] else 1
            dnr = [H.node_index[n] for n in Dp.right]
            ddr = DR[np.ix_(ends_r, dnr)].min(axis=1)
            if ddr[0] == ddr[1] or (0 if ddr[0] < ddr[1] else 1) != gl:
                out.append((ci, di))
    return out


def _same_tree(a: StableTree, b: StableTree) -> bool:
    return a is b or (set(a.graph.nodes) == set(b.graph.nodes) and a.phi == b.phi
                      and {_ekey(x, y) for x, y in a.graph.edges} == {_ekey(x, y) for x, y in b.graph.edges})


def chain_compose(decomps: Sequence[StableDecomposition]) -> StableDecomposition:
    if not decomps:
        raise ArgumentError("empty chain")
    for k in range(len(decomps) - 1):
        if not _same_tree(decomps[k].T2, decomps[k + 1].T):
            raise ArgumentError("consecutive decompositions do not share the middle tree", k)
    cur = decomps[0]
    for nxt in decomps[1:]:
        # node of the middle tree -> positions on cur's right intervals
        pos_r: dict = defaultdict(list)
        for k, p in enumerate(cur.pairs):
            for j, n in enumerate(p.right):
                pos_r[n].append((k, j))
        pairs = []
        for p2 in nxt.pairs:
            path = p2.left
            run: list[tuple[int, int]] = []  # (position in p2, position in cur pair)
            k_run = -1
            step = 0
            for i, n in enumerate(path):
                opts = pos_r.get(n, [])
                ext = None
                if run:
                    for k, j in opts:
                        if k == k_run and j - run[-1][1] == (step or j - run[-1][1]) and abs(j - run[-1][1]) == 1:
                            ext = (k, j)
                            break
                if ext is not None:
                    if len(run) == 1:
                        step = ext[1] - run[0][1]
                    run.append((i, ext[1]))
                    continue
                if len(run) >= 2:
                    pairs.append(StablePair(tuple(cur.pairs[k_run].left[j] for _, j in run), tuple(p2.right[ii] for ii, _ in run)))
                run, k_run, step = [], -1, 0
                if opts:
                    nxt_opts = set(pos_r.get(path[i + 1], [])) if i + 1 < len(path) else set()
                    pick = next(((k, j) for k, j in opts if (k, j + 1) in nxt_opts or (k, j - 1) in nxt_opts), opts[0])
                    run, k_run = [(i, pick[1])], pick[0]
            if len(run) >= 2:
                pairs.append(StablePair(tuple(cur.pairs[k_run].left[j] for _, j in run), tuple(p2.right[ii] for ii, _ in run)))
        marks = [nxt.T2.marked[f] for f in cur.F if f in nxt.T2.marked]
        H = nxt.T2.restrict(nxt.T2.hull_nodes(marks)) if marks else nxt.T2
        pairs = [StablePair(p.left, p.right) for p in pairs if all(n in H.graph for n in p.right)]
        cur = assemble_decomposition(cur.T, nxt.T2, H, pairs, cur.F, tuple(y for y in cur.Y0 if y in set(nxt.Y0)))
    cur.extras["gluing_violations"] = gluing_data_violations(cur)
    return cur


@dataclass
class CollapsedEmbedding:
    That: nx.Graph
    That2: nx.Graph
    Delta: dict
    Delta2: dict
    Phi: dict
    report: dict


def _collapse(T: StableTree, groups: list[frozenset]) -> tuple[nx.Graph, dict]:
    """Quotient of the abstract tree by node groups (each group connected)."""
    q = {}
    for i, grp in enumerate(groups):
        for n in grp:
            q[n] = ("D", i)
    for n in T.graph.nodes:
        q.setdefault(n, ("v", n))
    g = nx.Graph()
    g.add_nodes_from(set(q.values()))
    for a, b, d in T.graph.edges(data=True):
        qa, qb = q[a], q[b]
        if qa != qb:
            g.add_edge(qa, qb, weight=d["weight"])
    return g, q


def collapse_and_embed(dec: StableDecomposition) -> CollapsedEmbedding:
    rep = dec.report or check_decomposition(dec)
    if not rep.passed:
        raise CheckFailure("decomposition fails the checker", rep.failed())
    T, T2, H = dec.T, dec.T2, dec.H
    compL, compR = dec.complements()
    That, Delta = _collapse(T, compL)
    That2, Delta2 = _collapse(T2, compR)
    Phi = {}
    for i, c in enumerate(compL):
        Phi[("D", i)] = ("D", dec.beta[i])
    for p in dec.pairs:
        for a, b in zip(p.left[1:-1], p.right[1:-1]):
            Phi[Delta[a]] = Delta2[b]
    verts = sorted(That.nodes, key=repr)
    d1 = dict(nx.all_pairs_dijkstra_path_length(That))
    d2 = dict(nx.all_pairs_dijkstra_path_length(That2))
    worst = 0
    for i, a in enumerate(verts):
        for b in verts[i + 1:]:
            worst = max(worst, abs(d1[a][b] - d2[Phi[a]][Phi[b]]))
    marks_ok = all(Phi[Delta[T.marked[f]]] == Delta2[T2.marked[f]] for f in dec.F if f in T.marked and f in T2.marked)
    positive = all(d1[a][b] > 0 and float(d1[a][b]).is_integer() for i, a in enumerate(verts) for b in verts[i + 1:] if a[0] == "D" and b[0] == "D")
    report = {
        "isometric": worst == 0,
        "max_distortion": worst,
        "marked_points_match": marks_ok,
        "collapsed_distances_positive_integers": positive,
        "simplicial": nx.is_tree(That) and nx.is_tree(That2),
    }
    return CollapsedEmbedding(That, That2, Delta, Delta2, Phi, report)


def identity_check(dec: StableDecomposition) -> bool:
    return all([dec.T.phi[n] for n in p.left] == [dec.H.phi[n] for n in p.right] for p in dec.pairs)
