"""Hierarchical families of trees, their cubical models and the change-of-model diagram."""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Iterable, Sequence

import networkx as nx
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .cube import CubeComplex, convex_embedding_check, delete_hyperplanes
from .errors import ArgumentError, CapacityError, CheckFailure
from .hhs import HHSInstance, rel_domains
from .treenet import (
    EpsilonSetup,
    StableDecomposition,
    StableTree,
    _ekey,
    _pieces_from_c,
    decompose,
    default_constants,
    stable_tree,
)

MAX_Q = 200_000


# ---------------------------------------------------------------------------
# thickening and collapsing

@dataclass
class Thickening:
    nodes: frozenset  # the cluster forest after thickening
    components: list[frozenset]
    rounds: int
    report: dict


def thicken(graph: nx.Graph, cluster_nodes: Iterable[Hashable], r1: int, r2: int) -> Thickening:
    """Take the r1-neighborhood of the cluster forest once, then join components at most r2 apart by geodesics."""
    if int(r1) != r1 or int(r2) != r2 or r1 <= 0 or r2 <= 0:
        raise ArgumentError("r1 and r2 must be positive integers", (r1, r2))
    base = set(cluster_nodes)
    if not base:
        return Thickening(frozenset(), [], 0, {"separated": True, "depth_ok": True})
    dist = dict(nx.multi_source_dijkstra_path_length(graph, base, cutoff=r1))
    B = {n for n, d in dist.items() if d <= r1}
    rounds = 0
    while True:
        rounds += 1
        comps = sorted((frozenset(c) for c in nx.connected_components(graph.subgraph(B))), key=min)
        merged = False
        for a, b in itertools.combinations(range(len(comps)), 2):
            d, path = _set_geodesic(graph, comps[a], comps[b], r2)
            if path is not None:
                B |= set(path)
                merged = True
                break
        if not merged:
            break
    comps = sorted((frozenset(c) for c in nx.connected_components(graph.subgraph(B))), key=min)
    sep = True
    for a, b in itertools.combinations(range(len(comps)), 2):
        if _set_geodesic(graph, comps[a], comps[b], r2)[1] is not None:
            sep = False
    hood = {n for n, d in dist.items() if d <= r1}
    return Thickening(frozenset(B), comps, rounds, {"separated": sep, "depth_ok": hood <= B})


def _set_geodesic(graph: nx.Graph, A: frozenset, B: frozenset, cutoff: float) -> tuple[float, list | None]:
    lengths, paths = nx.multi_source_dijkstra(graph, set(A), cutoff=cutoff)
    best = None
    for n in sorted(B):
        if n in lengths and (best is None or lengths[n] < lengths[best]):
            best = n
    if best is None:
        return float("inf"), None
    return lengths[best], paths[best]


def collapse_tree(graph: nx.Graph, components: Sequence[Iterable[Hashable]]) -> tuple[nx.Graph, dict]:
    """Collapse each component to a vertex ('K', i); other nodes become ('v', node)."""
    q: dict = {}
    for i, comp in enumerate(components):
        for n in comp:
            q[n] = ("K", i)
    for n in graph.nodes:
        q.setdefault(n, ("v", n))
    out = nx.Graph()
    out.add_nodes_from(set(q.values()))
    for a, b in graph.edges:
        if q[a] != q[b]:
            out.add_edge(q[a], q[b])
    return out, q


# ---------------------------------------------------------------------------
# finite simplicial trees with integer vertices

class FTree:
    """Finite simplicial tree on vertices 0..n-1 (labels keep the original names)."""

    def __init__(self, labels: Sequence[Hashable], edges: Iterable[tuple[int, int]]) -> None:
        self.labels = list(labels)
        self.n = len(self.labels)
        self.edges = sorted((min(a, b), max(a, b)) for a, b in edges)
        self.adj: list[list[int]] = [[] for _ in range(self.n)]
        for a, b in self.edges:
            self.adj[a].append(b)
            self.adj[b].append(a)
        for lst in self.adj:
            lst.sort()
        if self.edges:
            r = [a for a, b in self.edges] + [b for a, b in self.edges]
            c = [b for a, b in self.edges] + [a for a, b in self.edges]
            m = csr_matrix((np.ones(len(r)), (r, c)), shape=(self.n, self.n))
            D = shortest_path(m, method="D", unweighted=True)
            self.dist = np.where(np.isfinite(D), D, -1).astype(np.int64)
        else:
            self.dist = np.zeros((self.n, self.n), dtype=np.int64)
        # sides[v, k] = 1 when v lies on the b side of edge k = (a, b)
        self.sides = np.zeros((self.n, len(self.edges)), dtype=np.uint8)
        for k, (a, b) in enumerate(self.edges):
            self.sides[:, k] = self.dist[:, b] < self.dist[:, a]
        self.index = {lab: i for i, lab in enumerate(self.labels)}

    @classmethod
    def from_nx(cls, g: nx.Graph) -> "FTree":
        labels = sorted(g.nodes)
        idx = {lab: i for i, lab in enumerate(labels)}
        return cls(labels, [(idx[a], idx[b]) for a, b in g.edges])

    def is_tree(self) -> bool:
        return self.n > 0 and len(self.edges) == self.n - 1 and (self.dist >= 0).all()

    def leaves(self) -> list[int]:
        return [v for v in range(self.n) if len(self.adj[v]) <= 1] if self.n > 1 else []

    def components_without(self, v: int) -> list[list[int]]:
        out = []
        for nb in self.adj[v]:
            out.append([w for w in range(self.n) if self.dist[w, nb] < self.dist[w, v]])
        return out

    def hull(self, S: Iterable[int]) -> list[int]:
        S = sorted(set(S))
        if not S:
            return []
        keep = np.zeros(self.n, dtype=bool)
        for a in S:
            for b in S:
                keep |= self.dist[a] + self.dist[b] == self.dist[a, b]
        return np.flatnonzero(keep).tolist()

    def to_dot(self, name: str = "T", marks: dict | None = None) -> str:
        marks = marks or {}
        byv = defaultdict(list)
        for f, v in marks.items():
            byv[v].append(str(f))
        lines = [f"graph {name} {{"]
        for v in range(self.n):
            lab = ",".join(byv[v]) if byv[v] else ""
            shape = "doublecircle" if byv[v] else "circle"
            lines.append(f'  t{v} [label="{lab}", shape={shape}];')
        for a, b in self.edges:
            lines.append(f"  t{a} -- t{b};")
        lines.append("}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# hierarchical families of trees

@dataclass
class HFT:
    domains: list[int]  # instance domain ids, position i <-> domains[i]
    relations: list[list[str]]  # restricted relation table
    trees: list[FTree]
    marks: list[dict]  # per position: point of F -> vertex
    delta: dict  # (i, j) -> vertex of trees[j], for i nested in j or i transverse to j
    delta_down: dict  # (j, i) -> list over vertices of trees[j] of frozensets of vertices of trees[i]
    F: tuple
    info: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.domains)

    def rel(self, i: int, j: int) -> str:
        return self.relations[i][j]


@dataclass
class ClauseCheck:
    name: str
    passed: bool
    witness: object = None


def check_hft(h: HFT) -> list[ClauseCheck]:
    out = []
    m = h.m
    R = h.relations
    tops = [s for s in range(m) if all(R[u][s] in ("<", "=") for u in range(m))]
    ok1 = len(tops) == 1 and all(R[i][i] == "=" for i in range(m))
    out.append(ClauseCheck("1-relations", ok1, {"maximal": tops}))
    bad2 = [h.domains[i] for i, t in enumerate(h.trees) if not t.is_tree()]
    out.append(ClauseCheck("2-finite-simplicial-trees", not bad2, bad2))
    bad3 = []
    for i, t in enumerate(h.trees):
        if set(h.marks[i]) != set(h.F):
            bad3.append((h.domains[i], "unlabeled point"))
        marked = set(h.marks[i].values())
        for leaf in t.leaves():
            if leaf not in marked:
                bad3.append((h.domains[i], "unmarked leaf", t.labels[leaf]))
    out.append(ClauseCheck("3-marked-points", not bad3, bad3[:5]))
    bad4 = []
    for (i, j), v in sorted(h.delta.items()):
        marked = set(h.marks[j].values())
        for comp in h.trees[j].components_without(v):
            if not marked & set(comp):
                bad4.append((h.domains[i], h.domains[j], "component without marked point"))
                break
    for u in range(m):
        for v in range(m):
            if R[u][v] != "perp":
                continue
            for w in range(m):
                if R[v][w] == "<" and R[u][w] in ("<", "trans"):
                    if h.delta.get((u, w)) != h.delta.get((v, w)):
                        bad4.append((h.domains[u], h.domains[v], h.domains[w], "orthogonal substitution"))
    out.append(ClauseCheck("4-components-and-orthogonality", not bad4, bad4[:5]))
    bad5 = []
    for (i, j), v in sorted(h.delta.items()):
        if R[i][j] != "<":
            continue
        down = h.delta_down[(j, i)]
        for comp in h.trees[j].components_without(v):
            img = set().union(*(down[w] for w in comp))
            fs = [f for f, x in h.marks[j].items() if x in set(comp)]
            want = {h.marks[i][f] for f in fs}
            if len(img) != 1 or (fs and img != want):
                bad5.append((h.domains[i], h.domains[j], sorted(img)[:3], sorted(want)[:3]))
                break
    out.append(ClauseCheck("5-bounded-geodesic-image", not bad5, bad5[:5]))
    return out


def allowed_matrix(h: HFT, i: int, j: int) -> np.ndarray | None:
    """Pairs (x_i, x_j) allowed by the 0-consistency clauses; None when unconstrained."""
    r = h.rel(i, j)
    ni, nj = h.trees[i].n, h.trees[j].n
    if r in ("perp", "="):
        return None
    if r == "trans":
        A = (np.arange(ni) == h.delta[(j, i)])[:, None] | (np.arange(nj) == h.delta[(i, j)])[None, :]
    elif r == "<":
        A = np.zeros((ni, nj), dtype=bool)
        A[:, h.delta[(i, j)]] = True
        for xj, img in enumerate(h.delta_down[(j, i)]):
            A[list(img), xj] = True
    else:
        Bt = allowed_matrix(h, j, i)
        return None if Bt is None else Bt.T
    return None if A.all() else A


def consistent(h: HFT, t: Sequence[int]) -> bool:
    for i in range(h.m):
        for j in range(i + 1, h.m):
            A = allowed_matrix(h, i, j)
            if A is not None and not A[t[i], t[j]]:
                return False
    return True


@dataclass
class ConsistentSet:
    hft: HFT
    tuples: np.ndarray  # (|Q|, m)
    cx: CubeComplex
    blocks: list[list[int]]
    index: dict

    @property
    def n(self) -> int:
        return len(self.tuples)

    def id_of(self, t: Sequence[int]) -> int | None:
        return self.index.get(tuple(int(x) for x in t))


def consistent_set(h: HFT, guard: int = MAX_Q) -> ConsistentSet:
    m = h.m
    A = {(i, j): allowed_matrix(h, i, j) for i in range(m) for j in range(m) if i != j}
    cons = {i: [j for j in range(m) if j != i and A[(i, j)] is not None] for i in range(m)}
    g = nx.Graph()
    g.add_nodes_from(i for i in range(m) if h.trees[i].n > 1)
    for i in g.nodes:
        for j in cons[i]:
            if j in g:
                g.add_edge(i, j)
    blocks = sorted((sorted(c) for c in nx.connected_components(g)), key=lambda c: c[0])
    f0 = h.F[0]
    seed = [h.marks[i][f0] for i in range(m)]
    if not consistent(h, seed):
        raise CheckFailure("the tuple of a marked point is not 0-consistent", {"point": f0})
    block_tuples = []
    total = 1
    for blk in blocks:
        start = tuple(seed[i] for i in blk)
        seen = {start}
        frontier = [start]
        pos = {d: k for k, d in enumerate(blk)}
        while frontier:
            nxt = []
            for t in frontier:
                for k, d in enumerate(blk):
                    for w in h.trees[d].adj[t[k]]:
                        ok = True
                        for e in cons[d]:
                            if e in pos and not A[(d, e)][w, t[pos[e]]]:
                                ok = False
                                break
                        if not ok:
                            continue
                        s = t[:k] + (w,) + t[k + 1:]
                        if s not in seen:
                            seen.add(s)
                            nxt.append(s)
                            if len(seen) > guard:
                                raise CapacityError("consistent set exceeds the enumeration guard", len(seen))
            frontier = nxt
        arr = np.array(sorted(seen), dtype=np.int64).reshape(-1, len(blk))
        block_tuples.append(arr)
        total *= len(arr)
        if total > guard:
            raise CapacityError("consistent set exceeds the enumeration guard", total)
    rows = np.tile(np.array(seed, dtype=np.int64), (total, 1))
    if blocks:
        grids = np.meshgrid(*[np.arange(len(b)) for b in block_tuples], indexing="ij")
        for blk, arr, gi in zip(blocks, block_tuples, grids):
            rows[:, blk] = arr[gi.reshape(-1)]
    rows = rows[np.lexsort(rows.T[::-1])] if len(rows) > 1 else rows
    cx = _cube_of(h, rows)
    index = {tuple(r): k for k, r in enumerate(rows.tolist())}
    return ConsistentSet(h, rows, cx, blocks, index)


def _walls(h: HFT) -> list[tuple[int, int, int]]:
    return [(h.domains[i], a, b) for i in range(h.m) for a, b in h.trees[i].edges]


def _cube_of(h: HFT, rows: np.ndarray) -> CubeComplex:
    cols = [h.trees[i].sides[rows[:, i]] for i in range(h.m)]
    orient = np.concatenate(cols, axis=1) if cols else np.zeros((len(rows), 0), dtype=np.uint8)
    return CubeComplex(_walls(h), orient)


def brute_force_consistent(h: HFT, guard: int = 100_000) -> np.ndarray:
    """Filter the full product of trees tuple by tuple (oracle for small instances)."""
    sizes = [t.n for t in h.trees]
    if int(np.prod(sizes)) > guard:
        raise CapacityError("product too large for brute force", sizes)
    keep = [t for t in itertools.product(*[range(s) for s in sizes]) if consistent(h, t)]
    return np.array(keep, dtype=np.int64).reshape(-1, h.m)


# ---------------------------------------------------------------------------
# per-domain trees from an instance

@dataclass(frozen=True)
class ModelParams:
    K: float | None = None
    eps: Fraction = Fraction(1, 4)
    eps_p: Fraction | None = None
    E: Fraction | None = None
    r1: int | None = None
    r2: int | None = None

    def resolved(self, inst: HHSInstance) -> "ModelParams":
        dp, dE = default_constants(self.eps)
        eps_p = dp if self.eps_p is None else Fraction(self.eps_p)
        E = dE if self.E is None else Fraction(self.E)
        r = int(2 * E)
        K = 10 * inst.E + 10 if self.K is None else self.K
        return ModelParams(K, Fraction(self.eps), eps_p, E, self.r1 or r, self.r2 or r)


@dataclass
class DomainTree:
    domain: int
    setup: EpsilonSetup
    stable: StableTree
    thick: Thickening
    ftree: FTree
    q: dict  # stable-tree node -> vertex of ftree
    image: np.ndarray  # host vertices covered by the stable tree
    phi_inv: dict  # host vertex -> least node over it
    realized: np.ndarray  # vertex -> host vertex of its least preimage node

    def psi(self, host_points: np.ndarray) -> np.ndarray:
        """Collapsed position of host points: nearest image vertex, least node over it, then the collapse."""
        g = self.setup.graph
        pts = np.asarray(host_points, dtype=np.int64)
        d = g.dist[np.ix_(pts, self.image)]
        near = self.image[np.argmin(d, axis=1)]
        table = {int(v): self.q[self.phi_inv[int(v)]] for v in np.unique(near)}
        return np.array([table[int(v)] for v in near], dtype=np.int64)


def _simplicial_check(g) -> None:
    if any(w != 1 for _, _, w in g.edges):
        raise ArgumentError("domain spaces must have unit edge lengths")


def domain_tree(inst: HHSInstance, U: int, F: Sequence[int], Y: Iterable[int], p: ModelParams) -> DomainTree:
    g = inst.spaces[U]
    _simplicial_check(g)
    FU = sorted(set(inst.pi[U, list(F)].tolist()))
    YU = sorted(set(int(y) for y in Y) - set(FU))
    setup = EpsilonSetup.build(g, FU, YU, p.eps)
    T = stable_tree(setup, p.eps_p, p.E)
    th = thicken(T.graph, T.c_nodes(), p.r1, p.r2)
    tree, q0 = collapse_tree(T.graph, th.components)
    ft = FTree.from_nx(tree)
    q = {n: ft.index[v] for n, v in q0.items()}
    phi_inv: dict = {}
    for n in sorted(T.graph.nodes):
        phi_inv.setdefault(T.phi[n], n)
    image = np.array(sorted(phi_inv), dtype=np.int64)
    pre: dict = {}
    for n in sorted(T.graph.nodes):
        pre.setdefault(q[n], n)
    realized = np.array([T.phi[pre[v]] for v in range(ft.n)], dtype=np.int64)
    return DomainTree(U, setup, T, th, ft, q, image, phi_inv, realized)


@dataclass
class HFTData:
    inst: HHSInstance
    F: tuple
    params: ModelParams
    relevant: list[int]
    hft: HFT
    dtrees: list[DomainTree]
    clauses: list[ClauseCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def psi(self, xs: Sequence[int]) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64)
        cols = [dt.psi(self.inst.pi[dt.domain, xs]) for dt in self.dtrees]
        return np.stack(cols, axis=1) if cols else np.zeros((len(xs), 0), dtype=np.int64)


def build_hft(inst: HHSInstance, F: Sequence[int], params: ModelParams | None = None, strict: bool = True) -> HFTData:
    p = (params or ModelParams()).resolved(inst)
    F = tuple(sorted(set(int(f) for f in F)))
    if not F:
        raise ArgumentError("F must be nonempty")
    S = inst.top()
    rel = rel_domains(inst, F, p.K)
    doms = sorted(set(rel) | {S})
    pos = {U: i for i, U in enumerate(doms)}
    dts = []
    for U in doms:
        Y = [inst.rho[(V, U)] for V in doms if inst.nested(V, U)]
        dts.append(domain_tree(inst, U, F, Y, p))
    m = len(doms)
    R = [[inst.relations[a][b] for b in doms] for a in doms]
    trees = [dt.ftree for dt in dts]
    marks = []
    for i, U in enumerate(doms):
        v = dts[i].psi(inst.pi[U, list(F)])
        marks.append({f: int(x) for f, x in zip(F, v)})
    delta: dict = {}
    delta_down: dict = {}
    for i, V in enumerate(doms):
        for j, U in enumerate(doms):
            if i == j:
                continue
            r = R[i][j]
            if r == "<":
                T = dts[j].stable
                ci = T.point_cluster[inst.rho[(V, U)]]
                node = min(T.pieces[T.carriers[ci]].nodes)
                delta[(i, j)] = dts[j].q[node]
                # downward table from U's tree into V's tree
                tab = np.asarray(inst.rho_down[(U, V)])
                pre = defaultdict(set)
                for n, vx in dts[j].q.items():
                    pre[vx].add(dts[j].stable.phi[n])
                hosts = sorted({h for s in pre.values() for h in s})
                img = dict(zip(hosts, dts[i].psi(tab[hosts]).tolist())) if hosts else {}
                delta_down[(j, i)] = [frozenset(img[h] for h in pre[vx]) for vx in range(trees[j].n)]
            elif r == "trans":
                delta[(i, j)] = int(dts[j].psi(np.array([inst.rho[(V, U)]]))[0])
    h = HFT(doms, R, trees, marks, delta, delta_down, F)
    clauses = check_hft(h)
    data = HFTData(inst, F, p, rel, h, dts, clauses)
    if strict and not data.passed:
        bad = next(c for c in clauses if not c.passed)
        raise CheckFailure(f"HFT clause {bad.name} fails", bad.witness)
    return data


# ---------------------------------------------------------------------------
# Psi and Omega

@dataclass
class PsiOmega:
    data: HFTData
    Q: ConsistentSet
    hull: np.ndarray
    psi_ids: np.ndarray  # hull index -> Q vertex

    def omega(self, qids: Sequence[int], chunk: int = 256) -> np.ndarray:
        """Hull point minimizing the largest per-domain deviation from the realized coordinates (least id on ties)."""
        qids = np.asarray(qids, dtype=np.int64)
        inst = self.data.inst
        out = np.empty(len(qids), dtype=np.int64)
        hp = self.hull
        for s in range(0, len(qids), chunk):
            sel = qids[s:s + chunk]
            worst = np.zeros((len(hp), len(sel)), dtype=np.int64)
            for i, dt in enumerate(self.data.dtrees):
                target = dt.realized[self.Q.tuples[sel, i]]
                dev = inst.spaces[dt.domain].dist[np.ix_(inst.pi[dt.domain, hp], target)]
                np.maximum(worst, dev, out=worst)
            out[s:s + chunk] = hp[np.argmin(worst, axis=0)]
        return out

    def roundtrip(self) -> np.ndarray:
        """d(Omega(Psi(x)), x) for every hull point."""
        back = self.omega(self.psi_ids)
        inst = self.data.inst
        return np.concatenate([np.diagonal(inst.dist_sub(back[s:s + 512], self.hull[s:s + 512]))
                               for s in range(0, len(back), 512)]) if len(back) else np.zeros(0, dtype=np.int64)


def psi_omega(inst: HHSInstance, F: Sequence[int], data: HFTData | None = None, Q: ConsistentSet | None = None) -> PsiOmega:
    data = data or build_hft(inst, F)
    Q = Q or consistent_set(data.hft)
    hull = np.array(inst.hull(list(data.F)), dtype=np.int64)
    tup = data.psi(hull)
    ids = np.array([Q.index.get(tuple(t), -1) for t in tup.tolist()], dtype=np.int64)
    if (ids < 0).any():
        x = int(hull[np.flatnonzero(ids < 0)[0]])
        raise CheckFailure("Psi image escapes the consistent set", {"point": x})
    return PsiOmega(data, Q, hull, ids)


# ---------------------------------------------------------------------------
# the change-of-model diagram

def _thick_stable(dt: DomainTree) -> StableTree:
    T = dt.stable
    groups = []
    for comp in dt.thick.components:
        edges = {_ekey(a, b) for a, b in T.graph.subgraph(comp).edges}
        groups.append((None, set(comp), edges))
    pieces, _ = _pieces_from_c(T.graph, groups)
    carriers = {}
    for ci, pid in T.carriers.items():
        n0 = min(T.pieces[pid].nodes)
        carriers[ci] = next(pp.pid for pp in pieces if pp.kind == "c" and n0 in pp.nodes)
    return T.with_pieces(pieces, carriers)


@dataclass
class Collapse:
    """A tree map collapsing vertex groups: eta[v] is the image vertex."""
    source: FTree
    target: FTree
    eta: np.ndarray
    deleted: list[tuple[int, int]]  # source edges collapsed


def _collapse_groups(t: FTree, groups: Sequence[Iterable[int]]) -> Collapse:
    lab = {}
    for i, grp in enumerate(groups):
        for v in grp:
            lab[v] = ("D", i)
    for v in range(t.n):
        lab.setdefault(v, ("v", v))
    g = nx.Graph()
    g.add_nodes_from(set(lab.values()))
    deleted = []
    for a, b in t.edges:
        if lab[a] == lab[b]:
            deleted.append((a, b))
        else:
            g.add_edge(lab[a], lab[b])
    tgt = FTree.from_nx(g)
    eta = np.array([tgt.index[lab[v]] for v in range(t.n)], dtype=np.int64)
    return Collapse(t, tgt, eta, deleted)


def _push_hft(h: HFT, cols: list[Collapse]) -> HFT:
    trees = [c.target for c in cols]
    marks = [{f: int(cols[i].eta[v]) for f, v in h.marks[i].items()} for i in range(h.m)]
    delta = {(i, j): int(cols[j].eta[v]) for (i, j), v in h.delta.items()}
    down = {}
    for (j, i), tab in h.delta_down.items():
        acc: list[set] = [set() for _ in range(trees[j].n)]
        for v, img in enumerate(tab):
            acc[cols[j].eta[v]] |= {int(cols[i].eta[w]) for w in img}
        down[(j, i)] = [frozenset(s) for s in acc]
    return HFT(list(h.domains), h.relations, trees, marks, delta, down, h.F, {"collapsed": True})


@dataclass
class DiagramBundle:
    F: tuple
    F2: tuple
    data: HFTData
    data2: HFTData
    Q: ConsistentSet
    Q2: ConsistentSet
    Q0: ConsistentSet
    Q20: ConsistentSet
    eta: np.ndarray  # Q vertex -> Q0 vertex
    eta2: np.ndarray
    theta: np.ndarray  # Q0 vertex -> Q20 vertex
    decompositions: dict
    measures: dict
    failures: list[tuple[str, object]]

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        return {
            "format": "hullcube.diagram/1",
            "F": list(self.F),
            "F_prime": list(self.F2),
            "domains": list(self.data.hft.domains),
            "domains_prime": list(self.data2.hft.domains),
            "Q": {"vertices": self.Q.n, "walls": self.Q.cx.h},
            "Q_prime": {"vertices": self.Q2.n, "walls": self.Q2.cx.h},
            "eta": self.eta.tolist(),
            "eta_prime": self.eta2.tolist(),
            "theta": self.theta.tolist(),
            "measures": self.measures,
            "failures": [{"check": c, "witness": _plain(w)} for c, w in self.failures],
        }


def _plain(x: object) -> object:
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (frozenset, set)):
        return sorted(_plain(v) for v in x)
    return x


def _deletion_matches(Q: ConsistentSet, walls: list, eta_t: np.ndarray, Q0: ConsistentSet) -> tuple[bool, np.ndarray, object]:
    """Check that collapsing coordinates equals deleting the given walls, landing exactly on Q0."""
    _, vmap = delete_hyperplanes(Q.cx, walls)
    ids = np.array([Q0.index.get(tuple(t), -1) for t in eta_t.tolist()], dtype=np.int64)
    if (ids < 0).any():
        return False, ids, {"reason": "collapsed tuple not in the collapsed model", "vertex": int(np.flatnonzero(ids < 0)[0])}
    if len(set(ids.tolist())) != Q0.n:
        return False, ids, {"reason": "collapse not onto the collapsed model"}
    # same partition of Q vertices
    pairs = set(zip(vmap.tolist(), ids.tolist()))
    if len(pairs) != len(set(vmap.tolist())) or len(pairs) != len(set(ids.tolist())):
        return False, ids, {"reason": "fibres differ from the hyperplane deletion"}
    return True, ids, None


def stabler_pipeline(inst: HHSInstance, F: Sequence[int], F2: Sequence[int], params: ModelParams | None = None,
                     max_hull: int = 400, max_tuples: int = 300, seed: int = 0) -> DiagramBundle:
    F = tuple(sorted(set(int(f) for f in F)))
    F2 = tuple(sorted(set(int(f) for f in F2)))
    if not set(F) <= set(F2):
        raise ArgumentError("F must be contained in F'")
    if len(F2) > 10:
        raise CapacityError("F' too large", len(F2))
    failures: list[tuple[str, object]] = []
    data = build_hft(inst, F, params)
    data2 = build_hft(inst, F2, params)
    h, h2 = data.hft, data2.hft
    Q = consistent_set(h)
    Q2 = consistent_set(h2)
    pos2 = {U: i for i, U in enumerate(h2.domains)}
    if not set(h.domains) <= set(h2.domains):
        raise CheckFailure("relevant domains are not monotone", {"missing": sorted(set(h.domains) - set(h2.domains))})
    cols: list[Collapse] = []
    cols2: list[Collapse | None] = [None] * h2.m
    phis: list[np.ndarray] = []
    decs: dict = {}
    unstable = {}
    for i, U in enumerate(h.domains):
        j = pos2[U]
        dt, dt2 = data.dtrees[i], data2.dtrees[j]
        Tt, Tt2 = _thick_stable(dt), _thick_stable(dt2)
        Y = [y for y in dt.setup.Y]
        dec = decompose(Tt, Tt2, dt.setup.F, Y)
        decs[U] = dec
        if not dec.report.passed:
            failures.append(("decomposition", {"domain": U, "clauses": dec.report.failed()}))
        compL, compR = dec.complements()
        gl = [sorted({dt.q[n] for n in c}) for c in compL]
        gr = [sorted({dt2.q[n] for n in c}) for c in compR]
        cl = _collapse_groups(dt.ftree, gl)
        cr = _collapse_groups(dt2.ftree, gr)
        cols.append(cl)
        cols2[j] = cr
        unstable[U] = {"components": len([g for g in gl if len(g) > 1]) + len([g for g in gr if len(g) > 1]),
                       "max_diameter": int(max([dt.ftree.dist[np.ix_(g, g)].max() for g in gl] +
                                               [dt2.ftree.dist[np.ix_(g, g)].max() for g in gr] + [0]))}
        # Phi on collapsed vertices
        phi = np.full(cl.target.n, -1, dtype=np.int64)
        for a, c in enumerate(gl):
            b = dec.beta.get(a)
            if b is not None:
                phi[cl.eta[c[0]]] = cr.eta[gr[b][0]]
        for pr in dec.pairs:
            for a, b in zip(pr.left[1:-1], pr.right[1:-1]):
                phi[cl.eta[dt.q[a]]] = cr.eta[dt2.q[b]]
        if (phi < 0).any():
            failures.append(("theta-undefined", {"domain": U, "vertices": int((phi < 0).sum())}))
        phis.append(phi)
    new_hull_vertex = {}
    for j, U in enumerate(h2.domains):
        if cols2[j] is not None:
            continue
        t = data2.dtrees[j].ftree
        grp = t.hull([h2.marks[j][f] for f in F])
        c = _collapse_groups(t, [grp])
        cols2[j] = c
        new_hull_vertex[U] = int(c.eta[grp[0]])
        unstable[U] = {"components": 1 if len(grp) > 1 else 0, "max_diameter": int(t.dist[np.ix_(grp, grp)].max())}
    h0 = _push_hft(h, cols)
    h20 = _push_hft(h2, cols2)  # type: ignore[arg-type]
    for name, hh in (("collapsed-hft", h0), ("collapsed-hft-prime", h20)):
        bad = [c.name for c in check_hft(hh) if not c.passed]
        if bad:
            failures.append((name, bad))
    Q0 = consistent_set(h0)
    Q20 = consistent_set(h20)
    # eta, eta' as hyperplane deletions
    del1 = [(U, a, b) for i, U in enumerate(h.domains) for a, b in cols[i].deleted]
    del2 = [(U, a, b) for j, U in enumerate(h2.domains) for a, b in cols2[j].deleted]  # type: ignore[union-attr]
    et = np.stack([cols[i].eta[Q.tuples[:, i]] for i in range(h.m)], axis=1)
    et2 = np.stack([cols2[j].eta[Q2.tuples[:, j]] for j in range(h2.m)], axis=1)  # type: ignore[union-attr]
    ok, eta, why = _deletion_matches(Q, del1, et, Q0)
    if not ok:
        failures.append(("eta-deletion", why))
    ok2, eta2, why2 = _deletion_matches(Q2, del2, et2, Q20)
    if not ok2:
        failures.append(("eta-prime-deletion", why2))
    # theta
    img = np.zeros((Q0.n, h2.m), dtype=np.int64)
    for j, U in enumerate(h2.domains):
        if U in new_hull_vertex:
            img[:, j] = new_hull_vertex[U]
        else:
            i = h.domains.index(U)
            img[:, j] = np.maximum(phis[i][Q0.tuples[:, i]], 0)
    theta = np.array([Q20.index.get(tuple(t), -1) for t in img.tolist()], dtype=np.int64)
    if (theta < 0).any():
        failures.append(("theta-image", {"vertex": int(np.flatnonzero(theta < 0)[0])}))
        convex = None
    else:
        convex = convex_embedding_check(theta, Q0.cx, Q20.cx)
        if not convex.ok:
            failures.append(("theta-convex", convex.certificate))
    # left square, exactly
    hullF = np.array(inst.hull(list(F)), dtype=np.int64)
    psiF = data.psi(hullF)
    psiF2 = data2.psi(hullF)
    idF = np.array([Q.index.get(tuple(t), -1) for t in psiF.tolist()])
    idF2 = np.array([Q2.index.get(tuple(t), -1) for t in psiF2.tolist()])
    if (idF < 0).any() or (idF2 < 0).any():
        failures.append(("psi-image", {"outside": int(((idF < 0) | (idF2 < 0)).sum())}))
        square_bad = len(hullF)
    else:
        left = theta[eta[idF]] if (theta >= 0).all() else np.full(len(idF), -2)
        right = eta2[idF2]
        square_bad = int((left != right).sum())
        if square_bad:
            k = int(np.flatnonzero(left != right)[0])
            failures.append(("left-square", {"point": int(hullF[k])}))
    # coarse faces in the ambient metric
    rng = np.random.default_rng(seed)
    po = PsiOmega(data, Q, hullF, np.maximum(idF, 0))
    hullF2 = np.array(inst.hull(list(F2)), dtype=np.int64)
    po2 = PsiOmega(data2, Q2, hullF2, np.zeros(len(hullF2), dtype=np.int64))
    xs = hullF if len(hullF) <= max_hull else np.sort(rng.choice(hullF, max_hull, replace=False))
    faces = {}
    if (idF >= 0).all() and (idF2 >= 0).all():
        sel = np.searchsorted(hullF, xs)
        back = po.omega(idF[sel])
        faces["psi_F"] = _max_pair_dist(inst, back, xs)
        back2 = po2.omega(idF2[sel])
        faces["psi_F_prime_on_hull_F"] = _max_pair_dist(inst, back2, xs)
    qs = np.arange(Q.n) if Q.n <= max_tuples else np.sort(rng.choice(Q.n, max_tuples, replace=False))
    sec0 = _section(eta, Q0.n)
    faces["upper_eta"] = _max_pair_dist(inst, po.omega(qs), po.omega(sec0[eta[qs]]))
    qs2 = np.arange(Q2.n) if Q2.n <= max_tuples else np.sort(rng.choice(Q2.n, max_tuples, replace=False))
    sec20 = _section(eta2, Q20.n)
    faces["lower_eta_prime"] = _max_pair_dist(inst, po2.omega(qs2), po2.omega(sec20[eta2[qs2]]))
    if (theta >= 0).all():
        q0s = np.arange(Q0.n) if Q0.n <= max_tuples else np.sort(rng.choice(Q0.n, max_tuples, replace=False))
        faces["middle_theta"] = _max_pair_dist(inst, po.omega(sec0[q0s]), po2.omega(sec20[theta[q0s]]))
    measures = {
        "deleted_eta": len(del1),
        "deleted_eta_prime": len(del2),
        "Q": Q.n, "Q_prime": Q2.n, "Q0": Q0.n, "Q0_prime": Q20.n,
        "theta_convex": bool(convex.ok) if convex is not None else False,
        "left_square_mismatches": square_bad,
        "faces": faces,
        "max_face": max(faces.values()) if faces else 0,
        "unstable": unstable,
        "unstable_domains": sum(1 for u in unstable.values() if u["components"]),
        "relevant": list(data.relevant),
        "relevant_prime": list(data2.relevant),
    }
    return DiagramBundle(F, F2, data, data2, Q, Q2, Q0, Q20, eta, eta2, theta, decs, measures, failures)


def _section(vmap: np.ndarray, n: int) -> np.ndarray:
    """Least preimage of each target vertex."""
    sec = np.full(n, -1, dtype=np.int64)
    for v in range(len(vmap) - 1, -1, -1):
        sec[vmap[v]] = v
    return sec


def _max_pair_dist(inst: HHSInstance, a: np.ndarray, b: np.ndarray) -> int:
    if len(a) == 0:
        return 0
    out = 0
    for s in range(0, len(a), 512):
        D = inst.dist_sub(a[s:s + 512], b[s:s + 512])
        out = max(out, int(np.diagonal(D).max()))
    return out


# ---------------------------------------------------------------------------
# model distances between two points

def model_distances(inst: HHSInstance, a: int, b: int, ps: Sequence[float] = (1,), params: ModelParams | None = None) -> list[float]:
    """Distances between the marked tuples of a and b in the two-point model, one per exponent."""
    if a == b:
        return [0.0 for _ in ps]
    data = build_hft(inst, [a, b], params)
    h = data.hft
    ta = [h.marks[i][a] for i in range(h.m)]
    tb = [h.marks[i][b] for i in range(h.m)]
    per = np.array([h.trees[i].dist[ta[i], tb[i]] for i in range(h.m)], dtype=float)
    constrained = any(allowed_matrix(h, i, j) is not None for i in range(h.m) for j in range(h.m) if i != j)
    Q = None
    out = []
    for p in ps:
        if p == 1:
            out.append(float(per.sum()))
        elif not constrained:
            out.append(float(per.max()) if np.isinf(p) else float((per ** p).sum() ** (1.0 / p)))
        else:
            from .cube import lp_distance

            Q = Q or consistent_set(h)
            out.append(lp_distance(Q.cx, Q.id_of(ta), Q.id_of(tb), p))
    return out


def model_distance(inst: HHSInstance, a: int, b: int, p: float = 1, params: ModelParams | None = None) -> float:
    """Distance between the marked tuples of a and b in the two-point model."""
    return model_distances(inst, a, b, (p,), params)[0]
