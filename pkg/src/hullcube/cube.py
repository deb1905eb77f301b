"""Finite CAT(0) cube complexes stored as vertex orientation tables over a hyperplane list."""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from itertools import combinations
from typing import Hashable, Iterable, Sequence

import networkx as nx
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path

from .errors import ArgumentError, CapacityError, InstanceFormatError

MAX_VERTICES = 200_000
CUBE_FORMAT = "hullcube.cube/1"
_SEED = np.random.default_rng(0x5EED).integers(1, 2**63 - 1, size=1 << 16, dtype=np.int64).astype(np.uint64)


def _weights(h: int) -> np.ndarray:
    if h > len(_SEED):
        raise CapacityError("too many hyperplanes", h)
    return _SEED[:h]


def _hashable(x: object) -> Hashable:
    return tuple(_hashable(v) for v in x) if isinstance(x, list) else x


class CubeComplex:
    """Vertices are rows of a 0/1 orientation matrix, one column per hyperplane."""

    def __init__(self, walls: Sequence[Hashable], orient: np.ndarray, check: bool = True) -> None:
        orient = np.asarray(orient, dtype=np.uint8)
        if orient.ndim != 2:
            if len(walls) == 0:
                raise ArgumentError("orientation table without hyperplanes needs an explicit row count")
            orient = orient.reshape(-1, len(walls))
        if orient.shape[1] != len(walls):
            raise ArgumentError("orientation table does not match the hyperplane list", list(orient.shape))
        orient = np.ascontiguousarray(orient)
        if orient.shape[0] > MAX_VERTICES:
            raise CapacityError("cube complex exceeds the vertex guard", orient.shape[0])
        self.walls = list(walls)
        self.orient = orient
        self._wall_index = {w: i for i, w in enumerate(self.walls)}
        if len(self._wall_index) != len(self.walls):
            raise ArgumentError("duplicate hyperplane labels")
        self.keys = self._hash(orient)
        order = np.argsort(self.keys, kind="stable")
        self._sorted_keys = self.keys[order]
        self._sorted_ids = order
        if check and len(self.keys) > 1 and (np.diff(self._sorted_keys) == 0).any():
            raise ArgumentError("duplicate vertex orientations")
        self._edges: np.ndarray | None = None
        self._edge_wall: np.ndarray | None = None
        self._crossing: np.ndarray | None = None
        self._factors: list | None = None

    def _hash(self, rows: np.ndarray) -> np.ndarray:
        if rows.shape[1] == 0:
            return np.zeros(rows.shape[0], dtype=np.uint64)
        w = _weights(rows.shape[1])
        with np.errstate(over="ignore"):
            return (rows.astype(np.uint64) * w).sum(axis=1, dtype=np.uint64)

    # basic access -------------------------------------------------------------
    @property
    def n(self) -> int:
        return self.orient.shape[0]

    @property
    def h(self) -> int:
        return len(self.walls)

    def wall_id(self, label: Hashable) -> int:
        try:
            return self._wall_index[label]
        except KeyError:
            raise ArgumentError("unknown hyperplane", label) from None

    def lookup(self, rows: np.ndarray) -> np.ndarray:
        """Vertex ids of orientation rows, -1 where the row is not a vertex."""
        rows = np.asarray(rows, dtype=np.uint8)
        if self.h == 0:
            rows = rows.reshape(rows.shape[0] if rows.ndim > 1 else 1, 0)
        else:
            rows = rows.reshape(-1, self.h)
        keys = self._hash(rows)
        pos = np.searchsorted(self._sorted_keys, keys)
        pos = np.minimum(pos, len(self._sorted_keys) - 1)
        ids = self._sorted_ids[pos].astype(np.int64)
        ok = self._sorted_keys[pos] == keys
        ok &= (self.orient[ids] == rows).all(axis=1)
        return np.where(ok, ids, -1)

    def vertex_of(self, row: Sequence[int]) -> int | None:
        v = int(self.lookup(np.asarray(row)[None, :])[0])
        return None if v < 0 else v

    # 1-skeleton ----------------------------------------------------------------
    def _build_edges(self) -> None:
        us, vs, ws = [], [], []
        w = _weights(self.h)
        zero = np.flatnonzero
        for j in range(self.h):
            lo = zero(self.orient[:, j] == 0)
            if lo.size == 0:
                continue
            with np.errstate(over="ignore"):
                target = self.keys[lo] + w[j]
            pos = np.minimum(np.searchsorted(self._sorted_keys, target), len(self._sorted_keys) - 1)
            hit = self._sorted_keys[pos] == target
            a = lo[hit]
            b = self._sorted_ids[pos[hit]]
            us.append(a)
            vs.append(b)
            ws.append(np.full(a.size, j))
        if us:
            e = np.stack([np.concatenate(us), np.concatenate(vs)], axis=1)
            ew = np.concatenate(ws)
        else:
            e = np.zeros((0, 2), dtype=np.int64)
            ew = np.zeros(0, dtype=np.int64)
        if len(e):
            diff = (self.orient[e[:, 0]] != self.orient[e[:, 1]]).sum(axis=1)
            keep = diff == 1
            e, ew = e[keep], ew[keep]
        self._edges, self._edge_wall = e.astype(np.int64), ew.astype(np.int64)

    @property
    def edges(self) -> np.ndarray:
        if self._edges is None:
            self._build_edges()
        return self._edges

    @property
    def edge_walls(self) -> np.ndarray:
        if self._edge_wall is None:
            self._build_edges()
        return self._edge_wall

    def adjacency_matrix(self):
        e = self.edges
        data = np.ones(2 * len(e))
        return coo_matrix((data, (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(self.n, self.n)).tocsr()

    def graph_distances(self, sources: Sequence[int] | None = None) -> np.ndarray:
        """Edge-path distances in the 1-skeleton (breadth-first, independent of orientations)."""
        D = shortest_path(self.adjacency_matrix(), method="D", unweighted=True, indices=sources)
        return D

    def connected(self) -> bool:
        if self.n <= 1:
            return True
        D = self.graph_distances([0])
        return bool(np.isfinite(D).all())

    def neighbors(self, v: int) -> list[int]:
        e = self.edges
        return sorted(np.r_[e[e[:, 0] == v, 1], e[e[:, 1] == v, 0]].tolist())

    # metric and median ---------------------------------------------------------
    def l1(self, x: int, y: int) -> int:
        return int((self.orient[x] != self.orient[y]).sum())

    def l1_rows(self, xs: Sequence[int], ys: Sequence[int]) -> np.ndarray:
        a = self.orient[np.asarray(xs)].astype(np.int32)
        b = self.orient[np.asarray(ys)].astype(np.int32)
        return (a.shape[1] - (a @ b.T) - ((1 - a) @ (1 - b).T)).astype(np.int64)

    def median(self, x: int, y: int, z: int) -> int | None:
        row = ((self.orient[x].astype(np.int16) + self.orient[y] + self.orient[z]) >= 2).astype(np.uint8)
        return self.vertex_of(row)

    def median_closed(self, max_triples: int = 20000, seed: int = 0) -> tuple[bool, tuple | None]:
        """Exhaustive for small complexes, seeded sample of triples otherwise."""
        n = self.n
        if n ** 3 <= max_triples:
            trip = np.array([(a, b, c) for a in range(n) for b in range(n) for c in range(n)]).reshape(-1, 3)
        else:
            trip = np.random.default_rng(seed).integers(0, n, size=(max_triples, 3))
        if len(trip) == 0:
            return True, None
        rows = ((self.orient[trip[:, 0]].astype(np.int16) + self.orient[trip[:, 1]] + self.orient[trip[:, 2]]) >= 2).astype(np.uint8)
        ids = self.lookup(rows)
        bad = np.flatnonzero(ids < 0)
        if bad.size:
            return False, tuple(int(t) for t in trip[bad[0]])
        return True, None

    # crossing structure ------------------------------------------------------------
    @property
    def crossing(self) -> np.ndarray:
        if self._crossing is None:
            o = self.orient.astype(np.int32)
            one = o.T @ o
            col = o.sum(axis=0)
            n = self.n
            a10 = col[:, None] - one
            a01 = col[None, :] - one
            a00 = n - one - a10 - a01
            c = (one > 0) & (a10 > 0) & (a01 > 0) & (a00 > 0)
            np.fill_diagonal(c, False)
            self._crossing = c
        return self._crossing

    @property
    def dim(self) -> int:
        if self.h == 0:
            return 0
        g = nx.Graph()
        g.add_nodes_from(range(self.h))
        g.add_edges_from(zip(*np.nonzero(np.triu(self.crossing))))
        return max(len(c) for c in nx.find_cliques(g))

    def factorization(self) -> list[list[int]]:
        """Wall classes of the product decomposition: components of the non-crossing graph."""
        if self._factors is None:
            H = self.h
            nc = ~self.crossing
            np.fill_diagonal(nc, False)
            g = nx.Graph()
            g.add_nodes_from(range(H))
            g.add_edges_from(zip(*np.nonzero(np.triu(nc))))
            self._factors = sorted((sorted(c) for c in nx.connected_components(g)), key=lambda c: c[0])
        return self._factors

    def product_of_trees(self) -> bool:
        """Full product of factors, each factor free of internal crossings (a tree)."""
        facs = self.factorization()
        if not facs:
            return True
        sizes = []
        for cls in facs:
            sub = self.orient[:, cls]
            if self.crossing[np.ix_(cls, cls)].any():
                return False
            sizes.append(len(np.unique(sub, axis=0)))
        return int(np.prod(sizes, dtype=object)) == self.n

    # serialization -------------------------------------------------------------
    def to_json(self) -> dict:
        return {"format": CUBE_FORMAT, "walls": [_jsonable(w) for w in self.walls],
                "vertices": ["".join(map(str, r)) for r in self.orient.tolist()]}

    @classmethod
    def from_json(cls, doc: dict) -> "CubeComplex":
        if doc.get("format") != CUBE_FORMAT:
            raise InstanceFormatError("not a cube complex document", {"path": "format"})
        walls = [_hashable(w) for w in doc["walls"]]
        orient = np.array([[int(c) for c in s] for s in doc["vertices"]], dtype=np.uint8).reshape(len(doc["vertices"]), len(walls))
        return cls(walls, orient)

    def to_dot(self, name: str = "Q", labels: Sequence[str] | None = None) -> str:
        lines = [f"graph {name} {{"]
        for v in range(self.n):
            lab = labels[v] if labels is not None else "".join(map(str, self.orient[v].tolist()))
            lines.append(f'  v{v} [label="{lab}"];')
        for (a, b), w in zip(self.edges.tolist(), self.edge_walls.tolist()):
            lines.append(f'  v{a} -- v{b} [label="{w}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _jsonable(w: Hashable) -> object:
    if isinstance(w, tuple):
        return [_jsonable(x) for x in w]
    if isinstance(w, frozenset):
        return sorted(_jsonable(x) for x in w)
    if isinstance(w, np.integer):
        return int(w)
    return w


# ---------------------------------------------------------------------------
# duality

def dual_cube_complex(points: Sequence[Hashable], walls: Sequence[Iterable[Hashable]], labels: Sequence[Hashable] | None = None, seed: Hashable | None = None) -> CubeComplex:
    """Consistent orientations of a finite wallspace, reached by single flips from a principal one.

    Each wall is given by one of its sides; the other side is the complement in points.
    """
    pts = list(points)
    idx = {p: i for i, p in enumerate(pts)}
    H = len(walls)
    P = len(pts)
    side = np.zeros((H, P), dtype=bool)
    for j, w in enumerate(walls):
        for p in w:
            if p not in idx:
                raise ArgumentError("wall mentions an unknown point", p)
            side[j, idx[p]] = True
        if side[j].all() or not side[j].any():
            raise ArgumentError("degenerate wall with an empty side", j)
    # halfspace 2j+s is {points with side == s}; s = 1 means the listed side
    half = np.zeros((2 * H, P), dtype=bool)
    half[0::2] = ~side
    half[1::2] = side
    meet = (half.astype(np.int32) @ half.T.astype(np.int32)) > 0
    meet_mask = [sum(1 << int(k) for k in np.flatnonzero(meet[a])) for a in range(2 * H)]
    start = idx[seed] if seed is not None else 0
    s0 = side[:, start].astype(np.uint8)
    chosen0 = sum(1 << (2 * j + int(s0[j])) for j in range(H))
    seen = {chosen0}
    frontier = [chosen0]
    while frontier:
        nxt = []
        for ch in frontier:
            for j in range(H):
                cur = 2 * j + 1 if ch >> (2 * j + 1) & 1 else 2 * j
                new = cur ^ 1
                rest = ch & ~(1 << cur)
                if rest & meet_mask[new] != rest:
                    continue
                w = rest | (1 << new)
                if w not in seen:
                    seen.add(w)
                    if len(seen) > MAX_VERTICES:
                        raise CapacityError("dual complex exceeds the vertex guard", len(seen))
                    nxt.append(w)
        frontier = nxt
    verts = sorted(seen)
    orient = np.array([[(c >> (2 * j + 1)) & 1 for j in range(H)] for c in verts], dtype=np.uint8).reshape(len(verts), H)
    return CubeComplex(list(labels) if labels is not None else list(range(H)), orient)


def principal_vertex(cx: CubeComplex, points: Sequence[Hashable], walls: Sequence[Iterable[Hashable]], p: Hashable) -> int | None:
    row = np.array([1 if p in set(w) else 0 for w in walls], dtype=np.uint8)
    return cx.vertex_of(row)


# ---------------------------------------------------------------------------
# lp distances

@dataclass
class LpResult:
    value: float
    exact: bool
    h: float | None = None
    refined: float | None = None

    @property
    def error_estimate(self) -> float:
        return 0.0 if self.exact or self.refined is None else abs(self.value - self.refined)


def _as_point(cx: CubeComplex, x: int | Sequence[float]) -> np.ndarray:
    if isinstance(x, (int, np.integer)):
        if not 0 <= int(x) < cx.n:
            raise ArgumentError("vertex outside complex", int(x))
        return cx.orient[int(x)].astype(float)
    a = np.asarray(x, dtype=float)
    if a.shape != (cx.h,) or (a < 0).any() or (a > 1).any():
        raise ArgumentError("point outside complex")
    frac = np.flatnonzero((a > 0) & (a < 1))
    if len(frac) > 12:
        raise ArgumentError("point outside complex")
    base = (a >= 1).astype(np.uint8)
    for bits in range(1 << len(frac)):
        row = base.copy()
        for k, j in enumerate(frac):
            row[j] = (bits >> k) & 1
        if cx.vertex_of(row) is None:
            raise ArgumentError("point outside complex", {"missing corner": row.tolist()})
    return a


def lp_distance(cx: CubeComplex, x: int | Sequence[float], y: int | Sequence[float], p: float, h: float = 0.25) -> float:
    return lp_distance_detail(cx, x, y, p, h).value


def lp_distance_detail(cx: CubeComplex, x: int | Sequence[float], y: int | Sequence[float], p: float, h: float = 0.25) -> LpResult:
    if p not in (1, 2, np.inf, float("inf")):
        raise ArgumentError("p must be 1, 2 or infinity", p)
    a, b = _as_point(cx, x), _as_point(cx, y)
    if p == 1:
        return LpResult(float(np.abs(a - b).sum()), True)
    if cx.product_of_trees():
        per = np.array([np.abs(a[c] - b[c]).sum() for c in cx.factorization()]) if cx.h else np.zeros(1)
        val = float(per.max()) if np.isinf(p) else float(np.sqrt((per ** 2).sum()))
        return LpResult(val, True)
    v1 = _subdivision_distance(cx, a, b, p, h)
    v2 = _subdivision_distance(cx, a, b, p, h / 2)
    return LpResult(v1, False, h, v2)


def maximal_cubes(cx: CubeComplex, max_dim: int = 6) -> list[tuple[int, tuple[int, ...]]]:
    """Cubes as (base vertex, walls) with the base on the 0 side of every spanning wall."""
    out = []
    for v in range(cx.n):
        up = _up_walls(cx, v)
        found = [()]
        level = [()]
        while level:
            nxt = []
            for S in level:
                for j in up:
                    if S and j <= S[-1]:
                        continue
                    T = S + (j,)
                    if len(T) <= max_dim and all(_corner_exists(cx, v, T, bits) for bits in range(1 << len(T))):
                        nxt.append(T)
            found.extend(nxt)
            level = nxt
        for S in found:
            if not any(set(S) < set(T) for T in found):
                out.append((v, S))
    # drop cubes that are faces of cubes based elsewhere
    keyed = {}
    for v, S in out:
        keyed[(v, S)] = _cube_vertices(cx, v, S)
    result = []
    items = list(keyed.items())
    for (v, S), verts in items:
        if not any(len(T) > len(S) and verts <= w for (u, T), w in items):
            result.append((v, S))
    return result


def _up_walls(cx: CubeComplex, v: int) -> list[int]:
    e, w = cx.edges, cx.edge_walls
    ws = np.r_[w[e[:, 0] == v], w[e[:, 1] == v]]
    return sorted(int(j) for j in ws if cx.orient[v, j] == 0)


def _corner_exists(cx: CubeComplex, v: int, S: tuple[int, ...], bits: int) -> bool:
    row = cx.orient[v].copy()
    for k, j in enumerate(S):
        row[j] = (bits >> k) & 1
    return cx.vertex_of(row) is not None


def _cube_vertices(cx: CubeComplex, v: int, S: tuple[int, ...]) -> frozenset[int]:
    out = set()
    for bits in range(1 << len(S)):
        row = cx.orient[v].copy()
        for k, j in enumerate(S):
            row[j] = (bits >> k) & 1
        out.add(cx.vertex_of(row))
    return frozenset(out)


def _subdivision_distance(cx: CubeComplex, a: np.ndarray, b: np.ndarray, p: float, h: float) -> float:
    N = int(round(1 / h))
    if abs(N * h - 1) > 1e-12:
        raise ArgumentError("step must divide 1", h)
    cubes = maximal_cubes(cx)
    keyidx: dict[bytes, int] = {}
    coords: list[np.ndarray] = []
    groups: list[list[int]] = []

    def node(c: np.ndarray) -> int:
        k = np.round(c * N).astype(np.int32).tobytes()
        if k not in keyidx:
            keyidx[k] = len(coords)
            coords.append(c)
        return keyidx[k]

    total = 0
    for v, S in cubes:
        total += (N + 1) ** len(S)
        if total > 400_000:
            raise CapacityError("subdivision lattice too large", total)
        base = cx.orient[v].astype(float)
        members = []
        for t in np.ndindex(*([N + 1] * len(S))):
            c = base.copy()
            for k, j in enumerate(S):
                c[j] = t[k] / N
            members.append(node(c))
        extra = []
        for q in (a, b):
            inside = all(abs(q[j] - base[j]) < 1e-12 for j in range(cx.h) if j not in S)
            if inside:
                extra.append(q)
        for q in extra:
            k = ("q", q.tobytes())
            if k not in keyidx:
                keyidx[k] = len(coords)
                coords.append(q)
            members.append(keyidx[k])
        groups.append(sorted(set(members)))
    src = keyidx.get(("q", a.tobytes()), keyidx.get(np.round(a * N).astype(np.int32).tobytes()))
    dst = keyidx.get(("q", b.tobytes()), keyidx.get(np.round(b * N).astype(np.int32).tobytes()))
    if src is None or dst is None:
        raise ArgumentError("point outside complex")
    C = np.array(coords)
    adj: dict[int, list[tuple[int, float]]] = {}
    for g in groups:
        G = C[g]
        diff = np.abs(G[:, None, :] - G[None, :, :])
        w = diff.max(axis=2) if np.isinf(p) else np.sqrt((diff ** 2).sum(axis=2))
        for i, u in enumerate(g):
            lst = adj.setdefault(u, [])
            for k2, v2 in enumerate(g):
                if v2 != u:
                    lst.append((v2, float(w[i, k2])))
    dist = {src: 0.0}
    heap = [(0.0, src)]
    while heap:
        d0, u = heapq.heappop(heap)
        if u == dst:
            return d0
        if d0 > dist.get(u, np.inf):
            continue
        for v2, w in adj.get(u, []):
            nd = d0 + w
            if nd < dist.get(v2, np.inf) - 1e-15:
                dist[v2] = nd
                heapq.heappush(heap, (nd, v2))
    raise ArgumentError("points in different components")


# ---------------------------------------------------------------------------
# hyperplane deletion and convexity

def delete_hyperplanes(cx: CubeComplex, G: Iterable[Hashable]) -> tuple[CubeComplex, np.ndarray]:
    """Restriction quotient forgetting the walls in G; returns the quotient and the vertex map."""
    drop = sorted({cx.wall_id(g) for g in G})
    keep = [j for j in range(cx.h) if j not in set(drop)]
    sub = cx.orient[:, keep]
    _, first, inv = np.unique(sub, axis=0, return_index=True, return_inverse=True)
    inv = np.asarray(inv).reshape(-1)
    # renumber quotient vertices by first occurrence for determinism
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    vmap = rank[inv]
    rows = sub[first[order]]
    return CubeComplex([cx.walls[j] for j in keep], rows), vmap.astype(np.int64)


@dataclass
class ConvexityResult:
    ok: bool
    certificate: dict | None = None

    def __bool__(self) -> bool:
        return self.ok


def halfspace_hull(cx: CubeComplex, S: Sequence[int]) -> np.ndarray:
    """Vertices lying on every side that contains all of S."""
    S = np.asarray(sorted(set(int(s) for s in S)), dtype=np.int64)
    if S.size == 0:
        return S
    sub = cx.orient[S]
    const = np.flatnonzero((sub == sub[0]).all(axis=0))
    mask = (cx.orient[:, const] == sub[0, const]).all(axis=1)
    return np.flatnonzero(mask)


def convex_embedding_check(vmap: Sequence[int], src: CubeComplex, dst: CubeComplex) -> ConvexityResult:
    m = np.asarray(vmap, dtype=np.int64)
    if m.shape != (src.n,):
        return ConvexityResult(False, {"reason": "map not defined on every vertex", "size": int(m.size)})
    if ((m < 0) | (m >= dst.n)).any():
        return ConvexityResult(False, {"reason": "image outside target", "vertex": int(np.flatnonzero((m < 0) | (m >= dst.n))[0])})
    uniq, counts = np.unique(m, return_counts=True)
    if (counts > 1).any():
        t = uniq[counts > 1][0]
        pair = np.flatnonzero(m == t)[:2].tolist()
        return ConvexityResult(False, {"reason": "not injective", "pair": pair})
    e = src.edges
    if len(e):
        dd = (dst.orient[m[e[:, 0]]] != dst.orient[m[e[:, 1]]]).sum(axis=1)
        bad = np.flatnonzero(dd != 1)
        if bad.size:
            return ConvexityResult(False, {"reason": "edge not preserved", "pair": e[bad[0]].tolist()})
    hull = halfspace_hull(dst, m)
    if hull.size != m.size:
        image = set(m.tolist())
        extra = next(int(v) for v in hull if int(v) not in image)
        cert = {"reason": "image not geodesically closed", "outside": extra}
        o = dst.orient
        for a, b in combinations(sorted(image), 2):
            if ((o[extra] == o[a]) | (o[extra] == o[b])).all():
                cert["pair"] = [a, b]
                break
        return ConvexityResult(False, cert)
    return ConvexityResult(True, None)


def complex_from_tree_product(trees: Sequence[nx.Graph], tuples: Sequence[tuple], labels: Sequence[Hashable] | None = None) -> tuple[CubeComplex, list[tuple[int, object]]]:
    """Cube complex of a set of tuples in a product of trees; walls are (factor, edge) pairs."""
    walls: list[tuple[int, object]] = []
    cols = []
    tup = list(tuples)
    for k, T in enumerate(trees):
        nodes = [t[k] for t in tup]
        for u, v in sorted(T.edges(), key=lambda e: (repr(e[0]), repr(e[1]))):
            H = T.copy()
            H.remove_edge(u, v)
            side = nx.node_connected_component(H, v)
            walls.append((k, (u, v)))
            cols.append(np.array([1 if x in side else 0 for x in nodes], dtype=np.uint8))
    orient = np.stack(cols, axis=1) if cols else np.zeros((len(tup), 0), dtype=np.uint8)
    return CubeComplex(list(labels) if labels is not None else walls, orient), walls


def export_json(cx: CubeComplex) -> str:
    return json.dumps(cx.to_json(), sort_keys=True)
