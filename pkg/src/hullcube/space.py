"""Finite weighted graphs with exact distances, plus planar comparison geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import ArgumentError, CapacityError, GeometryError, InstanceFormatError

GRAPH_FORMAT = "hullcube.graph/1"
DELTA_GUARD = 400
TOL = 1e-9


class MetricGraph:
    """Connected graph on vertices 0..n-1 with positive integer edge weights.

    The full distance table is computed once at construction.
    """

    def __init__(self, n: int, edges: Iterable[Sequence[int]]) -> None:
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise InstanceFormatError("vertex count must be a positive integer", n)
        n = int(n)
        seen: dict[tuple[int, int], int] = {}
        for e in edges:
            if len(e) != 3:
                raise InstanceFormatError("edge must be [u, v, w]", list(e))
            u, v, w = (int(t) for t in e)
            if not (0 <= u < n and 0 <= v < n):
                raise InstanceFormatError("edge endpoint out of range", [u, v])
            if u == v:
                raise InstanceFormatError("self-loop", [u, v])
            if w <= 0:
                raise InstanceFormatError("nonpositive weight", [u, v, w])
            key = (min(u, v), max(u, v))
            if key in seen:
                raise InstanceFormatError("duplicate edge", list(key))
            seen[key] = w
        self.n = n
        self.edges: tuple[tuple[int, int, int], ...] = tuple(
            sorted((u, v, w) for (u, v), w in seen.items())
        )
        adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for u, v, w in self.edges:
            adj[u].append((v, w))
            adj[v].append((u, w))
        self.adj = [sorted(a) for a in adj]
        self._weight = dict(seen)
        if self.edges:
            rows = [e[0] for e in self.edges] + [e[1] for e in self.edges]
            cols = [e[1] for e in self.edges] + [e[0] for e in self.edges]
            vals = [e[2] for e in self.edges] * 2
            mat = csr_matrix((vals, (rows, cols)), shape=(n, n))
        else:
            mat = csr_matrix((n, n))
        ncomp, _ = connected_components(mat, directed=False)
        if ncomp != 1:
            raise InstanceFormatError("graph is disconnected", {"components": int(ncomp)})
        dist = shortest_path(mat, method="D", directed=False)
        self.dist = np.rint(dist).astype(np.int64)
        self.dist.setflags(write=False)
        self._next: np.ndarray | None = None

    # construction helpers -------------------------------------------------
    @classmethod
    def from_json(cls, doc: dict) -> "MetricGraph":
        if not isinstance(doc, dict) or "vertices" not in doc or "edges" not in doc:
            raise InstanceFormatError("graph document needs 'vertices' and 'edges'", doc)
        if not isinstance(doc["edges"], list):
            raise InstanceFormatError("'edges' must be a list", doc["edges"])
        return cls(doc["vertices"], doc["edges"])

    def to_json(self) -> dict:
        return {"format": GRAPH_FORMAT, "vertices": self.n, "edges": [list(e) for e in self.edges]}

    def __eq__(self, other: object) -> bool:
        return isinstance(other, MetricGraph) and self.n == other.n and self.edges == other.edges

    def __hash__(self) -> int:
        return hash((self.n, self.edges))

    def __repr__(self) -> str:
        return f"MetricGraph(n={self.n}, m={len(self.edges)})"

    # queries -----------------------------------------------------------------
    def weight(self, u: int, v: int) -> int:
        return self._weight[(min(u, v), max(u, v))]

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self._weight

    def d(self, u: int, v: int) -> int:
        return int(self.dist[u, v])

    @property
    def next_hop(self) -> np.ndarray:
        """next_hop[u, t] = least neighbor of u on a shortest path to t."""
        if self._next is None:
            nxt = np.full((self.n, self.n), -1, dtype=np.int32)
            D = self.dist
            arcs = [(u, v, w) for u, v, w in self.edges] + [(v, u, w) for u, v, w in self.edges]
            # assign larger neighbors first so the least one wins
            for u, x, w in sorted(arcs, key=lambda a: -a[1]):
                mask = D[x] + w == D[u]
                nxt[u, mask] = x
            self._next = nxt
        return self._next

    def geodesic(self, u: int, v: int) -> list[int]:
        """Lexicographically least shortest vertex sequence from u to v."""
        nxt = self.next_hop
        path = [u]
        cur = u
        while cur != v:
            cur = int(nxt[cur, v])
            path.append(cur)
        return path

    def set_distance(self, A: Iterable[int], B: Iterable[int]) -> int:
        a = np.fromiter(A, dtype=np.int64)
        b = np.fromiter(B, dtype=np.int64)
        if a.size == 0 or b.size == 0:
            raise ArgumentError("distance to an empty set")
        return int(self.dist[np.ix_(a, b)].min())

    def distance_to_set(self, A: Iterable[int]) -> np.ndarray:
        a = np.fromiter(A, dtype=np.int64)
        if a.size == 0:
            raise ArgumentError("distance to an empty set")
        return self.dist[a].min(axis=0)

    def neighborhood(self, A: Iterable[int], r: float) -> set[int]:
        return set(np.flatnonzero(self.distance_to_set(A) <= r).tolist())

    def project(self, v: int, target: Iterable[int]) -> int:
        """Closest point of ``target`` to v (least id on ties)."""
        t = sorted(set(target))
        if not t:
            raise ArgumentError("projection onto an empty set")
        row = self.dist[v, t]
        return t[int(np.argmin(row))]

    def diameter(self, A: Iterable[int] | None = None) -> int:
        if A is None:
            return int(self.dist.max())
        a = sorted(set(A))
        if not a:
            return 0
        return int(self.dist[np.ix_(a, a)].max())

    def path_vertices_between(self, A: Iterable[int], B: Iterable[int]) -> list[list[int]]:
        """Tie-broken geodesics between all closest pairs of A x B."""
        a = sorted(set(A))
        b = sorted(set(B))
        sub = self.dist[np.ix_(a, b)]
        m = sub.min()
        out = []
        for i, j in zip(*np.nonzero(sub == m)):
            out.append(self.geodesic(a[i], b[j]))
        return out


def hull(graph: MetricGraph, F: Iterable[int]) -> set[int]:
    """Union of all geodesics between points of F."""
    pts = sorted(set(F))
    if not pts:
        raise ArgumentError("hull of an empty set")
    D = graph.dist
    rows = D[pts]
    mask = np.zeros(graph.n, dtype=bool)
    for i, x in enumerate(pts):
        for j in range(i, len(pts)):
            y = pts[j]
            mask |= rows[i] + rows[j] == D[x, y]
    return set(np.flatnonzero(mask).tolist())


def hyperbolicity_delta(graph: MetricGraph) -> Fraction:
    """Exact four-point hyperbolicity constant."""
    n = graph.n
    if n > DELTA_GUARD:
        raise CapacityError(f"four-point scan limited to {DELTA_GUARD} vertices", n)
    D = graph.dist
    best = 0
    for x in range(n):
        for y in range(x + 1, n):
            s1 = D[x, y] + D
            s2 = D[x][:, None] + D[y][None, :]
            s3 = D[y][:, None] + D[x][None, :]
            st = np.sort(np.stack([s1, s2, s3]), axis=0)
            gap = int((st[2] - st[1]).max())
            best = max(best, gap)
    return Fraction(best, 2)


class DiscreteQuasiGeodesic:
    """Vertex sequence indexed by 0..a with (1, C) quasi-isometric control."""

    def __init__(self, graph: MetricGraph, vertices: Sequence[int], C: float = 0, check: bool = True) -> None:
        if not vertices:
            raise ArgumentError("empty quasigeodesic")
        if C < 0:
            raise ArgumentError("negative constant", C)
        self.graph = graph
        self.vertices = tuple(int(v) for v in vertices)
        self.C = C
        if check:
            bad = self.violation()
            if bad is not None:
                raise GeometryError("not a (1,C)-quasigeodesic", bad)

    def __len__(self) -> int:
        return len(self.vertices)

    def __getitem__(self, t: int) -> int:
        return self.vertices[t]

    @property
    def length(self) -> int:
        return len(self.vertices) - 1

    def violation(self) -> tuple[int, int] | None:
        idx = np.array(self.vertices)
        sub = self.graph.dist[np.ix_(idx, idx)]
        t = np.arange(len(idx))
        gap = np.abs(t[:, None] - t[None, :])
        bad = (sub < gap - self.C - TOL) | (sub > gap + self.C + TOL)
        if bad.any():
            s, u = np.argwhere(bad)[0]
            return int(s), int(u)
        return None


@dataclass(frozen=True)
class ComparisonTriangle:
    """Euclidean triangle with side lengths d(x,y), d(y,z), d(z,x).

    Placement: x at the origin, y on the positive horizontal axis, z in the
    closed upper half-plane.
    """

    dxy: float
    dyz: float
    dzx: float
    points: tuple[tuple[float, float], tuple[float, float], tuple[float, float]]

    @classmethod
    def from_lengths(cls, dxy: float, dyz: float, dzx: float) -> "ComparisonTriangle":
        a, b, c = float(dxy), float(dyz), float(dzx)
        if min(a, b, c) < 0:
            raise GeometryError("negative side length", (a, b, c))
        if a > b + c + TOL or b > a + c + TOL or c > a + b + TOL:
            raise GeometryError("side lengths violate the triangle inequality", (a, b, c))
        if a == 0:
            z = (c, 0.0)
        else:
            zx = (a * a + c * c - b * b) / (2 * a)
            zy = math.sqrt(max(c * c - zx * zx, 0.0))
            z = (zx, zy)
        return cls(a, b, c, ((0.0, 0.0), (a, 0.0), z))

    def side(self, k: int) -> tuple[tuple[float, float], tuple[float, float], float]:
        if k not in (0, 1, 2):
            raise ArgumentError("side index must be 0, 1 or 2", k)
        p = self.points
        lengths = (self.dxy, self.dyz, self.dzx)
        return p[k], p[(k + 1) % 3], lengths[k]


def comparison_point(tri: ComparisonTriangle, side: int, s: float, C: float = 0) -> tuple[float, float]:
    """Point on the given side at arclength s from its first endpoint, clamped."""
    start, end, length = tri.side(side)
    if s < -C - TOL or s > length + C + TOL:
        raise ArgumentError("arclength outside side length plus C", (s, length, C))
    s = min(max(s, 0.0), length)
    if length == 0:
        return start
    lam = s / length
    return (start[0] + lam * (end[0] - start[0]), start[1] + lam * (end[1] - start[1]))


def cat0_quasigeodesic_bound(C: float, d_xz: float, d_yz: float) -> float:
    """Distance bound from z on a (1,C)-quasigeodesic to the segment [x, y]."""
    if C < 0 or d_xz < 0 or d_yz < 0:
        raise ArgumentError("inputs must be nonnegative", (C, d_xz, d_yz))
    return 3.0 * math.sqrt(C * min(d_xz, d_yz) + C * C)


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorized planar distance from points p to segments [a, b] (rows)."""
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.where(denom > 0, np.einsum("ij,ij->i", p - a, ab) / np.where(denom > 0, denom, 1), 0.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(p - proj, axis=1)


# small graph families ------------------------------------------------------

def path_graph(n: int) -> MetricGraph:
    return MetricGraph(n, [(i, i + 1, 1) for i in range(n - 1)])


def cycle_graph(n: int) -> MetricGraph:
    return MetricGraph(n, [(i, (i + 1) % n, 1) for i in range(n)])


def grid_graph(rows: int, cols: int) -> MetricGraph:
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1, 1))
            if r + 1 < rows:
                edges.append((v, v + cols, 1))
    return MetricGraph(rows * cols, edges)


def random_tree(n: int, rng: np.random.Generator) -> MetricGraph:
    """Uniform random recursive tree: vertex i attaches to a random earlier vertex."""
    edges = [(i, int(rng.integers(0, i)), 1) for i in range(1, n)]
    return MetricGraph(n, edges)


def subdivided_tree(k: int, rng: np.random.Generator, lo: int = 1, hi: int = 8) -> MetricGraph:
    """Random recursive tree on k branch vertices with each edge subdivided into lo..hi unit edges.

    Vertices 0..k-1 are the original vertices.
    """
    base = random_tree(k, rng)
    edges, n = [], k
    for u, v, _ in base.edges:
        prev = u
        for _ in range(int(rng.integers(lo, hi + 1)) - 1):
            edges.append((prev, n, 1))
            prev = n
            n += 1
        edges.append((prev, v, 1))
    return MetricGraph(n, edges)
