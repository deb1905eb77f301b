"""Explicit finite hierarchically hyperbolic instances and their verification."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, permutations
from typing import Iterable, Sequence

import numpy as np

from .errors import ArgumentError, InstanceFormatError
from .space import MetricGraph, hull as graph_hull

HHS_FORMAT = "hullcube.hhs/1"
RELATION_CODES = ("=", "<", ">", "perp", "trans")
_DUAL = {"=": "=", "<": ">", ">": "<", "perp": "perp", "trans": "trans"}


class ProductSpace:
    """Cartesian product of graphs with the sum metric; points are mixed-radix ids."""

    def __init__(self, factors: Sequence[MetricGraph]) -> None:
        if not factors:
            raise InstanceFormatError("product needs at least one factor")
        self.factors = tuple(factors)
        self.shape = tuple(f.n for f in factors)
        self.n = int(np.prod(self.shape))

    def coords(self, x: int | np.ndarray) -> tuple:
        return np.unravel_index(x, self.shape)

    def point(self, coords: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(int(c) for c in coords), self.shape))

    def d(self, x: int, y: int) -> int:
        cx, cy = self.coords(x), self.coords(y)
        return int(sum(f.dist[a, b] for f, a, b in zip(self.factors, cx, cy)))

    def dist_sub(self, xs: Sequence[int], ys: Sequence[int]) -> np.ndarray:
        cx = self.coords(np.asarray(xs, dtype=np.int64))
        cy = self.coords(np.asarray(ys, dtype=np.int64))
        out = np.zeros((len(xs), len(ys)), dtype=np.int64)
        for f, a, b in zip(self.factors, cx, cy):
            out += f.dist[np.ix_(a, b)]
        return out

    def edges(self) -> Iterable[tuple[int, int]]:
        for k, f in enumerate(self.factors):
            others = [range(s) for j, s in enumerate(self.shape) if j != k]
            for rest in np.ndindex(*[len(r) for r in others]) if others else [()]:
                for u, v, _ in f.edges:
                    cu = list(rest)
                    cv = list(rest)
                    cu.insert(k, u)
                    cv.insert(k, v)
                    yield self.point(cu), self.point(cv)

    def to_json(self) -> dict:
        return {"product": [f.to_json() for f in self.factors]}

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ProductSpace) and self.factors == other.factors


def _ambient_dist_sub(amb: MetricGraph | ProductSpace, xs: Sequence[int], ys: Sequence[int]) -> np.ndarray:
    if isinstance(amb, MetricGraph):
        return amb.dist[np.ix_(list(xs), list(ys))]
    return amb.dist_sub(xs, ys)


def _ambient_edges(amb: MetricGraph | ProductSpace) -> Iterable[tuple[int, int]]:
    if isinstance(amb, MetricGraph):
        return ((u, v) for u, v, _ in amb.edges)
    return amb.edges()


@dataclass
class HHSInstance:
    ambient: MetricGraph | ProductSpace
    names: list[str]
    relations: list[list[str]]  # relations[i][j] == '<' means domain i is nested in domain j
    spaces: list[MetricGraph]
    pi: np.ndarray  # (domains, ambient points) -> vertex of the domain space
    rho: dict  # (V, U) -> vertex of C(U), for V nested in U or V transverse to U
    rho_down: dict  # (U, V) -> table C(U) -> C(V), for V nested in U
    colors: list[list[int]]
    E: int = 1
    theta: float | None = None
    symmetries: list[list[int]] = field(default_factory=list)
    lipschitz: float | None = None
    generator: str = ""
    info: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        m = len(self.names)
        if len(self.relations) != m or any(len(r) != m for r in self.relations):
            raise InstanceFormatError("relation matrix shape does not match the domain list", [len(self.relations), m])
        for i, row in enumerate(self.relations):
            for j, c in enumerate(row):
                if c not in RELATION_CODES:
                    raise InstanceFormatError("unknown relation code", {"path": f"relations[{i}][{j}]", "value": c})
        if len(self.spaces) != m:
            raise InstanceFormatError("one space per domain required", [len(self.spaces), m])
        self.pi = np.asarray(self.pi, dtype=np.int64)
        if self.pi.shape != (m, self.ambient.n):
            raise InstanceFormatError("projection table has the wrong shape", list(self.pi.shape))
        for u in range(m):
            if self.pi[u].min() < 0 or self.pi[u].max() >= self.spaces[u].n:
                raise InstanceFormatError("projection outside the domain space", {"path": f"pi[{u}]"})
        if self.theta is None:
            self.theta = 2 * self.E

    # relations ---------------------------------------------------------------
    @property
    def m(self) -> int:
        return len(self.names)

    def nested(self, v: int, u: int) -> bool:
        """v is properly nested in u."""
        return self.relations[v][u] == "<"

    def orth(self, u: int, v: int) -> bool:
        return self.relations[u][v] == "perp"

    def trans(self, u: int, v: int) -> bool:
        return self.relations[u][v] == "trans"

    def top(self) -> int:
        tops = [s for s in range(self.m) if all(self.relations[u][s] in ("<", "=") for u in range(self.m))]
        if len(tops) != 1:
            raise InstanceFormatError("no unique maximal domain", tops)
        return tops[0]

    def d_U(self, u: int, a: int, b: int) -> int:
        return int(self.spaces[u].dist[a, b])

    def dist_sub(self, xs: Sequence[int], ys: Sequence[int]) -> np.ndarray:
        return _ambient_dist_sub(self.ambient, xs, ys)

    def d(self, x: int, y: int) -> int:
        return int(self.dist_sub([x], [y])[0, 0])

    # hulls -------------------------------------------------------------------
    def domain_hulls(self, F: Sequence[int]) -> list[set[int]]:
        return [graph_hull(self.spaces[u], set(self.pi[u, list(F)].tolist())) for u in range(self.m)]

    def hull(self, F: Sequence[int]) -> list[int]:
        """Coordinatewise hull: points whose every projection lies in the hull of the projections of F."""
        if not F:
            raise ArgumentError("hull of an empty set")
        mask = np.ones(self.ambient.n, dtype=bool)
        for u, h in enumerate(self.domain_hulls(F)):
            inside = np.zeros(self.spaces[u].n, dtype=bool)
            inside[list(h)] = True
            mask &= inside[self.pi[u]]
        return np.flatnonzero(mask).tolist()

    # serialization -----------------------------------------------------------
    def to_json(self) -> dict:
        amb = {"graph": self.ambient.to_json()} if isinstance(self.ambient, MetricGraph) else self.ambient.to_json()
        return {
            "format": HHS_FORMAT,
            "generator": self.generator,
            "ambient": amb,
            "domains": list(self.names),
            "relations": [list(r) for r in self.relations],
            "spaces": [s.to_json() for s in self.spaces],
            "pi": self.pi.tolist(),
            "rho": [[v, u, int(p)] for (v, u), p in sorted(self.rho.items())],
            "rho_down": [[u, v, [int(t) for t in tab]] for (u, v), tab in sorted(self.rho_down.items())],
            "colors": [list(c) for c in self.colors],
            "E": self.E,
            "theta": self.theta,
            "symmetries": [list(s) for s in self.symmetries],
            "info": self.info,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "HHSInstance":
        if not isinstance(doc, dict) or doc.get("format") != HHS_FORMAT:
            raise InstanceFormatError("not an instance document", {"path": "format", "value": doc.get("format") if isinstance(doc, dict) else None})
        try:
            amb = doc["ambient"]
            if "graph" in amb:
                ambient: MetricGraph | ProductSpace = MetricGraph.from_json(amb["graph"])
            elif "product" in amb:
                ambient = ProductSpace([MetricGraph.from_json(g) for g in amb["product"]])
            else:
                raise InstanceFormatError("ambient needs 'graph' or 'product'", {"path": "ambient"})
            return cls(
                ambient=ambient,
                names=list(doc["domains"]),
                relations=[list(r) for r in doc["relations"]],
                spaces=[MetricGraph.from_json(s) for s in doc["spaces"]],
                pi=np.asarray(doc["pi"], dtype=np.int64),
                rho={(int(v), int(u)): int(p) for v, u, p in doc.get("rho", [])},
                rho_down={(int(u), int(v)): np.asarray(t, dtype=np.int64) for u, v, t in doc.get("rho_down", [])},
                colors=[list(c) for c in doc.get("colors", [])],
                E=int(doc.get("E", 1)),
                theta=doc.get("theta"),
                symmetries=[list(s) for s in doc.get("symmetries", [])],
                generator=doc.get("generator", ""),
                info=doc.get("info", {}),
            )
        except KeyError as exc:
            raise InstanceFormatError("missing field", {"path": str(exc.args[0])}) from exc
        except (TypeError, ValueError) as exc:
            raise InstanceFormatError(f"malformed instance: {exc}") from exc


# ---------------------------------------------------------------------------
# validation

@dataclass
class ValidationReport:
    violations: list[tuple[str, object]]
    checked: list[str]

    @property
    def passed(self) -> bool:
        return not self.violations

    def codes(self) -> set[str]:
        return {c for c, _ in self.violations}

    def to_json(self) -> dict:
        return {"passed": self.passed, "checked": self.checked,
                "violations": [{"check": c, "witness": _plain(w)} for c, w in self.violations]}


def _plain(x: object) -> object:
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, np.integer):
        return int(x)
    return x


def _components_outside(g: MetricGraph, center: int, radius: float) -> list[list[int]]:
    """Components of the graph after deleting the closed ball around center."""
    keep = g.dist[center] > radius
    seen = np.zeros(g.n, dtype=bool)
    comps = []
    for s in np.flatnonzero(keep):
        if seen[s]:
            continue
        stack = [int(s)]
        seen[s] = True
        comp = []
        while stack:
            v = stack.pop()
            comp.append(v)
            for x, _ in g.adj[v]:
                if keep[x] and not seen[x]:
                    seen[x] = True
                    stack.append(x)
        comps.append(sorted(comp))
    return comps


def validate_instance(inst: HHSInstance, max_points: int = 50_000) -> ValidationReport:
    """Exhaustive check of relations, colors, strict projection laws, bounded geodesic image and Lipschitz bounds."""
    V: list[tuple[str, object]] = []
    m = inst.m
    R = inst.relations
    for i in range(m):
        if R[i][i] != "=":
            V.append(("relation", {"pair": [i, i], "codes": [R[i][i]]}))
        for j in range(i + 1, m):
            if R[i][j] == "=" or _DUAL[R[i][j]] != R[j][i]:
                V.append(("relation", {"pair": [i, j], "codes": [R[i][j], R[j][i]]}))
    for a in range(m):
        for b in range(m):
            if R[a][b] != "<":
                continue
            for c in range(m):
                if R[b][c] == "<" and R[a][c] != "<":
                    V.append(("partial-order", {"chain": [a, b, c]}))
    tops = [s for s in range(m) if all(R[u][s] in ("<", "=") for u in range(m))]
    if len(tops) != 1:
        V.append(("unique-max", {"maximal": tops}))
    for u in range(m):
        for v in range(m):
            if R[u][v] != "perp":
                continue
            for w in range(m):
                if R[w][u] == "<" and R[w][v] != "perp":
                    V.append(("orthogonality", {"orth": [u, v], "nested": w}))
    # colors
    flat = sorted(d for c in inst.colors for d in c)
    if flat != list(range(m)):
        V.append(("colors-partition", {"colors": inst.colors}))
    for ci, c in enumerate(inst.colors):
        for a, b in combinations(c, 2):
            if R[a][b] != "trans":
                V.append(("colors-transverse", {"color": ci, "pair": [a, b]}))
    color_sets = {frozenset(c) for c in inst.colors}
    for s in inst.symmetries:
        if sorted(s) != list(range(m)):
            V.append(("symmetry", {"not a permutation": s}))
            continue
        if {frozenset(s[d] for d in c) for c in inst.colors} != color_sets:
            V.append(("symmetry", {"does not permute colors": s}))
    # rho data
    for v in range(m):
        for u in range(m):
            if u == v:
                continue
            if R[v][u] in ("<", "trans"):
                p = inst.rho.get((v, u))
                if p is None or not 0 <= p < inst.spaces[u].n:
                    V.append(("rho", {"missing point": [v, u]}))
            if R[v][u] == "<":
                tab = inst.rho_down.get((u, v))
                if tab is None or len(tab) != inst.spaces[u].n or (len(tab) and (min(tab) < 0 or max(tab) >= inst.spaces[v].n)):
                    V.append(("rho", {"missing table": [u, v]}))
    if any(c in ("rho", "relation", "colors-partition", "colors-transverse") for c, _ in V):
        return ValidationReport(V, ["relations", "colors", "rho"])
    theta = inst.theta
    # strict projection laws within each color
    for c in inst.colors:
        for X, Y, Z in permutations(c, 3):
            if inst.d_U(Y, inst.rho[(X, Y)], inst.rho[(Z, Y)]) > theta and inst.rho[(X, Z)] != inst.rho[(Y, Z)]:
                V.append(("strict-4", {"triple": [X, Y, Z]}))
    npts = inst.ambient.n
    pts = np.arange(npts) if npts <= max_points else np.linspace(0, npts - 1, max_points).astype(np.int64)
    for c in inst.colors:
        for Y, Z in permutations(c, 2):
            far = inst.spaces[Y].dist[inst.pi[Y, pts], inst.rho[(Z, Y)]] > theta
            bad = far & (inst.pi[Z, pts] != inst.rho[(Y, Z)])
            if bad.any():
                x = int(pts[np.flatnonzero(bad)[0]])
                V.append(("strict-5", {"point": x, "pair": [Y, Z]}))
    # bounded geodesic image, strong component form
    E = inst.E
    for u in range(m):
        for v in range(m):
            if R[v][u] != "<":
                continue
            tab = np.asarray(inst.rho_down[(u, v)])
            gU, gV = inst.spaces[u], inst.spaces[v]
            for comp in _components_outside(gU, inst.rho[(v, u)], E):
                img = sorted(set(tab[comp].tolist()))
                if gV.diameter(img) > E:
                    V.append(("bgi", {"nested": [v, u], "component_size": len(comp), "image_diameter": gV.diameter(img)}))
                    break
            far = gU.dist[inst.pi[u, pts], inst.rho[(v, u)]] > E
            if far.any():
                sel = pts[far]
                dev = gV.dist[inst.pi[v, sel], tab[inst.pi[u, sel]]]
                if (dev > E).any():
                    V.append(("bgi", {"nested": [v, u], "point": int(sel[int(np.argmax(dev))])}))
    # Lipschitz projections along ambient edges
    L = inst.lipschitz if inst.lipschitz is not None else max(1, E)
    if npts <= max_points:
        edges = np.array(list(_ambient_edges(inst.ambient)), dtype=np.int64).reshape(-1, 2)
        for u in range(m):
            if len(edges):
                jump = inst.spaces[u].dist[inst.pi[u, edges[:, 0]], inst.pi[u, edges[:, 1]]]
                if (jump > L).any():
                    k = int(np.argmax(jump))
                    V.append(("lipschitz", {"domain": u, "edge": edges[k].tolist(), "jump": int(jump[k])}))
    return ValidationReport(V, ["relations", "partial-order", "unique-max", "orthogonality", "colors", "rho", "strict-4", "strict-5", "bgi", "lipschitz"])


# ---------------------------------------------------------------------------
# relevant domains and domain control

def rel_domains(inst: HHSInstance, F: Sequence[int], K: float) -> list[int]:
    if K <= 0:
        raise ArgumentError("K must be positive", K)
    F = list(F)
    if not F:
        return []
    out = []
    for u in range(inst.m):
        p = sorted(set(inst.pi[u, F].tolist()))
        if inst.spaces[u].diameter(p) >= K:
            out.append(u)
    return out


@dataclass
class DomainDiff:
    distinguished: list[int]
    involved: list[int]
    sporadic: list[int]
    witnesses: dict
    consistency_failures: list[int]
    relevant: list[int]
    relevant_new: list[int]


def domain_diff(inst: HHSInstance, F: Sequence[int], F2: Sequence[int], K: float, D: float) -> DomainDiff:
    F, F2 = list(F), list(F2)
    if not set(F) <= set(F2):
        raise ArgumentError("F must be contained in F'")
    new = [x for x in F2 if x not in set(F)]
    U = rel_domains(inst, F, K)
    U2 = rel_domains(inst, F2, K)
    Uset = set(U)
    wit: dict = {}
    dist = []
    for u in U2:
        if u in Uset:
            for x2 in new:
                if all(inst.pi[u, x2] != inst.pi[u, x] for x in F):
                    dist.append(u)
                    wit[("distinguished", u)] = {"case": 1, "new_point": x2}
                    break
        else:
            vals = set(inst.pi[u, F].tolist())
            if len(vals) > 1:
                dist.append(u)
                wit[("distinguished", u)] = {"case": 2, "projections": sorted(vals)}
    inv = []
    for u in U:
        a = {v for v in U if inst.nested(v, u)}
        b = {v for v in U2 if inst.nested(v, u)}
        if a != b:
            inv.append(u)
            wit[("involved", u)] = sorted(a ^ b)
    spor = []
    for v in U2:
        if v in Uset:
            continue
        for u in U:
            if not inst.nested(v, u):
                continue
            g = inst.spaces[u]
            r = inst.rho[(v, u)]
            ok = False
            for x2 in new:
                if all(g.distance_to_set(graph_hull(g, [inst.pi[u, x], inst.pi[u, x2]]))[r] <= D for x in F):
                    ok = True
                    break
            if not ok:
                spor.append(v)
                wit[("sporadic", v)] = {"parent": u, "rho": int(r)}
                break
    lower = set(rel_domains(inst, F, K - 2 * inst.E)) if K - 2 * inst.E > 0 else set(range(inst.m))
    fails = [v for v in spor if v not in lower]
    return DomainDiff(sorted(dist), sorted(inv), sorted(spor), wit, fails, U, U2)


@dataclass
class PassingUpWitness:
    W: int
    nested: list[int]
    occupied: int
    subintervals: list[list[int]]


def passing_up_probe(inst: HHSInstance, pair: Sequence[int], family: Iterable[int], K1: float, K2: float, sigma: float, n: int) -> PassingUpWitness | None:
    a, b = pair
    if sigma < 10 * inst.E:
        raise ArgumentError("sigma must be at least 10 E", {"sigma": sigma, "E": inst.E})
    family = sorted(set(family))
    if not family:
        return None
    for W in rel_domains(inst, [a, b], K2):
        sub = [v for v in family if inst.nested(v, W)]
        if not sub:
            continue
        g = inst.spaces[W]
        rhos = sorted({inst.rho[(v, W)] for v in sub})
        if g.diameter(rhos) <= K2:
            continue
        gamma = g.geodesic(int(inst.pi[W, a]), int(inst.pi[W, b]))
        pos = np.array([g.dist[gamma[0], x] for x in gamma])
        length = int(pos[-1])
        cuts = list(np.arange(0, length, sigma)) + [length]
        bins: list[list[int]] = [[] for _ in range(len(cuts) - 1)]
        for v in sub:
            row = g.dist[inst.rho[(v, W)], gamma]
            closest = pos[row == row.min()]
            for i in range(len(cuts) - 1):
                if ((closest >= cuts[i]) & (closest <= cuts[i + 1])).any():
                    bins[i].append(v)
        occupied = sum(1 for bn in bins if bn)
        if occupied >= n:
            return PassingUpWitness(W, sub, occupied, bins)
    return None


def no_transverse_triple_bound(inst: HHSInstance, family: Iterable[int]) -> int:
    """Largest subfamily without a pairwise transverse triple (exhaustive, small families)."""
    fam = sorted(set(family))
    best = 0
    for r in range(len(fam), 0, -1):
        for sub in combinations(fam, r):
            if not any(inst.trans(a, b) and inst.trans(b, c) and inst.trans(a, c) for a, b, c in combinations(sub, 3)):
                return r
    return best


# ---------------------------------------------------------------------------
# generators

def single_domain(graph: MetricGraph, E: int = 1) -> HHSInstance:
    """G1: one domain whose space is the ambient graph itself."""
    return HHSInstance(graph, ["S"], [["="]], [graph], np.arange(graph.n)[None, :], {}, {}, [[0]], E=E, generator="G1")


def product_of_trees(t1: MetricGraph, t2: MetricGraph, E: int = 1) -> HHSInstance:
    """G2: product ambient, a trivial top domain and two orthogonal factor domains."""
    amb = ProductSpace([t1, t2])
    point = MetricGraph(1, [])
    c1, c2 = amb.coords(np.arange(amb.n))
    pi = np.stack([np.zeros(amb.n, dtype=np.int64), c1, c2])
    rel = [["=", ">", ">"], ["<", "=", "perp"], ["<", "perp", "="]]
    rho = {(1, 0): 0, (2, 0): 0}
    rho_down = {(0, 1): np.zeros(1, dtype=np.int64), (0, 2): np.zeros(1, dtype=np.int64)}
    return HHSInstance(amb, ["S", "U1", "U2"], rel, [point, t1, t2], pi, rho, rho_down, [[0], [1], [2]], E=E, generator="G2")


def tree_of_flats(parent: MetricGraph, marks: Sequence[int], sides: Sequence[tuple[int, int]], E: int = 1) -> HHSInstance:
    """G3: a parent tree with grid flats glued at marked vertices by their corner.

    Flat i is the grid of two paths of lengths sides[i]; its two side domains are
    orthogonal, nested in the top domain, and transverse to the sides of other flats.
    """
    if len(marks) != len(sides) or len(set(marks)) != len(marks):
        raise ArgumentError("one distinct mark per flat")
    n0 = parent.n
    edges = [list(e) for e in parent.edges]
    flat_pts = []  # (flat, a, b, id)
    nxt = n0
    ids = []
    for i, (m, (la, lb)) in enumerate(zip(marks, sides)):
        grid = {}
        for a in range(la + 1):
            for b in range(lb + 1):
                if a == 0 and b == 0:
                    grid[(a, b)] = m
                else:
                    grid[(a, b)] = nxt
                    flat_pts.append((i, a, b, nxt))
                    nxt += 1
        for (a, b), v in grid.items():
            if a < la:
                edges.append([v, grid[(a + 1, b)], 1])
            if b < lb:
                edges.append([v, grid[(a, b + 1)], 1])
        ids.append(grid)
    amb = MetricGraph(nxt, edges)
    k = len(marks)
    names = ["S"] + [f"U{i}" for i in range(k)] + [f"V{i}" for i in range(k)]
    m = 1 + 2 * k
    rel = [["trans"] * m for _ in range(m)]
    for d in range(m):
        rel[d][d] = "="
    for d in range(1, m):
        rel[d][0], rel[0][d] = "<", ">"
    for i in range(k):
        rel[1 + i][1 + k + i] = rel[1 + k + i][1 + i] = "perp"
    spaces = [parent] + [_path(sides[i][0] + 1) for i in range(k)] + [_path(sides[i][1] + 1) for i in range(k)]
    pi = np.zeros((m, nxt), dtype=np.int64)
    pi[0, :n0] = np.arange(n0)
    for i, a, b, v in flat_pts:
        pi[0, v] = marks[i]
        pi[1 + i, v] = a
        pi[1 + k + i, v] = b
    rho = {}
    rho_down = {}
    for d in range(1, m):
        i = (d - 1) % k
        rho[(d, 0)] = int(marks[i])
        rho_down[(0, d)] = np.zeros(n0, dtype=np.int64)
        for e in range(1, m):
            if e != d and rel[d][e] == "trans":
                rho[(d, e)] = 0
    colors = [[0], list(range(1, 1 + k)), list(range(1 + k, m))]
    inst = HHSInstance(amb, names, rel, spaces, pi, rho, rho_down, colors, E=E, generator="G3")
    inst.info = {"marks": list(map(int, marks)), "sides": [list(s) for s in sides], "parent_vertices": n0}
    return inst


def _path(n: int) -> MetricGraph:
    return MetricGraph(n, [(i, i + 1, 1) for i in range(n - 1)])


def flat_point(inst: HHSInstance, flat: int, a: int, b: int) -> int:
    """Ambient id of the point (a, b) of a flat in a tree-of-flats instance."""
    k = len(inst.info["marks"])
    hits = np.flatnonzero((inst.pi[1 + flat] == a) & (inst.pi[1 + k + flat] == b) & (inst.pi[0] == inst.info["marks"][flat]))
    if a == 0 and b == 0:
        return int(inst.info["marks"][flat])
    if hits.size == 0:
        raise ArgumentError("no such flat point", (flat, a, b))
    return int(hits[0])
