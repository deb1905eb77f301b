"""Named verification suites, one per acceptance criterion."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from . import cube, hhs, metric, model, rips, space, treenet
from .errors import CapacityError

SEPARATIONS = (1, 2, 5, 10, 20, 50, 100)

# Small cluster constants: eps' > eps and E >= 8 eps' hold with E = 2.
SMALL = dict(eps=Fraction(1, 8), eps_p=Fraction(1, 4), E=2)


@dataclass
class Check:
    label: str
    ok: bool
    detail: object = None


@dataclass
class SuiteResult:
    name: str
    title: str
    checks: list[Check] = field(default_factory=list)
    measures: dict = field(default_factory=dict)
    elapsed: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    def failed(self) -> list[str]:
        return [c.label for c in self.checks if not c.ok]

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        tail = "" if self.passed else " failed: " + ", ".join(self.failed())
        return f"{status} {self.name}: {self.title}{tail}"

    def to_json(self, timings: bool = False) -> dict:
        doc = {
            "format": "hullcube.report/1",
            "suite": self.name,
            "title": self.title,
            "passed": self.passed,
            "checks": [{"label": c.label, "ok": c.ok, "detail": _plain(c.detail)} for c in self.checks],
            "measures": _plain(self.measures),
        }
        if timings:
            doc["elapsed"] = round(self.elapsed, 3)
        return doc


def _plain(x: object) -> object:
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in sorted(x.items(), key=lambda kv: str(kv[0]))}
    if isinstance(x, (list, tuple, set, frozenset)):
        items = [_plain(v) for v in x]
        return sorted(items, key=repr) if isinstance(x, (set, frozenset)) else items
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return round(float(x), 9)
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    return x


def sweep_independent(cells: dict[float, float]) -> bool:
    """True when doubling the sweep range does not raise the bound.

    The maximum over separations above half the largest one must not exceed
    the maximum over the rest of the sweep.
    """
    keys = sorted(cells)
    if len(keys) < 2:
        return True
    top = keys[-1]
    lower = [cells[k] for k in keys if k <= top / 2] or [cells[keys[0]]]
    upper = [cells[k] for k in keys if k > top / 2]
    return max(upper) <= max(lower)


def drift(a: float, b: float) -> float:
    if a == b:
        return 0.0
    return abs(a - b) / max(abs(a), abs(b))


def _timed(check_label: str, budget: float, res: SuiteResult, start: float) -> None:
    res.elapsed = time.perf_counter() - start
    res.checks.append(Check(check_label, res.elapsed < budget, {"budget_s": budget}))


def _leaves(g: space.MetricGraph) -> np.ndarray:
    deg = np.zeros(g.n, dtype=np.int64)
    for u, v, _ in g.edges:
        deg[u] += 1
        deg[v] += 1
    return np.flatnonzero(deg == 1)


def _spread(g: space.MetricGraph, cands, k: int, gap: int) -> list[int]:
    out: list[int] = []
    for x in cands:
        if len(out) < k and all(g.d(int(x), f) > gap for f in out):
            out.append(int(x))
    return sorted(out)


# 1 ------------------------------------------------------------------------------

def tree_oracle(seed: int = 0) -> SuiteResult:
    """Model of a tree hull against the tree metric itself."""
    start = time.perf_counter()
    res = SuiteResult("tree-oracle", "l1 model metric of a tree hull within a size-independent constant")
    rng = np.random.default_rng(seed)
    P = model.ModelParams(K=10, r1=4, r2=4, **SMALL)
    rows = []
    while len(rows) < 20:
        g = space.subdivided_tree(int(rng.integers(3, 20)), rng, 5, 12)
        if not 20 <= g.n <= 200:
            continue
        F = _spread(g, rng.permutation(_leaves(g)), 5, 4 * (P.r1 + P.r2))
        if len(F) < 2:
            continue
        inst = hhs.single_domain(g)
        data = model.build_hft(inst, F, P)
        Q = model.consistent_set(data.hft)
        po = model.psi_omega(inst, F, data, Q)
        dq = Q.cx.l1_rows(po.psi_ids, po.psi_ids)
        dt = g.dist[np.ix_(po.hull, po.hull)]
        rows.append((g.n, len(F), int(np.abs(dq - dt).max()), int(po.roundtrip().max())))
    K = max(r[2] for r in rows)
    buckets: dict[int, int] = {}
    for n, _, err, _ in rows:
        b = min((n - 20) // 45, 3)
        buckets[b] = max(buckets.get(b, 0), err)
    res.measures = {"K_meas": K, "per_tree": rows, "bucket_max": buckets}
    res.checks.append(Check("constant identical across sizes", len(set(buckets.values())) == 1, buckets))
    res.checks.append(Check("round trip within constant", max(r[3] for r in rows) <= K, max(r[3] for r in rows)))
    _timed("runtime < 10 s", 10, res, start)
    return res


# 2 ------------------------------------------------------------------------------

def _product_pairs(inst: hhs.HHSInstance, rng: np.random.Generator, count: int, span: int = 32) -> list[tuple[int, int]]:
    """Pairs whose factor distances run through a fixed grid of values, so the sample does not depend on tree size."""
    t1, t2 = inst.spaces[1], inst.spaces[2]
    out = []
    k = 0
    while len(out) < count:
        want = (k % span, (k // span) % span)
        k += 1
        a = [int(rng.integers(t.n)) for t in (t1, t2)]
        b = []
        for t, x, d in zip((t1, t2), a, want):
            hits = np.flatnonzero(t.dist[x] == d)
            if len(hits) == 0:
                break
            b.append(int(rng.choice(hits)))
        if len(b) == 2:
            out.append((inst.ambient.point(a), inst.ambient.point(b)))
    return out


def _product_errors(k: int, seed: int, count: int) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    inst = hhs.product_of_trees(space.subdivided_tree(k, rng, 5, 12), space.subdivided_tree(k, rng, 5, 12))
    P = model.ModelParams(K=1, r1=4, r2=4, **SMALL)
    e1 = e2 = 0.0
    worst_gap = -math.inf
    for a, b in _product_pairs(inst, rng, count):
        ca, cb = inst.ambient.coords(a), inst.ambient.coords(b)
        d = [float(inst.spaces[1 + i].dist[ca[i], cb[i]]) for i in range(2)]
        d1, d2 = metric.dhat_many(inst, a, b, (1, 2), P)
        e1 = max(e1, abs(d1 - inst.d(a, b)))
        e2 = max(e2, abs(d2 - math.hypot(*d)))
        worst_gap = max(worst_gap, e2 - e1)
    return e1, e2


def product_oracle(seed: int = 0) -> SuiteResult:
    start = time.perf_counter()
    res = SuiteResult("product-oracle", "two-point models of a product of trees against the product metrics")
    K1, L1 = _product_errors(8, seed, 1000)
    K2, L2 = _product_errors(16, seed + 1, 1000)
    res.measures = {"K_meas": K1, "K_meas_doubled": K2, "l2_error": L1, "l2_error_doubled": L2}
    res.checks.append(Check("l2 within K_meas + 0.01", L1 <= K1 + 1e-2 and L2 <= K2 + 1e-2, (L1, L2)))
    res.checks.append(Check("K_meas drift under doubling <= 10%", drift(K1, K2) <= 0.10, drift(K1, K2)))
    _timed("runtime < 30 s", 30, res, start)
    return res


# 3 ------------------------------------------------------------------------------

def _new_point(inst: hhs.HHSInstance, F: list[int], sep: int, rng: np.random.Generator, pool: np.ndarray | None = None) -> tuple[int, int]:
    cand = np.arange(inst.ambient.n) if pool is None else pool
    dF = inst.dist_sub(F, cand).min(axis=0)
    best = np.abs(dF - sep)
    hits = cand[best == best.min()]
    x = int(rng.choice(hits))
    return x, int(inst.dist_sub(F, [x]).min())


def _with_tail(g: space.MetricGraph, at: int, length: int) -> space.MetricGraph:
    """Attach a path of unit edges at vertex `at`; new vertices follow the existing ones."""
    edges = list(g.edges)
    prev = at
    for k in range(length):
        edges.append((prev, g.n + k, 1))
        prev = g.n + k
    return space.MetricGraph(g.n + length, edges)


def diagram_family(generator: str, rng: np.random.Generator, reach: int = max(SEPARATIONS)) -> tuple[hhs.HHSInstance, list[int]]:
    """Instance and base set F, with a tail long enough that every separation up to `reach` is realized."""
    if generator == "G1":
        g = space.subdivided_tree(int(rng.integers(10, 24)), rng, 5, 12)
        F = _spread(g, rng.permutation(_leaves(g)), int(rng.integers(2, 5)), 16)
        inst = hhs.single_domain(_with_tail(g, int(rng.choice(g.n)), reach + 12))
    elif generator == "G2":
        t1 = space.subdivided_tree(int(rng.integers(3, 6)), rng, 5, 12)
        t2 = space.subdivided_tree(int(rng.integers(3, 6)), rng, 5, 12)
        t1 = _with_tail(t1, int(rng.choice(t1.n)), reach + 6)
        t2 = _with_tail(t2, int(rng.choice(t2.n)), reach + 6)
        inst = hhs.product_of_trees(t1, t2)
        F = sorted(int(x) for x in rng.choice(inst.ambient.n, int(rng.integers(2, 4)), replace=False))
    elif generator == "G3":
        parent = space.subdivided_tree(8, rng, 4, 12)
        parent = _with_tail(parent, int(rng.choice(parent.n)), reach + 12)
        marks = sorted(int(m) for m in rng.choice(8, 3, replace=False))
        sides = [(int(rng.integers(10, 25)), int(rng.integers(10, 25))) for _ in marks]
        inst = hhs.tree_of_flats(parent, marks, sides)
        F = sorted({hhs.flat_point(inst, 0, sides[0][0], sides[0][1]), hhs.flat_point(inst, 1, sides[1][0], 0),
                    hhs.flat_point(inst, 1, 0, sides[1][1])})
    else:
        raise ValueError(generator)
    return inst, F


def diagram_instance(generator: str, rng: np.random.Generator, sep: int) -> tuple[hhs.HHSInstance, list[int], list[int], int]:
    """Instance, F, F' = F + new point, and the realized separation d(F, F' - F)."""
    inst, F = diagram_family(generator, rng, max(sep, 1))
    x, real = _new_point(inst, F, sep, rng)
    return inst, F, sorted(set(F) | {x}), real


DIAGRAM_PARAMS = dict(K=10, r1=4, r2=4, **SMALL)


def diagram(seed: int = 0, per_generator: int = 105) -> SuiteResult:
    start = time.perf_counter()
    res = SuiteResult("diagram", "hyperplane-deletion diagram over separation sweeps")
    P = model.ModelParams(**DIAGRAM_PARAMS)
    runs = 0
    for gen in ("G1", "G2", "G3"):
        rng = np.random.default_rng([seed, ord(gen[1])])
        fails: list = []
        dels: dict[int, int] = {}
        faces: dict[int, int] = {}
        convex = square = 0
        count = 0
        while count < per_generator:
            inst, F = diagram_family(gen, rng)
            for sep in SEPARATIONS:
                x, _ = _new_point(inst, F, sep, rng)
                b = model.stabler_pipeline(inst, F, sorted(set(F) | {x}), P, seed=count)
                count += 1
                m = b.measures
                dels[sep] = max(dels.get(sep, 0), m["deleted_eta"], m["deleted_eta_prime"])
                faces[sep] = max(faces.get(sep, 0), m["max_face"])
                convex += bool(m["theta_convex"])
                square += m["left_square_mismatches"] == 0
                fails.extend((gen, count, c) for c, _ in b.failures)
        runs += count
        N, B = max(dels.values()), max(faces.values())
        res.measures[gen] = {"instances": count, "N_meas": N, "B_meas": B, "deletions_by_separation": dels, "faces_by_separation": faces,
                             "theta_convex_runs": convex, "left_square_exact_runs": square, "failures": fails[:20]}
        res.checks.append(Check(f"{gen}: theta convex on every run", convex == count, convex))
        res.checks.append(Check(f"{gen}: left square exact on every run", square == count, square))
        res.checks.append(Check(f"{gen}: deletions and collapses verified", not fails, fails[:5]))
        res.checks.append(Check(f"{gen}: N_meas sweep-independent", sweep_independent(dels), dels))
        res.checks.append(Check(f"{gen}: B_meas sweep-independent", sweep_independent(faces), faces))
    res.measures["runs"] = runs
    _timed("runtime < 120 s", 120, res, start)
    return res


# 4 ------------------------------------------------------------------------------

def planar_bound(seed: int = 0, count: int = 100_000) -> SuiteResult:
    """Points z of the ellipse d(x,z) + d(z,y) <= d(x,y) + 3C stay near the segment [x, y]."""
    start = time.perf_counter()
    res = SuiteResult("planar-bound", "planar quasigeodesic triples stay within 3 sqrt(C min + C^2) of the segment")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-50, 50, (count, 2))
    y = rng.uniform(-50, 50, (count, 2))
    C = rng.uniform(0, 5, count) * (rng.random(count) > 0.02)
    d = np.linalg.norm(y - x, axis=1)
    # uniform point of the filled ellipse with foci x, y and major axis d + 3C
    a = (d + 3 * C) / 2
    bsemi = np.sqrt(np.maximum(a * a - (d / 2) ** 2, 0))
    r = np.sqrt(rng.random(count))
    phi = rng.uniform(0, 2 * np.pi, count)
    u = np.where(d[:, None] > 0, (y - x) / np.where(d > 0, d, 1)[:, None], np.array([1.0, 0.0]))
    v = np.stack([-u[:, 1], u[:, 0]], axis=1)
    z = (x + y) / 2 + (r * a * np.cos(phi))[:, None] * u + (r * bsemi * np.sin(phi))[:, None] * v
    dxz = np.linalg.norm(z - x, axis=1)
    dzy = np.linalg.norm(z - y, axis=1)
    premise = dxz + dzy <= d + 3 * C + 1e-12
    lhs = space.point_segment_distance(z, x, y)
    rhs = np.array([space.cat0_quasigeodesic_bound(float(c), float(p), float(q)) for c, p, q in zip(C, dxz, dzy)])
    viol = premise & (lhs > rhs + 1e-9)
    res.measures = {"triples": int(premise.sum()), "violations": int(viol.sum()), "max_ratio": float(np.max(np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1), 0)))}
    res.checks.append(Check("at least 10^5 triples satisfy the premise", int(premise.sum()) >= min(count, 100_000), int(premise.sum())))
    res.checks.append(Check("zero violations at tolerance 1e-9", not viol.any(), int(viol.sum())))
    _timed("runtime < 5 s", 5, res, start)
    return res


# 5 ------------------------------------------------------------------------------

def _product_tables(lo: int, hi: int, want: int, limit: int, seed: int) -> list[np.ndarray]:
    P = model.ModelParams(K=1, r1=1, r2=1, **SMALL)
    out = []
    s = 0
    while len(out) < want:
        rng = np.random.default_rng([seed, s])
        s += 1
        inst = hhs.product_of_trees(space.subdivided_tree(5, rng, lo, hi), space.subdivided_tree(5, rng, lo, hi))
        F = [int(v) for v in rng.choice(inst.ambient.n, 4, replace=False)]
        try:
            D = metric.model_metric_table(inst, F, 2, P, max_points=limit)[1]
        except CapacityError:
            continue
        if len(D) >= limit // 8:
            out.append(D)
    return out


DIACENTER_C = 0.5
CONTRACTION_EPS = 0.1
BALL = (1.0, 8.0)


def _contraction(tables: list[np.ndarray], seed: int, test_count: int) -> dict:
    rng = np.random.default_rng([seed, 1])
    cal = []
    for D in tables:
        batch = metric.contraction_samples(D, DIACENTER_C, rng, 400, radius=BALL)
        top = sorted(batch, key=lambda s: -s.excess(CONTRACTION_EPS))[:10]
        cal += batch + metric.sharpen_samples(D, DIACENTER_C, CONTRACTION_EPS, top, rng, 300, radius=BALL[1])
    Cp = metric.fit_contraction_constant(cal, CONTRACTION_EPS)
    trng = np.random.default_rng([seed, 2])
    per = -(-test_count // len(tables))
    test = [s for D in tables for s in metric.contraction_samples(D, DIACENTER_C, trng, per, radius=BALL)][:test_count]
    bad = metric.contraction_violations(test, CONTRACTION_EPS, Cp)
    return {"C_prime": Cp, "calibration": len(cal), "test": len(test), "violations": len(bad),
            "worst_test_excess": max(s.excess(CONTRACTION_EPS) for s in test)}


def diacenter_contraction(seed: int = 0) -> SuiteResult:
    start = time.perf_counter()
    res = SuiteResult("diacenter-contraction", "d(dc(A), dc(B)) <= 0.9 diam(B) + C' on l2 product models")
    small = _contraction(_product_tables(4, 10, 6, 400, seed), seed, 1000)
    large = _contraction(_product_tables(8, 20, 6, 1600, seed + 1), seed + 1, 1000)
    res.measures = {"size_n": small, "size_2n": large, "eps": CONTRACTION_EPS, "diacenter_C": DIACENTER_C}
    res.checks.append(Check("zero violations on the disjoint batch", small["violations"] == 0 and large["violations"] == 0,
                            (small["violations"], large["violations"])))
    dr = drift(small["C_prime"], large["C_prime"])
    res.checks.append(Check("C' drift under doubling <= 10%", dr <= 0.10, dr))
    _timed("runtime < 60 s", 60, res, start)
    return res


# 6 ------------------------------------------------------------------------------

def _audit_complexes(seed: int) -> list[cube.CubeComplex]:
    rng = np.random.default_rng(seed)
    out = []
    P = model.ModelParams(K=10, r1=4, r2=4, **SMALL)
    while len(out) < 6:
        inst, F, F2, _ = diagram_instance("G3" if len(out) % 2 else "G1", rng, int(rng.choice(SEPARATIONS[:4])))
        h = model.build_hft(inst, F2, P).hft
        Q = model.consistent_set(h)
        if 8 <= Q.n <= 1500 and Q.cx.h >= 2:
            out.append(Q.cx)
    for k in (3, 5, 8):
        trees = [space.subdivided_tree(k, rng, 4, 8) for _ in range(2)]
        nxs = [nx_tree(t) for t in trees]
        tuples = [(a, b) for a in range(trees[0].n) for b in range(trees[1].n)]
        if len(tuples) <= 10_000:
            out.append(cube.complex_from_tree_product(nxs, tuples)[0])
    return out


def nx_tree(g: space.MetricGraph):
    import networkx as nx

    t = nx.Graph()
    t.add_nodes_from(range(g.n))
    t.add_edges_from((u, v) for u, v, _ in g.edges)
    return t


def deletion_audit(seed: int = 0) -> SuiteResult:
    start = time.perf_counter()
    res = SuiteResult("deletion-audit", "each hyperplane deletion drops distances by 0 or 1 and deletions compose")
    rng = np.random.default_rng(seed)
    drops_ok = compose_ok = True
    pairs = 0
    rows = []
    for cx in _audit_complexes(seed):
        if cx.n > 10_000:
            continue
        D = cx.graph_distances()
        order = [int(w) for w in rng.permutation(cx.h)[: max(1, min(4, cx.h - 1))]]
        cur, cur_map, curD = cx, np.arange(cx.n), D
        for w in order:
            label = cx.walls[w]
            nxt, vmap = cube.delete_hyperplanes(cur, [label])
            nd = nxt.graph_distances()
            drop = curD - nd[np.ix_(vmap, vmap)]
            pairs += drop.size
            drops_ok &= bool((drop >= 0).all() and (drop <= 1).all())
            cur, cur_map, curD = nxt, vmap[cur_map], nd
        direct, dmap = cube.delete_hyperplanes(cx, [cx.walls[w] for w in order])
        same = bool(np.array_equal(dmap, cur_map)) and direct.n == cur.n
        same &= sorted(map(repr, direct.walls)) == sorted(map(repr, cur.walls))
        compose_ok &= same
        total = D - curD[np.ix_(cur_map, cur_map)]
        compose_ok &= bool((total >= 0).all() and (total <= len(order)).all())
        rows.append((cx.n, cx.h, len(order), same))
    res.measures = {"complexes": rows, "pairs_audited": pairs}
    res.checks.append(Check("every per-deletion drop lies in [0, 1]", drops_ok, pairs))
    res.checks.append(Check("stepwise deletion equals deleting the union", compose_ok, rows))
    _timed("runtime < 20 s", 20, res, start)
    return res


# 7 ------------------------------------------------------------------------------

def c6_fixture() -> list[list[int]]:
    D = space.cycle_graph(6).dist.astype(float)
    return [rips.homology_z2(rips.rips_complex(list(range(6)), D, T)) for T in (1, 2, 3)]


def rips_suite(seed: int = 0) -> SuiteResult:
    start = time.perf_counter()
    res = SuiteResult("rips", "Rips complexes of product-model samples are acyclic from a measured threshold on")
    fx = c6_fixture()
    res.checks.append(Check("C6 fixtures", fx == [[0, 1, 0], [0, 0, 1], [0, 0, 0]], fx))
    tables = _product_tables(8, 20, 3, 3000, seed + 7)
    rng = np.random.default_rng(seed)
    rows = {}
    dual = True
    for m, D in zip((100, 200, 400), sorted(tables, key=len)):
        m = min(m, len(D))
        idx = np.sort(rng.choice(len(D), m, replace=False))
        S = D[np.ix_(idx, idx)]
        T0, reps = rips.minimal_threshold(S)
        acyclic_above = all(r.acyclic for r in reps if r.T >= T0)
        diam = float(S.max())
        rows[m] = {"T0": T0, "diameter": diam, "thresholds_checked": len(reps), "acyclic_from_T0": acyclic_above}
        res.checks.append(Check(f"{m} points: acyclic for every T >= T0", acyclic_above and T0 <= diam, rows[m]))
        # cross-check the core reduction on the first sub-threshold complex that is small enough
        for r in reps:
            if r.core_size <= 40:
                core = rips.dominated_core(S <= r.T + metric.TOL)
                sub = S[np.ix_(core, core)]
                cx = rips.rips_complex(core, sub, r.T)
                dual &= rips.reduced_betti_dense(cx) == r.betti
                break
    res.measures = {"samples": rows, "c6": fx}
    res.checks.append(Check("core homology matches the dense reference", dual))
    _timed("runtime < 60 s", 60, res, start)
    return res


# 8 ------------------------------------------------------------------------------

def tripod(shared: int, arm: int) -> tuple[space.MetricGraph, list[int], list[int]]:
    """Two rays from vertex 0 sharing `shared` edges, then diverging along arms of length `arm`."""
    edges = [(i, i + 1, 1) for i in range(shared)]
    a = list(range(shared + 1))
    b = list(range(shared + 1))
    n = shared + 1
    for path in (a, b):
        prev = shared
        for _ in range(arm):
            edges.append((prev, n, 1))
            path.append(n)
            prev = n
            n += 1
    return space.MetricGraph(n, edges), a, b


def ray_family(depths: list[int], arm: int) -> tuple[space.MetricGraph, list[list[int]]]:
    """A spine from the basepoint with one ray leaving at each depth and one ray continuing along the spine."""
    top = max(depths) + arm
    edges = [(i, i + 1, 1) for i in range(top)]
    rays = [list(range(top + 1))]
    n = top + 1
    for k in depths:
        path = list(range(k + 1))
        prev = k
        for _ in range(top - k):
            edges.append((prev, n, 1))
            path.append(n)
            prev = n
            n += 1
        rays.append(path)
    return space.MetricGraph(n, edges), rays


def weak_metric(seed: int = 0) -> SuiteResult:
    start = time.perf_counter()
    res = SuiteResult("weak-metric", "weak metric on ray prefixes and the divergence gauge")
    kappa = metric.KappaGauge(1.0, 0.0, 0.0)
    g, a, b = tripod(7, 30)
    t = metric.weak_metric_dkappa([[space.DiscreteQuasiGeodesic(g, a)], [space.DiscreteQuasiGeodesic(g, b)]], kappa)
    res.checks.append(Check("tripod d_kappa = 1/12", t.value(0, 1) == Fraction(1, 12), str(t.value(0, 1))))
    g2, rays = ray_family([1, 2, 4, 8, 16, 32, 64], 20)
    table = metric.weak_metric_dkappa([[space.DiscreteQuasiGeodesic(g2, r)] for r in rays], kappa)
    V = table.values()
    res.checks.append(Check("table symmetric with zero diagonal", bool((V == V.T).all() and (np.diag(V) == 0).all())))
    env = table.envelope
    scales = table.scales
    positive = [(s, f) for s, f in zip(scales, env) if s > 0]
    res.checks.append(Check("fitted modulus nondecreasing", all(x <= y for x, y in zip(env, env[1:]))))
    ok = len(positive) >= 2 and positive[0][1] < 10 * positive[1][1]
    res.checks.append(Check("modulus at the smallest scale below 10x the next", ok, positive[:2]))
    gval = metric.divergence_gauge(lambda s: 2.0, kappa, 0, 10)
    res.checks.append(Check("divergence gauge g(10) = 25", gval == 25, gval))
    res.measures = {"tripod": str(t.value(0, 1)), "scales": scales, "envelope": env, "g10": gval}
    _timed("runtime < 5 s", 5, res, start)
    return res


# 9 ------------------------------------------------------------------------------

def one_point_instance(ny: int, seed: int, hubs: int = 6) -> tuple[space.MetricGraph, list[int], list[int], int]:
    """Weighted hub tree with up to five leaf hubs as F and ny satellite points on the network."""
    rng = np.random.default_rng(seed)
    L = max(3, (2 * ny) // (hubs - 1) + 1)
    edges = []
    n = hubs
    for i in range(1, hubs):
        a, b = i, int(rng.integers(0, i))
        prev = a
        for _ in range(L - 1):
            edges.append((prev, n, int(rng.integers(10, 30))))
            prev = n
            n += 1
        edges.append((prev, b, int(rng.integers(10, 30))))
    g = space.MetricGraph(n, edges)
    F = [int(v) for v in range(hubs) if v in set(_leaves(g).tolist())][:5]
    lam = sorted(treenet.steiner_tree(g, F).vertices)
    Y = sorted(int(y) for y in rng.choice(lam, size=min(ny, len(lam)), replace=False))
    rest = [v for v in lam if v not in Y and v not in F]
    w = int(rng.choice(rest))
    return g, F, Y, w


def stable_decompositions(seed: int = 0) -> SuiteResult:
    start = time.perf_counter()
    res = SuiteResult("stable-decompositions", "one-point stable decompositions and 3-link chains")
    counts: dict[int, int] = {}
    diams: dict[int, int] = {}
    failed = []
    for ny in (10, 25, 50, 100, 200):
        for s in range(2):
            g, F, Y, w = one_point_instance(ny, 1000 * seed + s)
            dec = treenet.one_point_decomposition(treenet.EpsilonSetup.build(g, F, Y, eps=1), w)
            r = dec.report
            if not r.passed:
                failed.append((ny, s, r.failed()))
            counts[ny] = max(counts.get(ny, 0), r.measured_L1)
            diams[ny] = max(diams.get(ny, 0), r.measured_L2)
    res.checks.append(Check("all seven clauses pass", not failed, failed))
    res.checks.append(Check("unstable count sweep-independent", sweep_independent(counts), counts))
    res.checks.append(Check("unstable diameter sweep-independent", sweep_independent(diams), diams))
    chains = []
    for s in range(3):
        g, F, Y, _ = one_point_instance(60, 1000 * seed + 50 + s)
        rng = np.random.default_rng([seed, s])
        lam = sorted(treenet.steiner_tree(g, F).vertices)
        rest = [v for v in lam if v not in Y and v not in F]
        cur = treenet.EpsilonSetup.build(g, F, Y, eps=1)
        decs = []
        for x in rng.choice(rest, 3, replace=False).tolist():
            decs.append(treenet.one_point_decomposition(cur, int(x)))
            cur = cur.with_point(int(x))
        L1 = max(d.report.measured_L1 for d in decs)
        L2 = max(d.report.measured_L2 for d in decs)
        comp = treenet.chain_compose(decs)
        rep = treenet.check_decomposition(comp, 4 * L1 ** 2, 4 * L2 ** 2)
        chains.append({"L1": L1, "L2": L2, "passed": rep.passed, "failed": rep.failed(),
                       "gluing_violations": len(comp.extras["gluing_violations"])})
    res.checks.append(Check("3-link chains pass at (4 L1^2, 4 L2^2)", all(c["passed"] and not c["gluing_violations"] for c in chains), chains))
    res.measures = {"unstable_count": counts, "unstable_diameter": diams, "L_meas": max(max(counts.values()), max(diams.values())), "chains": chains}
    _timed("runtime < 60 s", 60, res, start)
    return res


# 10 -----------------------------------------------------------------------------

def _domain_family(rng: np.random.Generator) -> tuple[hhs.HHSInstance, list[int], np.ndarray]:
    """G3 instance with F spread over two flats; new points are drawn from the flats."""
    parent = space.subdivided_tree(8, rng, 4, 12)
    marks = sorted(int(m) for m in rng.choice(8, 3, replace=False))
    sides = [(int(rng.integers(10, 31)), int(rng.integers(10, 31))) for _ in marks]
    inst = hhs.tree_of_flats(parent, marks, sides)
    F = sorted({hhs.flat_point(inst, 0, sides[0][0], sides[0][1]), hhs.flat_point(inst, 1, sides[1][0], 0),
                hhs.flat_point(inst, 1, 0, sides[1][1])})
    return inst, F, np.arange(inst.info["parent_vertices"], inst.ambient.n)


def domain_control(seed: int = 0, families: int = 30) -> SuiteResult:
    start = time.perf_counter()
    res = SuiteResult("domain-control", "distinguished, involved and sporadic domains under G3 separation sweeps")
    rng = np.random.default_rng([seed, 10])
    K = 10
    sizes: dict[str, dict[int, int]] = {"distinguished": {}, "involved": {}, "sporadic": {}}
    exceptions = []
    realized: dict[int, int] = {}
    runs = 0
    for _ in range(families):
        inst, F, flats = _domain_family(rng)
        for sep in SEPARATIONS:
            x, real = _new_point(inst, F, sep, rng, flats)
            realized[sep] = max(realized.get(sep, 0), real)
            dd = hhs.domain_diff(inst, F, sorted(set(F) | {x}), K, 2 * inst.E)
            runs += 1
            for key, vals in (("distinguished", dd.distinguished), ("involved", dd.involved), ("sporadic", dd.sporadic)):
                sizes[key][sep] = max(sizes[key].get(sep, 0), len(vals))
            exceptions.extend(dd.consistency_failures)
    for key, cells in sizes.items():
        res.checks.append(Check(f"{key} count sweep-independent", sweep_independent(cells), cells))
    res.checks.append(Check("every sporadic domain is K-2E relevant for F", not exceptions, exceptions[:10]))
    res.measures = {"runs": runs, "realized_separation": realized, "bounds": {k: max(v.values()) for k, v in sizes.items()}, "by_separation": sizes}
    _timed("runtime < 30 s", 30, res, start)
    return res


SUITES: dict[str, Callable[..., SuiteResult]] = {
    "tree-oracle": tree_oracle,
    "product-oracle": product_oracle,
    "diagram": diagram,
    "planar-bound": planar_bound,
    "diacenter-contraction": diacenter_contraction,
    "deletion-audit": deletion_audit,
    "rips": rips_suite,
    "weak-metric": weak_metric,
    "stable-decompositions": stable_decompositions,
    "domain-control": domain_control,
}


def run_suite(name: str, seed: int = 0) -> SuiteResult:
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name](seed=seed)
