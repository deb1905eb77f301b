"""Metric layer: cubical distances, symmetrization, comparison checks, diacenters, weak metric."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ArgumentError, CapacityError, InfeasibleError
from .hhs import HHSInstance
from .model import ModelParams, allowed_matrix, build_hft, consistent_set, model_distance, model_distances
from .space import ComparisonTriangle, DiscreteQuasiGeodesic, comparison_point

TOL = 1e-9


@dataclass(frozen=True)
class KappaGauge:
    """Sublinear gauge t -> c1*sqrt(t) + c2 with floor constant C."""

    c1: float = 1.0
    c2: float = 0.0
    C: float = 0.0

    def __post_init__(self) -> None:
        if self.c1 < 0 or self.c2 < 0 or self.C < 0:
            raise ArgumentError("gauge coefficients must be nonnegative", (self.c1, self.c2, self.C))
        if self.c2 < 10 * self.C:
            raise ArgumentError("constant term must be at least 10*C", (self.c2, self.C))

    def __call__(self, t: float) -> float:
        return self.c1 * math.sqrt(max(float(t), 0.0)) + self.c2

    @classmethod
    def square_root(cls, D: float, C: float = 0.0) -> "KappaGauge":
        return cls(D, max(D, 10 * C), C)


# cubical distances ---------------------------------------------------------

def dhat_p(inst: HHSInstance, a: int, b: int, p: float, params: ModelParams | None = None) -> float:
    """l^p distance between the marked tuples of a and b in the two-point model."""
    if a == b:
        return 0.0
    return model_distance(inst, a, b, p, params)


def dhat_many(inst: HHSInstance, a: int, b: int, ps: Sequence[float], params: ModelParams | None = None) -> list[float]:
    """dhat_p for several exponents from a single model build."""
    return model_distances(inst, a, b, ps, params)


def model_metric_table(inst: HHSInstance, F: Sequence[int], p: float, params: ModelParams | None = None,
                       max_points: int = 5000) -> tuple[np.ndarray, np.ndarray]:
    """Vertex tuples of the model of F and their pairwise l^p distances.

    Only unconstrained models (products of trees) are tabulated in closed form.
    """
    data = build_hft(inst, F, params)
    h = data.hft
    if any(allowed_matrix(h, i, j) is not None for i in range(h.m) for j in range(h.m) if i != j):
        raise ArgumentError("closed-form table needs a model without consistency constraints")
    Q = consistent_set(h)
    rows = Q.tuples
    if len(rows) > max_points:
        raise CapacityError("model too large for a dense distance table", len(rows))
    per = [h.trees[i].dist[np.ix_(rows[:, i], rows[:, i])].astype(float) for i in range(h.m)]
    stack = np.stack(per)
    if np.isinf(p):
        D = stack.max(axis=0)
    else:
        D = (stack ** p).sum(axis=0) ** (1.0 / p)
    return rows, D


@dataclass
class SymmetrizedMetric:
    points: list[int]
    raw: np.ndarray
    table: np.ndarray
    defect: float

    def triangle_defect(self) -> float:
        return triangle_defect(self.table)


def triangle_defect(D: np.ndarray) -> float:
    """max over triples of d(x,z) - d(x,y) - d(y,z), or 0."""
    n = len(D)
    best = 0.0
    for y in range(n):
        s = D[:, y][:, None] + D[y, :][None, :]
        best = max(best, float((D - s).max()))
    return best


def symmetrized_metric(inst: HHSInstance, points: Sequence[int], p: float, symmetries: Sequence[Sequence[int]] | None = None,
                       params: ModelParams | None = None, distance: Callable[[int, int], float] | None = None) -> SymmetrizedMetric:
    """Max over the declared symmetries plus the measured triangle defect off the diagonal."""
    pts = [int(x) for x in points]
    syms = [list(range(inst.ambient.n))] if symmetries is None else [list(range(inst.ambient.n))] + [list(s) for s in symmetries]
    dist = distance or (lambda a, b: dhat_p(inst, a, b, p, params))
    cache: dict[tuple[int, int], float] = {}

    def d(a: int, b: int) -> float:
        key = (min(a, b), max(a, b))
        if key not in cache:
            cache[key] = dist(*key)
        return cache[key]

    n = len(pts)
    raw = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            raw[i, j] = raw[j, i] = max(d(g[pts[i]], g[pts[j]]) for g in syms)
    defect = triangle_defect(raw)
    table = raw + defect
    np.fill_diagonal(table, 0.0)
    return SymmetrizedMetric(pts, raw, table, defect)


# comparison checks -----------------------------------------------------------

@dataclass
class CatCheck:
    ok: bool
    margin: float
    worst: tuple[tuple[int, int], tuple[int, int]] | None


def _corners(sides: Sequence[DiscreteQuasiGeodesic]) -> tuple[int, int, int]:
    if len(sides) != 3:
        raise ArgumentError("a triangle has three sides", len(sides))
    for k in range(3):
        if sides[k][len(sides[k]) - 1] != sides[(k + 1) % 3][0]:
            raise ArgumentError("sides do not share endpoints", k)
    return sides[0][0], sides[1][0], sides[2][0]


def sub_cat0_check(sides: Sequence[DiscreteQuasiGeodesic], kappa: Callable[[float], float]) -> CatCheck:
    """Exhaustive comparison over all pairs of side points.

    Side k runs from corner k to corner k+1. The margin is the largest value of
    d(p,q) - d(p',q') - kappa(delta(p)) - kappa(delta(q)); ok means margin <= 0.
    """
    corners = _corners(sides)
    g = sides[0].graph
    C = max(s.C for s in sides)
    L = [g.d(corners[k], corners[(k + 1) % 3]) for k in range(3)]
    tri = ComparisonTriangle.from_lengths(*L)
    verts, planar, slack = [], [], []
    for k, s in enumerate(sides):
        a, b = corners[k], corners[(k + 1) % 3]
        for t, v in enumerate(s.vertices):
            da, db = g.d(a, v), g.d(v, b)
            verts.append(v)
            planar.append(comparison_point(tri, k, min(da, L[k]), C=math.inf))
            slack.append(kappa(max(min(da, db) - C, 0)))
    idx = np.array(verts)
    P = np.array(planar)
    K = np.array(slack)
    D = g.dist[np.ix_(idx, idx)].astype(float)
    Dbar = np.sqrt(((P[:, None, :] - P[None, :, :]) ** 2).sum(axis=2))
    M = D - Dbar - K[:, None] - K[None, :]
    flat = int(np.argmax(M))
    i, j = divmod(flat, len(idx))
    margin = float(M[i, j])
    offsets = np.cumsum([0] + [len(s) for s in sides])

    def loc(r: int) -> tuple[int, int]:
        k = int(np.searchsorted(offsets, r, side="right") - 1)
        return k, r - int(offsets[k])

    return CatCheck(margin <= TOL, margin, (loc(i), loc(j)))


def coarse_convexity_check(gamma: DiscreteQuasiGeodesic, gamma2: DiscreteQuasiGeodesic, kappa: Callable[[float], float]) -> list[tuple[int, int]]:
    """Pairs (t, t') with C < t <= t' violating the same-origin convexity bound."""
    if gamma[0] != gamma2[0]:
        raise ArgumentError("quasigeodesics must share their origin")
    g = gamma.graph
    C = max(gamma.C, gamma2.C)
    n = min(len(gamma), len(gamma2))
    d = np.array([g.d(gamma[t], gamma2[t]) for t in range(n)], dtype=float)
    bad = []
    for t in range(n):
        if t <= C:
            continue
        for t2 in range(t, n):
            if t2 - C <= 0:
                continue
            if d[t] > t / (t2 - C) * d[t2] + 2 * kappa(t) + TOL:
                bad.append((t, t2))
    return bad


# diacenters ------------------------------------------------------------------

def diameter(A: Sequence[int], dist: np.ndarray) -> float:
    idx = np.asarray(sorted(set(int(a) for a in A)))
    return float(dist[np.ix_(idx, idx)].max())


def furthest_pair(A: Sequence[int], dist: np.ndarray) -> tuple[int, int]:
    pts = sorted(set(int(a) for a in A))
    sub = dist[np.ix_(pts, pts)]
    m = sub.max()
    i, j = np.argwhere(sub >= m - TOL)[0]
    return pts[int(i)], pts[int(j)]


def diacenter(A: Iterable[int], C: float, dist: np.ndarray, candidates: Sequence[int] | None = None) -> int:
    """Least-id coarse midpoint of the lexicographically least furthest pair of A."""
    pts = sorted(set(int(a) for a in A))
    if not pts:
        raise ArgumentError("empty point set")
    if len(pts) == 1:
        return pts[0]
    a, b = furthest_pair(pts, dist)
    dab = dist[a, b]
    cand = np.arange(len(dist)) if candidates is None else np.asarray(sorted(set(candidates)))
    dac, dcb = dist[a, cand], dist[cand, b]
    ok = (dab >= dac + dcb - 3 * C - TOL) & (np.abs(dac - dab / 2) <= C + TOL)
    hits = np.flatnonzero(ok)
    if len(hits) == 0:
        raise InfeasibleError("no coarse midpoint for the furthest pair", (a, b, C))
    return int(cand[hits[0]])


@dataclass
class ContractionSample:
    A: tuple[int, ...]
    B: tuple[int, ...]
    distance: float
    diam: float

    def excess(self, eps: float) -> float:
        return self.distance - (1 - eps) * self.diam


def contraction_samples(dist: np.ndarray, C: float, rng: np.random.Generator, count: int, max_size: int = 6,
                        radius: tuple[float, float] | None = None) -> list[ContractionSample]:
    """Random nested pairs A within B drawn from the point indices of dist.

    With ``radius`` given, B is drawn from a ball of uniformly random radius in
    that range around a random center, so the diameters seen do not depend on
    the size of the model.
    """
    n = len(dist)
    out = []
    while len(out) < count:
        k = int(rng.integers(2, max_size + 1))
        pool = np.arange(n)
        if radius is not None:
            x = int(rng.integers(n))
            pool = np.flatnonzero(dist[x] <= rng.uniform(*radius) + TOL)
            if len(pool) < 2:
                continue
        B = sorted(int(v) for v in rng.choice(pool, size=min(k, len(pool)), replace=False))
        m = int(rng.integers(1, len(B) + 1))
        A = sorted(int(v) for v in rng.choice(B, size=m, replace=False))
        out.append(_sample(A, B, C, dist))
    return out


def _sample(A: Sequence[int], B: Sequence[int], C: float, dist: np.ndarray) -> ContractionSample:
    da, db = diacenter(A, C, dist), diacenter(B, C, dist)
    return ContractionSample(tuple(sorted(A)), tuple(sorted(B)), float(dist[da, db]), diameter(B, dist))


def sharpen_samples(dist: np.ndarray, C: float, eps: float, seeds: Sequence[ContractionSample], rng: np.random.Generator,
                    steps: int = 200, radius: float | None = None) -> list[ContractionSample]:
    """Hill-climb each seed sample towards a larger excess.

    A move replaces one point of B (keeping its membership in A) by a random
    point of the ball of the given radius around the first point of the seed,
    or toggles the membership of one point in A. Equal-excess moves are taken.
    """
    out = []
    for s in seeds:
        A, B = set(s.A), list(s.B)
        pool = np.arange(len(dist)) if radius is None else np.flatnonzero(dist[B[0]] <= radius + TOL)
        best = s
        for _ in range(steps):
            A2, B2 = set(A), list(B)
            i = int(rng.integers(len(B2)))
            if rng.random() < 0.25 and len(B2) > 1:
                v = B2[i]
                if v in A2 and len(A2) > 1:
                    A2.discard(v)
                else:
                    A2.add(v)
            else:
                w = int(rng.choice(pool))
                if w in B2:
                    continue
                if B2[i] in A2:
                    A2.discard(B2[i])
                    A2.add(w)
                B2[i] = w
            cand = _sample(sorted(A2), sorted(B2), C, dist)
            if cand.excess(eps) >= best.excess(eps):
                best, A, B = cand, A2, B2
        out.append(best)
    return out


def fit_contraction_constant(samples: Sequence[ContractionSample], eps: float) -> float:
    return max([0.0] + [s.excess(eps) for s in samples])


def contraction_violations(samples: Sequence[ContractionSample], eps: float, Cp: float) -> list[ContractionSample]:
    return [s for s in samples if s.excess(eps) > Cp + TOL]


# weak metric -----------------------------------------------------------------

def _sup_time(a: DiscreteQuasiGeodesic, b: DiscreteQuasiGeodesic, kappa: Callable[[float], float]) -> int:
    g = a.graph
    n = min(len(a), len(b))
    best = 0
    for t in range(n):
        if g.d(a[t], b[t]) <= 3 * kappa(t) + TOL:
            best = t
    return best


@dataclass
class WeakMetricTable:
    """Pairwise weak distances 1/t between classes of quasigeodesic prefixes."""

    times: np.ndarray
    scales: list[float] = field(default_factory=list)
    envelope: list[float] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.times)

    def value(self, i: int, j: int) -> Fraction | float:
        if i == j:
            return Fraction(0)
        t = int(self.times[i, j])
        return math.inf if t == 0 else Fraction(1, t)

    def values(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        for i in range(self.n):
            for j in range(self.n):
                out[i, j] = float(self.value(i, j))
        return out

    def modulus(self, s: float) -> float:
        """Fitted envelope at s (step function, right-continuous)."""
        k = int(np.searchsorted(self.scales, s, side="right")) - 1
        return 0.0 if k < 0 else self.envelope[k]


def fit_modulus(D: np.ndarray) -> tuple[list[float], list[float]]:
    """Minimal nondecreasing step function f with D[x,z] <= f(max(D[x,y], D[y,z]))."""
    n = len(D)
    best: dict[float, float] = {}
    for y in range(n):
        m = np.maximum(D[:, y][:, None], D[y, :][None, :])
        for s in np.unique(m):
            v = float(D[m == s].max())
            best[float(s)] = max(best.get(float(s), 0.0), v)
    scales = sorted(best)
    env, run = [], 0.0
    for s in scales:
        run = max(run, best[s])
        env.append(run)
    return scales, env


def weak_metric_dkappa(classes: Sequence[Sequence[DiscreteQuasiGeodesic]], kappa: Callable[[float], float]) -> WeakMetricTable:
    """Each class lists representatives of one point or ray, all from a common basepoint."""
    if not classes or any(len(c) == 0 for c in classes):
        raise ArgumentError("every class needs a representative")
    base = classes[0][0][0]
    if any(r[0] != base for c in classes for r in c):
        raise ArgumentError("prefixes must share the basepoint", base)
    n = len(classes)
    times = np.full((n, n), -1, dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            # inf of 1/sup is attained by the largest sup
            t = max(_sup_time(a, b, kappa) for a in classes[i] for b in classes[j])
            times[i, j] = times[j, i] = t
    table = WeakMetricTable(times)
    table.scales, table.envelope = fit_modulus(table.values())
    return table


def divergence_gauge(eta: Callable[[float], float], kappa: Callable[[float], float], C: float, t: float, limit: int = 10**6) -> int:
    """Largest integer g with eta(t)*t'/(t-C) <= kappa(t') for every integer t' <= g."""
    if t <= C:
        return 0
    slope = eta(t) / (t - C)
    if slope >= kappa(1):
        return 0
    for s in range(limit + 1):
        if slope * s > kappa(s) + TOL:
            return s - 1
    raise ArgumentError("gauge scan did not terminate", (t, limit))


def divergence_violations(pairs: Iterable[tuple[DiscreteQuasiGeodesic, DiscreteQuasiGeodesic]], eta: Callable[[float], float],
                          kappa: Callable[[float], float], C: float) -> list[tuple[int, int, int]]:
    """(pair index, t, t') where closeness at t fails to give 3*kappa closeness at t' <= g(t)."""
    bad = []
    for k, (a, b) in enumerate(pairs):
        g = a.graph
        n = min(len(a), len(b))
        d = [g.d(a[s], b[s]) for s in range(n)]
        for t in range(n):
            if d[t] > eta(t) + TOL:
                continue
            top = min(divergence_gauge(eta, kappa, C, t), n - 1)
            for s in range(top + 1):
                if d[s] > 3 * kappa(s) + TOL:
                    bad.append((k, t, s))
                    break
    return bad
