"""Vietoris-Rips complexes, mod-2 homology and the diacenter subdivision step."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ArgumentError, CapacityError
from .metric import TOL, diacenter

MAX_SIMPLICES = 5_000_000
MAX_DIM = 3


@dataclass
class SimplicialComplex:
    """Finite simplicial complex; simplices[k] lists sorted vertex tuples of dimension k."""

    simplices: list[list[tuple[int, ...]]]

    @classmethod
    def from_facets(cls, facets: Iterable[Iterable[int]], max_dim: int | None = None) -> "SimplicialComplex":
        faces: dict[int, set] = {}
        for f in facets:
            f = tuple(sorted(set(int(v) for v in f)))
            top = len(f) if max_dim is None else min(len(f), max_dim + 1)
            for k in range(1, top + 1):
                faces.setdefault(k - 1, set()).update(itertools.combinations(f, k))
        dims = max(faces) + 1 if faces else 0
        return cls([sorted(faces.get(k, ())) for k in range(dims)])

    @property
    def dim(self) -> int:
        return len(self.simplices) - 1

    @property
    def vertices(self) -> list[int]:
        return [s[0] for s in self.simplices[0]] if self.simplices else []

    def count(self) -> int:
        return sum(len(s) for s in self.simplices)

    def is_closed(self) -> bool:
        for k in range(1, len(self.simplices)):
            lower = set(self.simplices[k - 1])
            for s in self.simplices[k]:
                if any(f not in lower for f in itertools.combinations(s, k)):
                    return False
        return True

    def contains(self, other: "SimplicialComplex") -> bool:
        return all(k < len(self.simplices) and set(ss) <= set(self.simplices[k]) for k, ss in enumerate(other.simplices) if ss)

    def to_json(self) -> dict:
        return {"format": "hullcube.complex/1", "simplices": [[list(s) for s in ss] for ss in self.simplices]}


@dataclass
class FlagComplex(SimplicialComplex):
    points: list[int] = field(default_factory=list)
    T: float = 0.0
    adjacency: np.ndarray | None = None


def _proximity(dist: np.ndarray, T: float) -> np.ndarray:
    A = dist <= T + TOL
    np.fill_diagonal(A, False)
    return A


def _cliques(A: np.ndarray, cap: int, guard: int) -> list[list[tuple[int, ...]]]:
    n = len(A)
    nbrs = [frozenset(np.flatnonzero(A[v])) for v in range(n)]
    levels: list[list[tuple[int, ...]]] = [[(v,) for v in range(n)]]
    total = n
    for k in range(1, cap + 1):
        nxt = []
        for s in levels[-1]:
            common = nbrs[s[0]]
            for v in s[1:]:
                common = common & nbrs[v]
            for w in sorted(x for x in common if x > s[-1]):
                nxt.append(s + (int(w),))
            if total + len(nxt) > guard:
                raise CapacityError("clique enumeration exceeds the simplex guard", guard)
        if not nxt:
            break
        total += len(nxt)
        levels.append(nxt)
    return levels


def rips_complex(points: Sequence[int], dist: np.ndarray, T: float, dim_cap: int = MAX_DIM, guard: int = MAX_SIMPLICES) -> FlagComplex:
    """Flag complex of the graph joining points at distance at most T.

    Simplices are labelled by positions in ``points``; dist is indexed the same way.
    """
    if T < 0:
        raise ArgumentError("threshold must be nonnegative", T)
    if not 0 <= dim_cap <= MAX_DIM:
        raise ArgumentError("dimension cap must lie in 0..3", dim_cap)
    D = np.asarray(dist, dtype=float)
    if D.shape != (len(points), len(points)):
        raise ArgumentError("distance table does not match the points", D.shape)
    A = _proximity(D, T)
    levels = _cliques(A, dim_cap, guard)
    return FlagComplex(levels, [int(p) for p in points], float(T), A)


# homology over the two-element field -------------------------------------------

def _rank_gf2(rows: list[int]) -> int:
    """Rank of a GF(2) matrix given as integer bit rows."""
    pivots: dict[int, int] = {}
    rank = 0
    for r in rows:
        while r:
            top = r.bit_length() - 1
            p = pivots.get(top)
            if p is None:
                pivots[top] = r
                rank += 1
                break
            r ^= p
    return rank


def boundary_rank(cx: SimplicialComplex, k: int) -> int:
    """Rank of the boundary map from k-chains to (k-1)-chains; k = 0 is the augmentation."""
    if k >= len(cx.simplices) or not cx.simplices[k]:
        return 0
    if k == 0:
        return 1
    index = {s: i for i, s in enumerate(cx.simplices[k - 1])}
    rows = []
    for s in cx.simplices[k]:
        r = 0
        for f in itertools.combinations(s, k):
            r |= 1 << index[f]
        rows.append(r)
    return _rank_gf2(rows)


def homology_z2(cx: SimplicialComplex, max_dim: int = 2) -> list[int]:
    """Reduced Betti numbers in degrees 0..max_dim (the complex must carry dimension max_dim + 1)."""
    out = []
    for k in range(max_dim + 1):
        n_k = len(cx.simplices[k]) if k < len(cx.simplices) else 0
        out.append(n_k - boundary_rank(cx, k) - boundary_rank(cx, k + 1))
    return out


def reduced_betti_dense(cx: SimplicialComplex, max_dim: int = 2) -> list[int]:
    """Reference computation: explicit augmented chain complex, dense elimination mod 2."""

    def rank(M: np.ndarray) -> int:
        M = M.copy() % 2
        r = 0
        rows, cols = M.shape
        for c in range(cols):
            piv = np.flatnonzero(M[r:, c])
            if len(piv) == 0:
                continue
            p = r + piv[0]
            M[[r, p]] = M[[p, r]]
            hit = np.flatnonzero(M[:, c])
            hit = hit[hit != r]
            M[hit] ^= M[r]
            r += 1
            if r == rows:
                break
        return r

    def matrix(k: int) -> np.ndarray:
        # boundary from dimension k to k-1, with dimension -1 the one-point augmentation
        src = cx.simplices[k] if k < len(cx.simplices) else []
        if k == 0:
            return np.ones((1, len(src)), dtype=np.uint8)
        dst = cx.simplices[k - 1]
        M = np.zeros((len(dst), len(src)), dtype=np.uint8)
        pos = {s: i for i, s in enumerate(dst)}
        for j, s in enumerate(src):
            for i in range(len(s)):
                M[pos[s[:i] + s[i + 1:]], j] = 1
        return M

    out = []
    for k in range(max_dim + 1):
        n_k = len(cx.simplices[k]) if k < len(cx.simplices) else 0
        dk = matrix(k) if n_k else np.zeros((0, 0), dtype=np.uint8)
        up = matrix(k + 1) if k + 1 < len(cx.simplices) and cx.simplices[k + 1] else np.zeros((0, 0), dtype=np.uint8)
        out.append(n_k - (rank(dk) if dk.size else 0) - (rank(up) if up.size else 0))
    return out


# contractibility evidence --------------------------------------------------------

def dominated_core(A: np.ndarray) -> list[int]:
    """Repeatedly delete a vertex whose closed neighbourhood lies in a neighbour's.

    Deleting such a vertex from a flag complex is a homotopy equivalence, so the
    flag complex on the surviving vertices has the homotopy type of the original.
    Candidates are found with one matrix product per pass, then deleted one at
    a time after an exact recheck against the current neighbourhoods.
    """
    n = len(A)
    M = np.asarray(A, dtype=bool) | np.eye(n, dtype=bool)
    alive = np.ones(n, dtype=bool)
    while True:
        idx = np.flatnonzero(alive)
        Ab = M[np.ix_(idx, idx)]
        # miss[v, u] counts closed neighbours of v outside the closed neighbourhood of u
        miss = Ab.astype(np.float32) @ (~Ab).astype(np.float32).T
        cand = idx[((miss == 0) & Ab & ~np.eye(len(idx), dtype=bool)).any(axis=1)]
        removed = False
        for v in cand:
            nbrs = np.flatnonzero(M[v])
            nbrs = nbrs[nbrs != v]
            if len(nbrs) and (~(M[v] & ~M[nbrs]).any(axis=1)).any():
                alive[v] = False
                M[v, :] = False
                M[:, v] = False
                removed = True
        if not removed:
            return [int(v) for v in np.flatnonzero(alive)]


@dataclass
class RipsEvidence:
    T: float
    core_size: int
    betti: list[int]

    @property
    def acyclic(self) -> bool:
        return all(b == 0 for b in self.betti)


def rips_evidence(dist: np.ndarray, T: float, max_dim: int = 2, guard: int = MAX_SIMPLICES) -> RipsEvidence:
    """Reduced Betti numbers of the Rips complex at T, computed on its dominated-vertex core."""
    D = np.asarray(dist, dtype=float)
    core = dominated_core(_proximity(D, T))
    if len(core) == 1:
        return RipsEvidence(float(T), 1, [0] * (max_dim + 1))
    sub = D[np.ix_(core, core)]
    cx = rips_complex(core, sub, T, min(max_dim + 1, MAX_DIM), guard)
    return RipsEvidence(float(T), len(core), homology_z2(cx, max_dim))


def minimal_threshold(dist: np.ndarray, thresholds: Sequence[float] | None = None, max_dim: int = 2) -> tuple[float, list[RipsEvidence]]:
    """Least threshold from which every checked threshold gives an acyclic complex.

    Thresholds default to the distinct pairwise distances; beyond the diameter
    the complex is a full simplex. The scan runs downwards and stops at the
    first threshold with nonzero reduced homology, which is reported last.
    """
    D = np.asarray(dist, dtype=float)
    if thresholds is None:
        thresholds = sorted(set(np.round(D[np.triu_indices(len(D), 1)], 9).tolist()))
    reports = []
    T0 = max(thresholds) if len(thresholds) else 0.0
    for t in sorted(thresholds, reverse=True):
        r = rips_evidence(D, t, max_dim)
        reports.append(r)
        if not r.acyclic:
            break
        T0 = r.T
    return T0, reports


# subdivision step -------------------------------------------------------------------

@dataclass
class SubdivisionReport:
    images: dict[tuple[int, ...], int]
    bound: float
    failures: list[tuple[tuple[int, ...], tuple[int, ...], float]]

    @property
    def ok(self) -> bool:
        return not self.failures


def subdivision_step(simplices: Iterable[Sequence[int]], dist: np.ndarray, C: float, T: float, eps: float, Cp: float) -> SubdivisionReport:
    """Send each barycentric vertex (a face of an image simplex) to the diacenter of its points.

    Barycentric vertices are adjacent when one face contains the other; their
    images must lie within (1 - eps) * T + Cp of each other.
    """
    bound = (1 - eps) * T + Cp
    images: dict[tuple[int, ...], int] = {}
    failures = []
    for s in simplices:
        pts = tuple(sorted(set(int(v) for v in s)))
        faces = [f for k in range(1, len(pts) + 1) for f in itertools.combinations(pts, k)]
        for f in faces:
            if f not in images:
                images[f] = diacenter(f, C, dist)
        for f in faces:
            for g in faces:
                if len(f) < len(g) and set(f) <= set(g):
                    d = float(dist[images[f], images[g]])
                    if d > bound + TOL:
                        failures.append((f, g, d))
    return SubdivisionReport(images, bound, sorted(set(failures)))
