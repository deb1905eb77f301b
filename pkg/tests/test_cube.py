from __future__ import annotations

import itertools
import json
import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hullcube import cube
from hullcube.cube import (
    CubeComplex,
    complex_from_tree_product,
    convex_embedding_check,
    delete_hyperplanes,
    dual_cube_complex,
    lp_distance,
    lp_distance_detail,
    maximal_cubes,
    principal_vertex,
)
from hullcube.errors import ArgumentError, CapacityError


def _orientation_oracle(points: list, walls: list[set]) -> set[tuple[int, ...]]:
    """All orientations whose chosen halfspaces meet pairwise."""
    out = set()
    for bits in itertools.product((0, 1), repeat=len(walls)):
        halves = [set(w) if b else set(points) - set(w) for w, b in zip(walls, bits)]
        if all(a & b for a, b in itertools.combinations(halves, 2)) and all(halves):
            out.add(bits)
    return out


def _skeleton(cx: CubeComplex) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(range(cx.n))
    for u, v in itertools.combinations(range(cx.n), 2):
        if int((cx.orient[u] != cx.orient[v]).sum()) == 1:
            g.add_edge(u, v)
    return g


def _random_tree(n: int, rng: np.random.Generator) -> nx.Graph:
    t = nx.Graph()
    t.add_node(0)
    for i in range(1, n):
        t.add_edge(int(rng.integers(0, i)), i)
    return t


def _tree_product(seed: int, a: int, b: int) -> tuple[CubeComplex, nx.Graph, nx.Graph, list[tuple[int, int]]]:
    rng = np.random.default_rng(seed)
    t1, t2 = _random_tree(a, rng), _random_tree(b, rng)
    tuples = [(x, y) for x in t1.nodes for y in t2.nodes]
    cx, _ = complex_from_tree_product([t1, t2], tuples)
    return cx, t1, t2, tuples


def _wallspace(seed: int, n: int, h: int) -> tuple[list[int], list[set[int]]]:
    rng = np.random.default_rng(seed)
    walls: list[set[int]] = []
    while len(walls) < h:
        k = int(rng.integers(1, n))
        w = set(int(x) for x in rng.choice(n, k, replace=False))
        if w not in walls and set(range(n)) - w not in walls:
            walls.append(w)
    return list(range(n)), walls


def test_square_distances() -> None:
    sq = dual_cube_complex([0, 1, 2, 3], [{0, 1}, {0, 2}])
    assert (sq.n, sq.dim) == (4, 2)
    far = sq.vertex_of([1, 1])
    near = sq.vertex_of([0, 0])
    assert lp_distance(sq, near, far, 1) == 2
    assert lp_distance(sq, near, far, 2) == pytest.approx(math.sqrt(2))
    assert lp_distance(sq, near, far, np.inf) == 1


def test_rectangle_is_a_product() -> None:
    rect = CubeComplex(["a", "b1", "b2"], np.array([[0, 0, 0], [0, 1, 0], [0, 1, 1], [1, 0, 0], [1, 1, 0], [1, 1, 1]]))
    assert rect.product_of_trees()
    r = lp_distance_detail(rect, 0, 5, 2)
    assert r.exact and r.value == pytest.approx(math.sqrt(5))
    assert maximal_cubes(rect) == [(0, (0, 1)), (1, (0, 2))]


def test_l_shape_uses_subdivision() -> None:
    rows = [[a1, a2, b1, b2] for a1, a2 in [(0, 0), (1, 0), (1, 1)] for b1, b2 in [(0, 0), (1, 0), (1, 1)] if not (a1 + a2 == 2 and b1 + b2 == 2)]
    L = CubeComplex(["x1", "x2", "y1", "y2"], np.array(rows))
    assert L.n == 8 and not L.product_of_trees()
    # the straight segment between the two far corners stays in the L
    r = lp_distance_detail(L, L.vertex_of([1, 1, 0, 0]), L.vertex_of([0, 0, 1, 1]), 2)
    assert not r.exact
    assert r.value == pytest.approx(2 * math.sqrt(2), abs=1e-9)
    assert r.error_estimate < 1e-9


def test_l_shape_detour_around_missing_square() -> None:
    rows = [[a1, a2, b1, b2] for a1, a2 in [(0, 0), (1, 0), (1, 1)] for b1, b2 in [(0, 0), (1, 0), (1, 1)] if not (a1 + a2 == 2 and b1 + b2 == 2)]
    L = CubeComplex(["x1", "x2", "y1", "y2"], np.array(rows))
    # from (2, 1) to (1, 2): the straight line crosses the hole, the geodesic bends at (1, 1)
    a = [1.0, 1.0, 1.0, 0.0]
    b = [1.0, 0.0, 1.0, 1.0]
    assert lp_distance(L, a, b, 2) == pytest.approx(2.0, abs=1e-9)


def test_points_outside_complex_rejected() -> None:
    sq = dual_cube_complex([0, 1, 2, 3], [{0, 1}, {0, 2}])
    with pytest.raises(ArgumentError):
        lp_distance(sq, 0, 7, 1)
    with pytest.raises(ArgumentError):
        lp_distance(sq, 0, 1, 3)
    with pytest.raises(ArgumentError):
        lp_distance(sq, [0.5, 1.5], 0, 2)


def test_path_deletion_quotient() -> None:
    path = dual_cube_complex(range(4), [{0}, {0, 1}, {0, 1, 2}])
    q, m = delete_hyperplanes(path, [1])
    assert q.n == 3
    assert q.l1(m[path.vertex_of([1, 1, 1])], m[path.vertex_of([0, 0, 0])]) == 2


def test_grid_complex_and_convex_subcomplex() -> None:
    pts = [(i, j) for i in range(4) for j in range(4)]
    walls = [{p for p in pts if p[0] < k} for k in (1, 2, 3)] + [{p for p in pts if p[1] < k} for k in (1, 2, 3)]
    grid = dual_cube_complex(pts, walls)
    assert (grid.n, grid.dim) == (16, 2)
    assert grid.median_closed()[0] and grid.connected()
    sub = [v for v in range(grid.n) if grid.orient[v, 0] == 1 and grid.orient[v, 3] == 1]
    assert convex_embedding_check(np.array(sub), CubeComplex(grid.walls, grid.orient[sub]), grid).ok


def test_diagonal_is_not_convex() -> None:
    sq = dual_cube_complex([0, 1, 2, 3], [{0, 1}, {0, 2}])
    res = convex_embedding_check([0, 3], CubeComplex(["p", "q"], np.array([[0, 0], [1, 1]])), sq)
    assert not res.ok
    assert res.certificate["reason"] in {"edge not preserved", "image not geodesically closed"}


def test_json_and_dot_round_trip() -> None:
    cx, *_ = _tree_product(3, 5, 4)
    doc = json.loads(json.dumps(cx.to_json(), sort_keys=True))
    back = CubeComplex.from_json(doc)
    assert back.n == cx.n and (back.orient == cx.orient).all()
    dot = cx.to_dot()
    assert dot.startswith("graph") and dot.count("--") == len(cx.edges)


def test_duplicate_rows_rejected() -> None:
    with pytest.raises(ArgumentError):
        CubeComplex(["a"], np.array([[0], [0]]))


def test_vertex_guard(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setattr(cube, "MAX_VERTICES", 10)
    pts = [(i, j) for i in range(4) for j in range(4)]
    walls = [{p for p in pts if p[0] < k} for k in (1, 2, 3)] + [{p for p in pts if p[1] < k} for k in (1, 2, 3)]
    with pytest.raises(CapacityError):
        dual_cube_complex(pts, walls)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(4, 8), st.integers(1, 6))
def test_dual_complex_matches_orientation_enumeration(seed: int, n: int, h: int) -> None:
    pts, walls = _wallspace(seed, n, h)
    cx = dual_cube_complex(pts, walls)
    got = {tuple(int(b) for b in row) for row in cx.orient}
    assert got == _orientation_oracle(pts, walls)
    for p in pts:
        assert principal_vertex(cx, pts, walls, p) is not None


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(4, 8), st.integers(1, 6))
def test_dual_complex_is_median_and_l1_is_graph_distance(seed: int, n: int, h: int) -> None:
    pts, walls = _wallspace(seed, n, h)
    cx = dual_cube_complex(pts, walls)
    assert cx.median_closed()[0]
    sp = dict(nx.all_pairs_shortest_path_length(_skeleton(cx)))
    for u, v in itertools.combinations(range(cx.n), 2):
        assert cx.l1(u, v) == sp[u][v]
    for x, y, z in itertools.islice(itertools.combinations(range(cx.n), 3), 50):
        maj = ((cx.orient[x].astype(int) + cx.orient[y] + cx.orient[z]) >= 2).astype(int)
        assert cx.median(x, y, z) == cx.vertex_of(maj)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6), st.integers(2, 6))
def test_tree_product_distances(seed: int, a: int, b: int) -> None:
    cx, t1, t2, tuples = _tree_product(seed, a, b)
    assert cx.product_of_trees()
    d1 = dict(nx.all_pairs_shortest_path_length(t1))
    d2 = dict(nx.all_pairs_shortest_path_length(t2))
    rng = np.random.default_rng(seed)
    for _ in range(10):
        i, j = (int(x) for x in rng.integers(0, len(tuples), 2))
        (x1, y1), (x2, y2) = tuples[i], tuples[j]
        p, q = d1[x1][x2], d2[y1][y2]
        assert lp_distance(cx, i, j, 1) == p + q
        assert lp_distance(cx, i, j, 2) == pytest.approx(math.hypot(p, q))
        assert lp_distance(cx, i, j, np.inf) == max(p, q)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 7), st.integers(2, 7), st.integers(0, 4))
def test_deletion_is_one_lipschitz(seed: int, a: int, b: int, k: int) -> None:
    cx, *_ = _tree_product(seed, a, b)
    rng = np.random.default_rng(seed)
    G = [cx.walls[int(j)] for j in rng.choice(cx.h, min(k, cx.h), replace=False)]
    q, m = delete_hyperplanes(cx, G)
    assert q.median_closed()[0]
    keep = [j for j in range(cx.h) if cx.walls[j] not in G]
    for _ in range(15):
        u, v = (int(x) for x in rng.integers(0, cx.n, 2))
        assert q.l1(m[u], m[v]) == int((cx.orient[u, keep] != cx.orient[v, keep]).sum()) <= cx.l1(u, v)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6), st.integers(2, 6))
def test_norm_ordering(seed: int, a: int, b: int) -> None:
    cx, *_ = _tree_product(seed, a, b)
    rng = np.random.default_rng(seed + 1)
    u, v = (int(x) for x in rng.integers(0, cx.n, 2))
    d1, d2, dinf = (lp_distance(cx, u, v, p) for p in (1, 2, np.inf))
    assert dinf <= d2 + 1e-12 <= d1 + 2e-12
    assert d1 <= 2 * dinf and d2 <= math.sqrt(2) * dinf + 1e-9
