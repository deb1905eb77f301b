from __future__ import annotations

import itertools
import math
from fractions import Fraction

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hullcube.errors import ArgumentError, GeometryError, InstanceFormatError
from hullcube.space import (
    ComparisonTriangle,
    DiscreteQuasiGeodesic,
    MetricGraph,
    cat0_quasigeodesic_bound,
    comparison_point,
    cycle_graph,
    grid_graph,
    hull,
    hyperbolicity_delta,
    path_graph,
    point_segment_distance,
    random_tree,
)


def _nx(g: MetricGraph) -> nx.Graph:
    h = nx.Graph()
    h.add_nodes_from(range(g.n))
    h.add_weighted_edges_from(g.edges)
    return h


def _delta_oracle(g: MetricGraph) -> Fraction:
    d = dict(nx.all_pairs_dijkstra_path_length(_nx(g)))
    best = 0
    for x, y, z, w in itertools.product(range(g.n), repeat=4):
        s = sorted([d[x][y] + d[z][w], d[x][z] + d[y][w], d[x][w] + d[y][z]])
        best = max(best, s[2] - s[1])
    return Fraction(best, 2)


def _hull_oracle(g: MetricGraph, F: list[int]) -> set[int]:
    h = _nx(g)
    out = set(F)
    for a, b in itertools.combinations(F, 2):
        for p in nx.all_shortest_paths(h, a, b, weight="weight"):
            out |= set(p)
    return out


def _weighted_graph(draw_seed: int, n: int, extra: int) -> MetricGraph:
    rng = np.random.default_rng(draw_seed)
    edges = {(int(rng.integers(0, i)), i): int(rng.integers(1, 6)) for i in range(1, n)}
    for _ in range(extra):
        u, v = sorted(int(x) for x in rng.choice(n, 2, replace=False))
        edges.setdefault((u, v), int(rng.integers(1, 6)))
    return MetricGraph(n, [(u, v, w) for (u, v), w in edges.items()])


def test_distances_match_dijkstra() -> None:
    g = _weighted_graph(3, 40, 30)
    ref = dict(nx.all_pairs_dijkstra_path_length(_nx(g)))
    for u in range(g.n):
        for v in range(g.n):
            assert g.d(u, v) == ref[u][v]


@pytest.mark.parametrize(
    "doc",
    [
        {"vertices": 3, "edges": [[0, 0, 1], [0, 1, 1], [1, 2, 1]]},
        {"vertices": 2, "edges": [[0, 1, 0]]},
        {"vertices": 2, "edges": [[0, 1, 1], [1, 0, 2]]},
        {"vertices": 3, "edges": [[0, 1, 1]]},
        {"edges": []},
    ],
)
def test_loader_rejects_bad_graphs(doc: dict) -> None:
    with pytest.raises(InstanceFormatError):
        MetricGraph.from_json(doc)


def test_json_round_trip() -> None:
    g = _weighted_graph(1, 12, 5)
    assert MetricGraph.from_json(g.to_json()) == g


def test_tree_is_zero_hyperbolic() -> None:
    assert hyperbolicity_delta(random_tree(25, np.random.default_rng(0))) == 0


def test_four_cycle_delta_is_one() -> None:
    assert hyperbolicity_delta(cycle_graph(4)) == 1


def test_six_cycle_and_grid_delta_match_scan() -> None:
    # frozen from the quadruple scan oracle
    assert hyperbolicity_delta(cycle_graph(6)) == _delta_oracle(cycle_graph(6)) == 1
    assert hyperbolicity_delta(grid_graph(3, 3)) == _delta_oracle(grid_graph(3, 3)) == 2


def test_hull_examples() -> None:
    t = path_graph(6)
    assert hull(t, [3]) == {3}
    g = random_tree(30, np.random.default_rng(2))
    leaves = [v for v in range(g.n) if len(g.adj[v]) == 1][:2]
    assert hull(g, leaves) == set(nx.shortest_path(_nx(g), *leaves))
    assert hull(cycle_graph(4), [0, 2]) == {0, 1, 2, 3}


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(6, 18), st.integers(0, 10))
def test_hull_matches_path_enumeration_and_is_monotone(seed: int, n: int, extra: int) -> None:
    g = _weighted_graph(seed, n, extra)
    rng = np.random.default_rng(seed)
    F = sorted(int(x) for x in rng.choice(n, 3, replace=False))
    assert hull(g, F) == _hull_oracle(g, F)
    assert hull(g, F[:2]) <= hull(g, F)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(4, 30))
def test_geodesic_is_deterministic_and_least(seed: int, n: int) -> None:
    g = _weighted_graph(seed, n, n // 2)
    u, v = 0, n - 1
    p = g.geodesic(u, v)
    assert p == g.geodesic(u, v)
    assert sum(g.weight(a, b) for a, b in zip(p, p[1:])) == g.d(u, v)
    assert p == min(nx.all_shortest_paths(_nx(g), u, v, weight="weight"))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 30))
def test_metric_axioms(seed: int, n: int) -> None:
    D = _weighted_graph(seed, n, 4).dist
    assert (D == D.T).all() and (np.diag(D) == 0).all()
    assert (D[:, :, None] <= D[:, None, :] + D.T[None, :, :]).all()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(4, 14))
def test_subtrees_are_zero_hyperbolic(seed: int, n: int) -> None:
    g = random_tree(3 * n, np.random.default_rng(seed))
    keep = sorted(hull(g, [0, n, 2 * n]))
    idx = {v: i for i, v in enumerate(keep)}
    sub = MetricGraph(len(keep), [(idx[u], idx[v], w) for u, v, w in g.edges if u in idx and v in idx])
    assert hyperbolicity_delta(sub) == 0


def test_quasigeodesic_checks_constant() -> None:
    g = path_graph(10)
    DiscreteQuasiGeodesic(g, [0, 1, 2, 3])
    DiscreteQuasiGeodesic(g, [0, 1, 1, 3], C=1)
    with pytest.raises(GeometryError):
        DiscreteQuasiGeodesic(g, [0, 1, 1, 3])
    with pytest.raises(ArgumentError):
        DiscreteQuasiGeodesic(g, [])


def test_comparison_triangle_examples() -> None:
    tri = ComparisonTriangle.from_lengths(1, 1, 1)
    assert comparison_point(tri, 0, 0.5) == pytest.approx((0.5, 0.0))
    flat = ComparisonTriangle.from_lengths(2, 1, 1)
    assert flat.points[2] == pytest.approx((1.0, 0.0))
    with pytest.raises(GeometryError):
        ComparisonTriangle.from_lengths(5, 1, 1)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(1, 40))
def test_comparison_triangle_law_of_cosines(a: int, b: int, c: int) -> None:
    if a > b + c or b > a + c or c > a + b:
        return
    tri = ComparisonTriangle.from_lengths(a, b, c)
    x, y, z = (np.array(p) for p in tri.points)
    assert np.linalg.norm(y - x) == pytest.approx(a, abs=1e-9)
    assert np.linalg.norm(z - y) == pytest.approx(b, abs=1e-6)
    assert np.linalg.norm(x - z) == pytest.approx(c, abs=1e-9)
    # angle at x from the law of cosines
    cosx = (a * a + c * c - b * b) / (2 * a * c)
    assert z[0] == pytest.approx(c * cosx, abs=1e-9)
    assert z[1] >= 0


def test_quasigeodesic_bound_values() -> None:
    assert cat0_quasigeodesic_bound(0, 4, 9) == 0
    assert cat0_quasigeodesic_bound(1, 5, 8) == pytest.approx(3 * math.sqrt(6))
    assert cat0_quasigeodesic_bound(1, 5, 8) == pytest.approx(7.3485, abs=1e-4)


def test_point_segment_distance_cases() -> None:
    a = np.array([[0.0, 0.0]] * 3)
    b = np.array([[4.0, 0.0]] * 3)
    p = np.array([[2.0, 3.0], [-3.0, 4.0], [7.0, 0.0]])
    assert point_segment_distance(p, a, b).tolist() == pytest.approx([3.0, 5.0, 3.0])
    # degenerate segment
    assert point_segment_distance(np.array([[3.0, 4.0]]), np.zeros((1, 2)), np.zeros((1, 2)))[0] == pytest.approx(5.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_planar_ellipse_points_obey_bound(seed: int) -> None:
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(-20, 20, (2, 2))
    C = float(rng.uniform(0, 3))
    d = float(np.linalg.norm(y - x))
    z = rng.uniform(-40, 40, (4000, 2))
    dxz = np.linalg.norm(z - x, axis=1)
    dzy = np.linalg.norm(z - y, axis=1)
    keep = dxz + dzy <= d + 3 * C
    if not keep.any():
        return
    dist = point_segment_distance(z[keep], np.repeat(x[None], keep.sum(), 0), np.repeat(y[None], keep.sum(), 0))
    bound = 3 * np.sqrt(C * np.minimum(dxz[keep], dzy[keep]) + C * C)
    assert (dist <= bound + 1e-9).all()
