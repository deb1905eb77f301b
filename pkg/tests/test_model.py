from __future__ import annotations

import itertools
from fractions import Fraction

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hullcube.errors import ArgumentError
from hullcube.hhs import flat_point, product_of_trees, single_domain, tree_of_flats
from hullcube.model import (
    HFT,
    FTree,
    ModelParams,
    brute_force_consistent,
    build_hft,
    check_hft,
    collapse_tree,
    consistent_set,
    model_distances,
    psi_omega,
    stabler_pipeline,
    thicken,
)
from hullcube.space import MetricGraph, path_graph, random_tree

PARAMS = ModelParams(K=10, eps=Fraction(1, 4), r1=4, r2=4)
SMALL = ModelParams(K=10, eps=Fraction(1, 8), eps_p=Fraction(1, 4), E=2, r1=4, r2=4)


def _spider(legs: list[int]) -> tuple[MetricGraph, list[int]]:
    edges = []
    tips = []
    n = 1
    for L in legs:
        prev = 0
        for _ in range(L):
            edges.append((prev, n, 1))
            prev = n
            n += 1
        tips.append(prev)
    return MetricGraph(n, edges), tips


def _path_nx(n: int) -> nx.Graph:
    return nx.path_graph(n)


def _two_transverse() -> HFT:
    """A point top domain over two transverse paths of length 2, each projecting to the other's end."""
    pt = FTree([0], [])
    p = FTree([0, 1, 2], [(0, 1), (1, 2)])
    rel = [["=", ">", ">"], ["<", "=", "trans"], ["<", "trans", "="]]
    marks = [{"a": 0, "b": 0}, {"a": 0, "b": 2}, {"a": 2, "b": 0}]
    delta = {(1, 0): 0, (2, 0): 0, (1, 2): 0, (2, 1): 0}
    down = {(0, 1): [frozenset({0, 1, 2})], (0, 2): [frozenset({0, 1, 2})]}
    return HFT([0, 1, 2], rel, [pt, p, p], marks, delta, down, ("a", "b"))


# thickening and trees -------------------------------------------------------------

def test_thicken_keeps_far_clusters_apart() -> None:
    th = thicken(_path_nx(21), [0, 10], 2, 4)
    assert th.components == [frozenset(range(3)), frozenset(range(8, 13))]
    assert th.report == {"separated": True, "depth_ok": True}


def test_thicken_joins_near_clusters() -> None:
    th = thicken(_path_nx(21), [0, 10], 2, 6)
    assert th.components == [frozenset(range(13))]


def test_thicken_rejects_bad_radii() -> None:
    with pytest.raises(ArgumentError):
        thicken(_path_nx(5), [0], 1.5, 2)
    with pytest.raises(ArgumentError):
        thicken(_path_nx(5), [0], 0, 2)


def test_collapse_tree_counts() -> None:
    q, lab = collapse_tree(_path_nx(6), [{1, 2, 3}])
    assert q.number_of_nodes() == 4 and nx.is_tree(q)
    assert lab[2] == ("K", 0) and lab[5] == ("v", 5)


def test_ftree_matches_networkx() -> None:
    g = nx.random_labeled_tree(15, seed=3) if hasattr(nx, "random_labeled_tree") else nx.random_tree(15, seed=3)
    t = FTree.from_nx(g)
    sp = dict(nx.all_pairs_shortest_path_length(g))
    assert t.is_tree()
    for a, b in itertools.product(range(t.n), repeat=2):
        assert t.dist[a, b] == sp[t.labels[a]][t.labels[b]]
    assert sorted(t.leaves()) == sorted(t.index[v] for v in g if g.degree(v) == 1)
    ends = t.leaves()[:2]
    assert t.hull(ends) == sorted(t.index[v] for v in nx.shortest_path(g, t.labels[ends[0]], t.labels[ends[1]]))


# hierarchical families and consistent sets ---------------------------------------------

def test_transverse_pair_consistent_set() -> None:
    h = _two_transverse()
    assert all(c.passed for c in check_hft(h))
    Q = consistent_set(h)
    # either coordinate sits at the other's projection
    want = sorted((0, x, y) for x in range(3) for y in range(3) if x == 0 or y == 0)
    assert sorted(map(tuple, Q.tuples.tolist())) == want
    assert Q.cx.h == 4 and Q.cx.n == 5 and Q.cx.product_of_trees()


def test_unmarked_leaf_fails_clause() -> None:
    h = _two_transverse()
    h.marks[1] = {"a": 1, "b": 2}
    bad = {c.name for c in check_hft(h) if not c.passed}
    assert "3-marked-points" in bad


def test_missing_component_mark_fails_clause() -> None:
    h = _two_transverse()
    h.delta[(1, 2)] = 1
    h.marks[2] = {"a": 1, "b": 2}
    bad = {c.name for c in check_hft(h) if not c.passed}
    assert "4-components-and-orthogonality" in bad or "3-marked-points" in bad


def test_spider_model() -> None:
    legs = [8, 9, 12, 7]
    g, tips = _spider(legs)
    inst = single_domain(g)
    d = build_hft(inst, tips, PARAMS)
    assert d.passed
    Q = consistent_set(d.hft)
    # each tip cluster swallows r1 edges of its leg
    assert Q.n == 1 + sum(max(L - PARAMS.r1, 0) for L in legs)
    po = psi_omega(inst, tips, d, Q)
    assert po.roundtrip().max() <= 8
    D = Q.cx.l1_rows(po.psi_ids, po.psi_ids)
    T = g.dist[np.ix_(po.hull, po.hull)]
    assert 0 <= (T - D).min() and (T - D).max() <= 2 * PARAMS.r1


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 10_000))
def test_consistent_set_matches_brute_force_on_products(seed: int) -> None:
    rng = np.random.default_rng(seed)
    t1, tp1 = _spider([int(x) for x in rng.integers(3, 8, 3)])
    t2, tp2 = _spider([int(x) for x in rng.integers(3, 8, 2)])
    inst = product_of_trees(t1, t2)
    F = [inst.ambient.point((tp1[0], tp2[0])), inst.ambient.point((tp1[1], tp2[1])), inst.ambient.point((tp1[2], 0))]
    d = build_hft(inst, F, ModelParams(K=3, eps=Fraction(1, 4), r1=1, r2=1))
    got = consistent_set(d.hft).tuples
    assert sorted(map(tuple, got.tolist())) == sorted(map(tuple, brute_force_consistent(d.hft).tolist()))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_consistent_set_matches_brute_force_on_flats(seed: int) -> None:
    rng = np.random.default_rng(seed)
    parent = random_tree(8, rng)
    marks = sorted(int(x) for x in rng.choice(8, 2, replace=False))
    sides = [(int(rng.integers(4, 9)), int(rng.integers(4, 9))) for _ in marks]
    inst = tree_of_flats(parent, marks, sides)
    F = [flat_point(inst, 0, *sides[0]), flat_point(inst, 1, *sides[1])]
    d = build_hft(inst, F, ModelParams(K=3, eps=Fraction(1, 4), r1=1, r2=1))
    Q = consistent_set(d.hft)
    assert sorted(map(tuple, Q.tuples.tolist())) == sorted(map(tuple, brute_force_consistent(d.hft).tolist()))
    assert Q.cx.median_closed()[0]
    for f in F:
        assert Q.id_of([d.hft.marks[i][f] for i in range(d.hft.m)]) is not None


# the change-of-model diagram --------------------------------------------------------------

def test_spider_diagram_commutes() -> None:
    g, tips = _spider([8, 9, 12, 7])
    b = stabler_pipeline(single_domain(g), tips[:3], tips, PARAMS)
    assert b.passed
    m = b.measures
    assert m["theta_convex"] and m["left_square_mismatches"] == 0
    assert (m["Q"], m["Q_prime"]) == (18, 21)
    assert m["faces"]["upper_eta"] == m["faces"]["lower_eta_prime"] == 0


def test_pipeline_rejects_non_nested_sets() -> None:
    g, tips = _spider([8, 9, 12])
    with pytest.raises(ArgumentError):
        stabler_pipeline(single_domain(g), tips, tips[:2], PARAMS)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_product_diagram_commutes(seed: int) -> None:
    s = int(np.random.default_rng(seed).integers(1, 40))
    t1, tp1 = _spider([12, 12, s + 12])
    t2, tp2 = _spider([12, 12])
    inst = product_of_trees(t1, t2)
    amb = inst.ambient
    F = [amb.point((tp1[0], tp2[0])), amb.point((tp1[1], tp2[1]))]
    x = amb.point((tp1[2], tp2[0]))
    b = stabler_pipeline(inst, F, F + [x], SMALL)
    assert b.passed, b.failures
    assert b.measures["left_square_mismatches"] == 0 and b.measures["theta_convex"]
    # the eta side deletes hyperplanes of Q exactly
    assert len(set(b.eta.tolist())) == b.Q0.n


# model distances -------------------------------------------------------------------------

def test_two_point_distances() -> None:
    g = path_graph(40)
    inst = single_domain(g)
    assert model_distances(inst, 5, 5, (1, 2)) == [0.0, 0.0]
    d1, d2, dinf = model_distances(inst, 0, 39, (1, 2, np.inf), PARAMS)
    # one tree: all exponents agree
    assert d1 == d2 == dinf
    assert 39 - 2 * PARAMS.r1 <= d1 <= 39


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_product_distances_order(seed: int) -> None:
    rng = np.random.default_rng(seed)
    inst = product_of_trees(random_tree(20, rng), random_tree(20, rng))
    a, b = (int(x) for x in rng.choice(inst.ambient.n, 2, replace=False))
    d1, d2, dinf = model_distances(inst, a, b, (1, 2, np.inf), SMALL)
    assert dinf <= d2 + 1e-9 <= d1 + 2e-9
    assert d1 <= inst.d(a, b)


def test_params_defaults() -> None:
    p = ModelParams().resolved(single_domain(path_graph(3)))
    assert p.eps == Fraction(1, 4) and p.eps_p == Fraction(5, 4) and p.E == 10
    assert p.r1 == p.r2 == 20 and p.K == 20
