from __future__ import annotations

import dataclasses
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hullcube.errors import ConfigurationError, SetupError
from hullcube.space import MetricGraph, grid_graph, hull, path_graph
from hullcube.suites import one_point_instance
from hullcube.treenet import (
    EpsilonSetup,
    _net,
    brute_force_steiner_weight,
    chain_compose,
    check_decomposition,
    cluster_graph,
    collapse_and_embed,
    fake_cluster_points,
    identity_check,
    minimal_network,
    one_point_decomposition,
    separates,
    shadow,
    stable_tree,
    stabler_decomposition,
    steiner_tree,
)

SMALL = dict(eps_p=Fraction(1, 2), E=4)


def _tripod(arm: int = 10) -> tuple[MetricGraph, list[int]]:
    edges = []
    tips = []
    n = 1
    for _ in range(3):
        prev = 0
        for _ in range(arm):
            edges.append((prev, n, 1))
            prev = n
            n += 1
        tips.append(prev)
    return MetricGraph(n, edges), tips


def _random_graph(seed: int, n: int) -> MetricGraph:
    rng = np.random.default_rng(seed)
    edges = {(int(rng.integers(0, i)), i): int(rng.integers(1, 5)) for i in range(1, n)}
    for _ in range(n // 2):
        u, v = sorted(int(x) for x in rng.choice(n, 2, replace=False))
        edges.setdefault((u, v), int(rng.integers(1, 5)))
    return MetricGraph(n, [(u, v, w) for (u, v), w in edges.items()])


def _non_identical(dec) -> int:
    clause = next(c for c in dec.report.clauses if c.name == "3-identical-pairs")
    return clause.detail["non_identical"]


# minimal networks ---------------------------------------------------------------

def test_single_group_gives_empty_forest() -> None:
    net = minimal_network(path_graph(5), [{3}])
    assert net.weight == 0 and not net.edges


def test_two_points_give_tie_broken_geodesic() -> None:
    g = grid_graph(4, 4)
    net = steiner_tree(g, [0, 15])
    assert net.weight == 6
    assert net.vertices == frozenset(g.geodesic(0, 15))


def test_grid_corners_match_brute_force() -> None:
    g = grid_graph(5, 5)
    assert steiner_tree(g, [0, 4, 24]).weight == brute_force_steiner_weight(g, [0, 4, 24]) == 8


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(6, 10), st.integers(2, 4))
def test_network_weight_is_optimal(seed: int, n: int, k: int) -> None:
    g = _random_graph(seed, n)
    terms = sorted(int(x) for x in np.random.default_rng(seed).choice(n, k, replace=False))
    net = steiner_tree(g, terms)
    assert net.is_forest() and net.quotient_connected()
    assert net.weight == brute_force_steiner_weight(g, terms)


def test_network_is_deterministic() -> None:
    g = _random_graph(7, 12)
    assert steiner_tree(g, [0, 5, 11]) == steiner_tree(g, [11, 5, 0])


# shadows and separation ----------------------------------------------------------

def test_shadow_examples() -> None:
    g, tips = _tripod()
    lam = steiner_tree(g, tips)
    assert shadow(lam, [4], 1) == {4} | {v for v in (3, 5)}
    assert shadow(lam, [4], 0) == {4}
    # a far point off the network: a pendant path attached at the centre
    g2 = MetricGraph(g.n + 3, list(g.edges) + [(0, g.n, 1), (g.n, g.n + 1, 1), (g.n + 1, g.n + 2, 1)])
    assert shadow(steiner_tree(g2, tips), [g.n + 2], 2) == set()


def test_shadow_straddling_branch_vertex_spans_both_edges() -> None:
    g, tips = _tripod()
    lam = steiner_tree(g, tips)
    A = [1, 11]  # one step from the centre on two different arms
    got = shadow(lam, A, 1)
    near = {v for v in lam.vertices if g.distance_to_set(A)[v] <= 1}
    assert got == hull(g, sorted(near)) == {0, 1, 2, 11, 12}


def test_separation_examples() -> None:
    g = path_graph(31)
    assert separates(g, {0}, {15}, {30}, 2)
    # a branch of length 5 hanging off the middle of the path
    branch = [(15, 31, 1)] + [(v, v + 1, 1) for v in range(31, 35)]
    g2 = MetricGraph(36, [(i, i + 1, 1) for i in range(30)] + branch)
    assert not separates(g2, {0}, {35}, {30}, 2)
    assert not separates(path_graph(20), {0}, {15}, {5}, 2)


# clusters --------------------------------------------------------------------------

def test_proximity_clusters() -> None:
    s = EpsilonSetup.build(path_graph(40), [0, 12], [3, 10], eps=Fraction(1, 4))
    cg = cluster_graph(s, **SMALL)
    assert cg.clusters == [frozenset({0, 3}), frozenset({10, 12})]
    assert cg.adjacency == {(0, 1)}


def test_middle_cluster_separates() -> None:
    s = EpsilonSetup.build(path_graph(41), [0, 40], [20], eps=Fraction(1, 4))
    cg = cluster_graph(s, **SMALL)
    assert cg.adjacency == {(0, 1), (1, 2)}
    assert cg.bivalent == [False, True, False]
    assert cg.diagnostics["connected"]


def test_parameter_gate() -> None:
    s = EpsilonSetup.build(path_graph(10), [0, 9], eps=1)
    with pytest.raises(ConfigurationError):
        cluster_graph(s, eps_p=1, E=16)
    with pytest.raises(ConfigurationError):
        cluster_graph(s, eps_p=2, E=8)


def test_setup_rejects_far_points() -> None:
    g, tips = _tripod()
    with pytest.raises(SetupError):
        EpsilonSetup.build(g, tips[:2], [tips[2]], eps=1)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 30))
def test_cluster_graph_connected(seed: int, ny: int) -> None:
    g, F, Y, _ = one_point_instance(ny, seed)
    cg = cluster_graph(EpsilonSetup.build(g, F, Y, eps=1))
    assert cg.diagnostics["connected"]
    for i, b in enumerate(cg.bivalent):
        if b:
            assert cg.degree(i) == 2 and not cg.has_F[i]


# stable trees ------------------------------------------------------------------------

def test_two_point_stable_tree_is_the_geodesic() -> None:
    T = stable_tree(EpsilonSetup.build(path_graph(41), [0, 40], eps=1))
    assert T.is_tree()
    kinds = sorted(p.kind for p in T.pieces)
    assert kinds.count("c") == 2
    assert {T.phi[n] for n in T.graph.nodes} == set(range(41))


def test_midpoint_cluster_splits_edge_part() -> None:
    T = stable_tree(EpsilonSetup.build(path_graph(41), [0, 40], [20], eps=1))
    assert sorted(p.kind for p in T.pieces).count("e") == 2
    assert sorted(p.kind for p in T.pieces).count("c") == 3


def test_tripod_stable_tree_recovers_tripod() -> None:
    g, tips = _tripod(12)
    T = stable_tree(EpsilonSetup.build(g, tips, eps=1))
    assert T.is_tree()
    assert {T.phi[n] for n in T.graph.nodes} == set(steiner_tree(g, tips).vertices)
    assert {T.phi[T.marked[f]] for f in tips} == set(tips)


# one-point decompositions ---------------------------------------------------------------

def test_existing_point_gives_identity_decomposition() -> None:
    g, F, Y, _ = one_point_instance(20, 4)
    dec = one_point_decomposition(EpsilonSetup.build(g, F, Y, eps=1), Y[3])
    assert dec.report.passed
    assert dec.report.measured_L2 == 0
    assert _non_identical(dec) == 0
    assert identity_check(dec)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([10, 25, 50]))
def test_one_point_decompositions_pass_checker(seed: int, ny: int) -> None:
    g, F, Y, w = one_point_instance(ny, seed)
    dec = one_point_decomposition(EpsilonSetup.build(g, F, Y, eps=1), w)
    assert dec.report.passed, dec.report.failed()
    emb = collapse_and_embed(dec)
    assert emb.report["isometric"] and emb.report["marked_points_match"]
    assert emb.report["collapsed_distances_positive_integers"]


def test_isolated_new_point_is_own_cluster() -> None:
    s = EpsilonSetup.build(path_graph(81), [0, 80], [20, 60], eps=1)
    dec = one_point_decomposition(s, 40)
    assert dec.report.passed
    cg2 = cluster_graph(s.with_point(40))
    assert frozenset({40}) in cg2.clusters
    assert dec.extras["core"].absorbed == []


def test_checker_rejects_corrupted_decomposition() -> None:
    g, F, Y, w = one_point_instance(25, 1)
    dec = one_point_decomposition(EpsilonSetup.build(g, F, Y, eps=1), w)
    assert dec.report.passed
    bad = dataclasses.replace(dec, beta={k: 0 for k in dec.beta}, report=None)
    if len(dec.beta) > 1:
        assert not check_decomposition(bad).passed
    pair = dec.pairs[0]
    broken = dataclasses.replace(pair, right=tuple(reversed(pair.right)))
    bad2 = dataclasses.replace(dec, pairs=[broken] + dec.pairs[1:], report=None)
    assert not check_decomposition(bad2).passed


# fake clusters and stabler decompositions --------------------------------------------------

def test_arithmetic_net() -> None:
    g = path_graph(20)
    assert _net(g, list(range(9)), 0, 2) == [0, 2, 4, 6, 8]
    s = EpsilonSetup.build(path_graph(41), [0, 40], eps=1)
    s2 = EpsilonSetup.build(path_graph(41), [0, 40, 30], eps=1)
    net, net2 = fake_cluster_points(s, s2, 0, a=2, A=1, B=8)
    assert net == [0, 2, 4, 6, 8]
    assert set(net) <= set(net2)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_fake_nets_extend_and_cluster(seed: int) -> None:
    g, F, _, w = one_point_instance(10, seed)
    s = EpsilonSetup.build(g, F, eps=1)
    s2 = EpsilonSetup.build(g, list(F) + [w], eps=1)
    net, net2 = fake_cluster_points(s, s2, w, a=2, A=1, B=16)
    assert set(net) <= set(net2)
    # a 2-net of a connected piece is one cluster at E >= 2
    cg = cluster_graph(EpsilonSetup.build(g, F, net, eps=1))
    assert sum(1 for c in cg.clusters if c & set(net)) == 1


def test_stabler_with_equal_sets_covers_everything() -> None:
    g, F, Y, _ = one_point_instance(15, 2)
    s = EpsilonSetup.build(g, F, Y, eps=1)
    dec = stabler_decomposition(s, s, S=10, N=0)
    assert dec.report.passed
    assert dec.report.measured_L2 == 0
    assert _non_identical(dec) == 0
    assert dec.extras["layers"] == []


def test_chain_of_identities_is_identity() -> None:
    g, F, Y, _ = one_point_instance(20, 5)
    s = EpsilonSetup.build(g, F, Y, eps=1)
    decs = [one_point_decomposition(s, Y[0]) for _ in range(3)]
    comp = chain_compose(decs)
    assert comp.report.passed and identity_check(comp)
    assert not comp.extras["gluing_violations"]


@settings(max_examples=4, deadline=None)
@given(st.integers(0, 10_000))
def test_three_link_chain_passes_at_squared_bound(seed: int) -> None:
    g, F, Y, _ = one_point_instance(40, seed)
    lam = sorted(steiner_tree(g, F).vertices)
    rest = [v for v in lam if v not in Y and v not in F]
    ws = np.random.default_rng(seed).choice(rest, 3, replace=False).tolist()
    cur = EpsilonSetup.build(g, F, Y, eps=1)
    decs = []
    for x in ws:
        decs.append(one_point_decomposition(cur, int(x)))
        cur = cur.with_point(int(x))
    L1 = max(d.report.measured_L1 for d in decs)
    L2 = max(d.report.measured_L2 for d in decs)
    comp = chain_compose(decs)
    assert check_decomposition(comp, 4 * L1**2, 4 * L2**2).passed
    assert not comp.extras["gluing_violations"]
