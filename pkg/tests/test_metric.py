from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hullcube.errors import ArgumentError, InfeasibleError
from hullcube.hhs import flat_point, product_of_trees, single_domain, tree_of_flats
from hullcube.metric import (
    KappaGauge,
    ContractionSample,
    coarse_convexity_check,
    contraction_samples,
    contraction_violations,
    dhat_p,
    diacenter,
    divergence_gauge,
    divergence_violations,
    fit_contraction_constant,
    fit_modulus,
    model_metric_table,
    sub_cat0_check,
    symmetrized_metric,
    triangle_defect,
    weak_metric_dkappa,
)
from hullcube.model import ModelParams
from hullcube.space import DiscreteQuasiGeodesic as QG
from hullcube.space import MetricGraph, cycle_graph, grid_graph, path_graph, random_tree

ZERO = KappaGauge(0.0, 0.0, 0.0)


def _forked_rays() -> MetricGraph:
    """A shared stem 0..5, two branches from 5 and a third arm from 0."""
    edges = [(i, i + 1, 1) for i in range(5)]
    edges += [(5, 6, 1)] + [(i, i + 1, 1) for i in range(6, 15)]
    edges += [(5, 16, 1)] + [(i, i + 1, 1) for i in range(16, 25)]
    edges += [(0, 26, 1)] + [(i, i + 1, 1) for i in range(26, 35)]
    return MetricGraph(36, edges)


def _ray(g: MetricGraph, end: int, length: int | None = None) -> QG:
    p = g.geodesic(0, end)
    return QG(g, p if length is None else p[:length + 1])


# gauges and symmetrization ------------------------------------------------------------

def test_kappa_gauge() -> None:
    k = KappaGauge(2.0, 10.0, 1.0)
    assert k(9) == 16.0 and k(-3) == 10.0
    with pytest.raises(ArgumentError):
        KappaGauge(1.0, 5.0, 1.0)
    assert KappaGauge.square_root(3.0, 1.0) == KappaGauge(3.0, 10.0, 1.0)


def test_triangle_defect_example() -> None:
    D = np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0]], dtype=float)
    assert triangle_defect(D) == 3.0
    assert triangle_defect(path_graph(6).dist.astype(float)) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 9))
def test_symmetrized_table_is_invariant_metric(seed: int, n: int) -> None:
    rng = np.random.default_rng(seed)
    noise = rng.uniform(0, 3, (n, n))
    inst = single_domain(cycle_graph(n))
    rotations = [[(v + r) % n for v in range(n)] for r in range(1, n)]
    sym = symmetrized_metric(inst, list(range(n)), 1, rotations, distance=lambda a, b: float(inst.d(a, b)) + noise[a, b])
    T = sym.table
    assert (T == T.T).all() and (np.diag(T) == 0).all()
    assert triangle_defect(T) <= 1e-9
    # invariance under every rotation
    for r in range(n):
        perm = [(v + r) % n for v in range(n)]
        assert np.allclose(T[np.ix_(perm, perm)], T)


def test_dhat_on_product() -> None:
    rng = np.random.default_rng(2)
    inst = product_of_trees(random_tree(15, rng), random_tree(15, rng))
    p = ModelParams(K=10, eps=Fraction(1, 8), eps_p=Fraction(1, 4), E=2, r1=4, r2=4)
    assert dhat_p(inst, 7, 7, 2, p) == 0.0
    F = [0, inst.ambient.n - 1, 40]
    rows, D = model_metric_table(inst, F, 2, p)
    assert D.shape == (len(rows), len(rows)) and (D == D.T).all()
    _, D1 = model_metric_table(inst, F, 1, p)
    _, Dinf = model_metric_table(inst, F, np.inf, p)
    assert (Dinf <= D + 1e-9).all() and (D <= D1 + 1e-9).all()


def test_closed_form_table_refuses_constrained_models() -> None:
    inst = tree_of_flats(path_graph(10), [2, 6], [(20, 20), (20, 20)])
    F = [flat_point(inst, 0, 20, 20), flat_point(inst, 1, 20, 20)]
    with pytest.raises(ArgumentError):
        model_metric_table(inst, F, 2, ModelParams(K=3, eps=Fraction(1, 8), eps_p=Fraction(1, 4), E=2, r1=1, r2=1))


# comparison checks -----------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(6, 30))
def test_tree_triangles_are_thin(seed: int, n: int) -> None:
    g = random_tree(n, np.random.default_rng(seed))
    a, b, c = (int(x) for x in np.random.default_rng(seed).choice(n, 3, replace=False))
    sides = [QG(g, g.geodesic(a, b)), QG(g, g.geodesic(b, c)), QG(g, g.geodesic(c, a))]
    assert sub_cat0_check(sides, ZERO).ok


def test_grid_triangle_needs_slack() -> None:
    g = grid_graph(5, 5)
    # the side back to the start takes the other route around a unit square
    a, b, c = 0, 5, 6
    sides = [QG(g, g.geodesic(a, b)), QG(g, g.geodesic(b, c)), QG(g, g.geodesic(c, a))]
    res = sub_cat0_check(sides, ZERO)
    assert not res.ok and res.margin == 2.0
    assert sub_cat0_check(sides, KappaGauge(0.0, res.margin / 2 + 1e-6)).ok


def test_triangle_sides_must_close() -> None:
    g = path_graph(5)
    with pytest.raises(ArgumentError):
        sub_cat0_check([QG(g, [0, 1]), QG(g, [2, 3]), QG(g, [3, 2, 1, 0])], ZERO)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(8, 40))
def test_tree_geodesics_are_convex(seed: int, n: int) -> None:
    g = random_tree(n, np.random.default_rng(seed))
    u, v = (int(x) for x in np.random.default_rng(seed + 1).choice(n, 2))
    assert coarse_convexity_check(QG(g, g.geodesic(0, u)), QG(g, g.geodesic(0, v)), ZERO) == []


def test_cycle_geodesics_break_convexity() -> None:
    g = cycle_graph(20)
    up = QG(g, list(range(11)))
    down = QG(g, [0] + list(range(19, 9, -1)))
    bad = coarse_convexity_check(up, down, ZERO)
    assert (5, 9) in bad
    with pytest.raises(ArgumentError):
        coarse_convexity_check(up, QG(g, [1, 2]), ZERO)


# diacenters and contraction ------------------------------------------------------------

def test_diacenter_examples() -> None:
    D = path_graph(12).dist.astype(float)
    assert diacenter([0, 10], 0, D) == 5
    assert diacenter([3], 0, D) == 3
    with pytest.raises(InfeasibleError):
        diacenter([0, 9], 0, D)
    assert diacenter([0, 9], 0.5, D) == 4
    assert diacenter([2, 0, 9, 4], 0.5, D) == 4


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 40), st.integers(2, 6))
def test_diacenter_is_least_coarse_midpoint(seed: int, n: int, k: int) -> None:
    g = random_tree(n, np.random.default_rng(seed))
    D = g.dist.astype(float)
    A = sorted(int(x) for x in np.random.default_rng(seed).choice(n, min(k, n), replace=False))
    C = 0.5
    diam = max(D[a, b] for a, b in itertools.combinations(A, 2))
    a, b = min((p, q) for p, q in itertools.permutations(A, 2) if D[p, q] == diam)
    oracle = min(v for v in range(n) if D[a, v] + D[v, b] <= diam + 3 * C and abs(D[a, v] - diam / 2) <= C)
    assert diacenter(A, C, D) == oracle


def test_contraction_example() -> None:
    D = path_graph(12).dist.astype(float)
    s = ContractionSample((0, 2), (0, 10), float(D[1, 5]), 10.0)
    assert s.excess(0.5) == -1.0
    assert contraction_violations([s], 0.5, -1.5) == [s]
    assert fit_contraction_constant([s], 0.5) == 0.0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_fitted_constant_clears_every_sample(seed: int) -> None:
    rng = np.random.default_rng(seed)
    D = random_tree(40, rng).dist.astype(float)
    samples = contraction_samples(D, 0.5, rng, 40)
    Cp = fit_contraction_constant(samples, 0.25)
    assert contraction_violations(samples, 0.25, Cp) == []
    for s in samples:
        assert set(s.A) <= set(s.B)


# weak metric and divergence ---------------------------------------------------------------

def test_weak_metric_on_forked_rays() -> None:
    g = _forked_rays()
    classes = [[_ray(g, 15)], [_ray(g, 25)], [_ray(g, 35)]]
    tab = weak_metric_dkappa(classes, KappaGauge(0.0, 1.0))
    # 2(t - 5) <= 3 up to t = 6 on the fork, 2t <= 3 up to t = 1 across the stem
    assert tab.value(0, 1) == Fraction(1, 6)
    assert tab.value(0, 2) == tab.value(1, 2) == 1
    assert tab.value(2, 2) == 0
    strict = weak_metric_dkappa(classes, ZERO)
    assert strict.value(0, 2) == math.inf
    assert strict.value(0, 1) == Fraction(1, 5)


def test_weak_metric_needs_common_basepoint() -> None:
    g = _forked_rays()
    with pytest.raises(ArgumentError):
        weak_metric_dkappa([[_ray(g, 15)], [QG(g, g.geodesic(5, 25))]], ZERO)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 8))
def test_fitted_modulus_bounds_every_triple(seed: int, n: int) -> None:
    D = np.random.default_rng(seed).uniform(0, 2, (n, n))
    D = (D + D.T) / 2
    np.fill_diagonal(D, 0)
    scales, env = fit_modulus(D)
    assert env == sorted(env)
    f = dict(zip(scales, env))
    for x, y, z in itertools.product(range(n), repeat=3):
        assert D[x, z] <= f[float(max(D[x, y], D[y, z]))] + 1e-12


def test_divergence_gauge_values() -> None:
    kappa = KappaGauge(1.0, 0.0)
    one = lambda t: 1.0  # noqa: E731
    assert divergence_gauge(one, kappa, 0, 5) == 25
    assert divergence_gauge(one, kappa, 0, 0) == 0
    assert divergence_gauge(one, kappa, 0, 1) == 0
    assert divergence_gauge(one, kappa, 2, 7) == 25


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 300))
def test_divergence_gauge_is_square_for_unit_closeness(t: int) -> None:
    # slope 1/t against sqrt: the largest admissible t' is exactly t squared
    assert divergence_gauge(lambda s: 1.0, KappaGauge(1.0, 0.0), 0, t) == t * t


def test_divergence_violations_on_fork() -> None:
    g = _forked_rays()
    pair = (_ray(g, 15), _ray(g, 25))
    bad = divergence_violations([pair], lambda s: 1.0, KappaGauge(1.0, 0.0), 0)
    assert bad == [(0, 4, 10), (0, 5, 10)]
    assert divergence_violations([pair], lambda s: 1.0, KappaGauge(1.0, 0.0, 0.0), 10) == []
