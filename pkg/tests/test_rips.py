from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hullcube.errors import ArgumentError, CapacityError
from hullcube.rips import (
    SimplicialComplex,
    dominated_core,
    homology_z2,
    minimal_threshold,
    reduced_betti_dense,
    rips_complex,
    rips_evidence,
    subdivision_step,
)
from hullcube.space import cycle_graph, grid_graph, path_graph, random_tree


def _dist(g) -> np.ndarray:
    return g.dist.astype(float)


def _rips(D: np.ndarray, T: float, cap: int = 3):
    return rips_complex(list(range(len(D))), D, T, cap)


def test_cycle_at_unit_scale_is_a_circle() -> None:
    for n in (4, 5, 8):
        assert homology_z2(_rips(_dist(cycle_graph(n)), 1)) == [0, 1, 0]


def test_hexagon_at_scale_two_is_a_sphere() -> None:
    # every vertex sees all but its antipode: the boundary of an octahedron
    cx = _rips(_dist(cycle_graph(6)), 2)
    assert len(cx.simplices[2]) == 8 and cx.dim == 2
    assert homology_z2(cx) == [0, 0, 1]


def test_full_simplex_is_acyclic() -> None:
    cx = _rips(_dist(cycle_graph(5)), 2)
    assert homology_z2(cx) == [0, 0, 0]


def test_discrete_set_counts_components() -> None:
    D = np.array([[0, 5, 5], [5, 0, 5], [5, 5, 0]], dtype=float)
    assert homology_z2(_rips(D, 1)) == [2, 0, 0]


def test_from_facets_closes_downwards() -> None:
    cx = SimplicialComplex.from_facets([[0, 1, 2], [2, 3]])
    assert cx.is_closed() and cx.dim == 2
    assert cx.count() == 4 + 4 + 1
    assert cx.contains(SimplicialComplex.from_facets([[1, 2]]))
    assert not cx.contains(SimplicialComplex.from_facets([[1, 3]]))
    assert not SimplicialComplex([[(0,)], [(0, 1)]]).is_closed()


def test_argument_checks() -> None:
    D = _dist(path_graph(4))
    with pytest.raises(ArgumentError):
        rips_complex(range(4), D, -1)
    with pytest.raises(ArgumentError):
        rips_complex(range(4), D, 1, dim_cap=4)
    with pytest.raises(ArgumentError):
        rips_complex(range(3), D, 1)
    with pytest.raises(CapacityError):
        rips_complex(range(4), D, 3, guard=5)


def test_minimal_thresholds() -> None:
    assert minimal_threshold(_dist(cycle_graph(4)))[0] == 2
    assert minimal_threshold(_dist(path_graph(6)))[0] == 1
    T0, reports = minimal_threshold(_dist(cycle_graph(6)))
    # scale 2 carries the sphere, so only scale 3 is acyclic
    assert T0 == 3 and reports[-1].betti == [0, 0, 1]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 25))
def test_trees_are_contractible_at_every_scale(seed: int, n: int) -> None:
    D = _dist(random_tree(n, np.random.default_rng(seed)))
    assert len(dominated_core(D <= 1)) == 1
    assert minimal_threshold(D)[0] == 1


def test_cycles_have_no_dominated_vertices() -> None:
    D = _dist(cycle_graph(7))
    A = (D <= 1) & (D > 0)
    assert dominated_core(A) == list(range(7))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(4, 14), st.integers(1, 4))
def test_sparse_and_dense_homology_agree(seed: int, n: int, T: int) -> None:
    rng = np.random.default_rng(seed)
    pts = rng.integers(0, 6, (n, 2))
    D = np.abs(pts[:, None, :] - pts[None, :, :]).sum(axis=2).astype(float)
    D[D == 0] = 0.5
    np.fill_diagonal(D, 0)
    cx = _rips(D, T)
    assert homology_z2(cx) == reduced_betti_dense(cx)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3))
def test_core_preserves_homology(seed: int, T: int) -> None:
    g = grid_graph(3, 4)
    rng = np.random.default_rng(seed)
    keep = sorted(int(x) for x in rng.choice(g.n, 9, replace=False))
    D = _dist(g)[np.ix_(keep, keep)]
    assert rips_evidence(D, T).betti == reduced_betti_dense(_rips(D, T))


def test_subdivision_step_on_a_path() -> None:
    D = _dist(path_graph(11))
    rep = subdivision_step([[0, 10]], D, C=0, T=10, eps=0.5, Cp=0)
    assert rep.images == {(0,): 0, (10,): 10, (0, 10): 5}
    assert rep.ok and rep.bound == 5
    tight = subdivision_step([[0, 10]], D, C=0, T=10, eps=0.6, Cp=0)
    assert sorted((f, g) for f, g, _ in tight.failures) == [((0,), (0, 10)), ((10,), (0, 10))]
