"""One test per acceptance criterion; each prints a PASS/FAIL line with its measured constants."""

from __future__ import annotations

from hullcube.suites import SuiteResult, run_suite


def _check(name: str) -> SuiteResult:
    r = run_suite(name, seed=0)
    print(r.line())
    for c in r.checks:
        print(f"  [{'ok' if c.ok else 'FAIL'}] {c.label}")
    print(f"  measures: {r.measures}  elapsed: {r.elapsed:.2f}s")
    return r


def _assert_passed(r: SuiteResult) -> None:
    assert r.passed, f"failed checks: {r.failed()}"


def test_tree_oracle() -> None:
    _assert_passed(_check("tree-oracle"))


def test_product_oracle() -> None:
    _assert_passed(_check("product-oracle"))


def test_change_of_model_diagram() -> None:
    _assert_passed(_check("diagram"))


def test_planar_quasigeodesic_bound() -> None:
    _assert_passed(_check("planar-bound"))


def test_diacenter_contraction() -> None:
    _assert_passed(_check("diacenter-contraction"))


def test_hyperplane_deletion_audit() -> None:
    _assert_passed(_check("deletion-audit"))


def test_rips_evidence() -> None:
    _assert_passed(_check("rips"))


def test_weak_metric() -> None:
    _assert_passed(_check("weak-metric"))


def test_stable_decompositions() -> None:
    _assert_passed(_check("stable-decompositions"))


def test_domain_control() -> None:
    _assert_passed(_check("domain-control"))
