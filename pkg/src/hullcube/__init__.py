"""Finite-instance models of hulls in hierarchically hyperbolic spaces by CAT(0) cube complexes."""

from __future__ import annotations

from .cube import CubeComplex, delete_hyperplanes, dual_cube_complex, lp_distance
from .hhs import HHSInstance, product_of_trees, single_domain, tree_of_flats, validate_instance
from .model import ModelParams, build_hft, consistent_set, psi_omega, stabler_pipeline
from .space import MetricGraph, hull
from .suites import SUITES, run_suite

__version__ = "0.1.0"

__all__ = [
    "CubeComplex",
    "HHSInstance",
    "MetricGraph",
    "ModelParams",
    "SUITES",
    "build_hft",
    "consistent_set",
    "delete_hyperplanes",
    "dual_cube_complex",
    "hull",
    "lp_distance",
    "product_of_trees",
    "psi_omega",
    "run_suite",
    "single_domain",
    "stabler_pipeline",
    "tree_of_flats",
    "validate_instance",
]
