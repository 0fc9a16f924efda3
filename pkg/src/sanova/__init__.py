"""Smoothed ANOVA with intrinsic CAR spatial effects and an MCAR comparator."""

__version__ = "0.1.0"

from .design import build_design, make_contrasts
from .estimators import MCAR, SANOVA, UnivariateCAR
from .io import load_dataset
from .spatial import RegionGraph, build_graph, car_structure

__all__ = [
    "MCAR",
    "SANOVA",
    "UnivariateCAR",
    "RegionGraph",
    "build_design",
    "build_graph",
    "car_structure",
    "load_dataset",
    "make_contrasts",
]
