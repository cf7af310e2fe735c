"""Exact distribution of a second-class particle in ASEP, from contour-integral series."""

from .contour import ContourSpec, QuadNodes, make_nodes
from .errors import ConfigurationError, DomainError, SingularConfigurationError
from .finite import InitialConfig, occupation_prob_finite, position_pmf_finite, second_class_pmf_finite
from .fredholm import cdf_via_fredholm, pmf_via_fredholm
from .qcalc import RateParams
from .step import DistTable, SeriesSpec, cdf_step, cdf_tasep, occupation_step, pmf_step, step_table

__all__ = [
    "ConfigurationError",
    "ContourSpec",
    "DistTable",
    "DomainError",
    "InitialConfig",
    "QuadNodes",
    "RateParams",
    "SeriesSpec",
    "SingularConfigurationError",
    "cdf_step",
    "cdf_tasep",
    "cdf_via_fredholm",
    "make_nodes",
    "occupation_prob_finite",
    "occupation_step",
    "pmf_step",
    "pmf_via_fredholm",
    "position_pmf_finite",
    "second_class_pmf_finite",
    "step_table",
]
