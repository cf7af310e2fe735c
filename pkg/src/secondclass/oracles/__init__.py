"""Independent ground truth: exact finite-window Markov chain and Monte Carlo."""

from .ctmc import CtmcResult, CtmcSystem, Window, ctmc_build, ctmc_pmf, state_count, transient
from .mc import McResult, OccupationResult, TwoClassState, mc_occupation, mc_run, mc_two_class_marginals

__all__ = [
    "CtmcResult",
    "CtmcSystem",
    "McResult",
    "OccupationResult",
    "TwoClassState",
    "Window",
    "ctmc_build",
    "ctmc_pmf",
    "mc_occupation",
    "mc_run",
    "mc_two_class_marginals",
    "state_count",
    "transient",
]
