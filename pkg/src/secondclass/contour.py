"""Trapezoidal quadrature on the circle |xi| = R and the scalar pieces every integrand shares.

The weights carry the 1/(2 pi i) normalisation: with xi_j = R exp(2 pi i j / M)
and dxi = i xi dtheta, the rule for (1/2 pi i) \\oint f dxi is sum_j w_j f(xi_j),
w_j = xi_j / M.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, SingularConfigurationError
from .qcalc import RateParams

POLE_GUARD = 1e-13
DEFAULT_M = 48
MAX_M = 512


@dataclass(frozen=True)
class ContourSpec:
    R: float = 2.0
    M: int = DEFAULT_M

    def validate(self, params: RateParams | None = None) -> None:
        if not self.R > 1.0:
            raise ConfigurationError(f"contour radius must satisfy R > 1, got R={self.R}")
        if self.M < 8 or self.M % 2:
            raise ConfigurationError(f"node count must satisfy M >= 8 and M even, got M={self.M}")
        if params is not None:
            margin = params.q * self.R**2 - self.R - params.p
            if not margin > 0.0:
                raise ConfigurationError(
                    f"need q*R^2 - R - p > 0 so pairwise poles stay inside the contour; "
                    f"got {margin:.6g} at R={self.R}, p={params.p}"
                )

    def refined(self) -> "ContourSpec":
        return ContourSpec(self.R, 2 * self.M)


@dataclass(frozen=True)
class QuadNodes:
    R: float
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def M(self) -> int:
        return len(self.nodes)


def make_nodes(spec: ContourSpec, params: RateParams | None = None) -> QuadNodes:
    spec.validate(params)
    j = np.arange(spec.M)
    nodes = spec.R * np.exp(2j * np.pi * j / spec.M)
    # snap the four axis points so that e.g. M=4 gives exact +-R, +-iR
    for frac, val in ((0, 1), (1, 1j), (2, -1), (3, -1j)):
        if (spec.M * frac) % 4 == 0:
            nodes[spec.M * frac // 4] = spec.R * val
    nodes.setflags(write=False)
    weights = nodes / spec.M
    weights.setflags(write=False)
    return QuadNodes(spec.R, nodes, weights)


def min_radius(params: RateParams) -> float:
    """Positive root of q R^2 - R - p; admissible radii lie strictly above it."""
    p, q = params.p, params.q
    return (1.0 + math.sqrt(1.0 + 4.0 * p * q)) / (2.0 * q)


def pole_ratio(R: float, params: RateParams) -> float:
    """Largest |pairwise pole| / R over the contour; trapezoid error decays like ratio**M."""
    return (R + params.p) / (params.q * R * R)


def default_radius(params: RateParams, max_ratio: float = 0.7) -> float:
    """Smallest R in 2, 2.5, 3, ... whose pole ratio is at most ``max_ratio``."""
    R = 2.0
    while R <= min_radius(params) or pole_ratio(R, params) > max_ratio:
        R += 0.5
    return R


def epsilon(xi, params: RateParams):
    """p/xi + q xi - 1 (vectorised)."""
    xi = np.asarray(xi, dtype=complex)
    if np.any(xi == 0):
        raise DomainError("epsilon(xi) is singular at xi = 0")
    out = params.p / xi + params.q * xi - 1.0
    return out[()] if out.ndim == 0 else out


def pair_denominator(xi_i, xi_j, params: RateParams):
    den = params.p + params.q * np.multiply(xi_i, xi_j) - xi_i
    if np.any(np.abs(den) < POLE_GUARD):
        raise SingularConfigurationError(
            "pairwise pole p + q xi_i xi_j - xi_i = 0 hit by quadrature nodes; change R or M"
        )
    return den


def pair_factor(xi_i, xi_j, params: RateParams):
    """(xi_j - xi_i) / (p + q xi_i xi_j - xi_i)."""
    out = (np.subtract(xi_j, xi_i)) / pair_denominator(xi_i, xi_j, params)
    return out[()] if np.ndim(out) == 0 else out
