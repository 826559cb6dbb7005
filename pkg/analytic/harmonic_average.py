"""
Averages hidden in the geometry-free data G = V/U.

In one dimension G is the volume-weighted harmonic mean of γ. In the plane
it factorises as

    G = (∫w / ∫w/γ) · (∫w̃ / ∫w),   w = (γ∇u_k/I)·(γ∇u_l/I),  w̃ = (∇v_k/I)·(∇v_l/I)

and is a true weighted harmonic mean only when ∫w̃ = ∫w.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from errors import ParameterError
from forward.fem_assembly import element_energy_density
from forward.models import PotentialField
from geometry.models import Mesh

logger = logging.getLogger(__name__)


def harmonic_average_1d(a: float, gamma1: float, gamma2: float) -> float:
    """G = 1 / (a/γ₁ + (1-a)/γ₂) for γ₁ on (0, a) and γ₂ on (a, 1)."""
    if not 0.0 <= a <= 1.0:
        raise ParameterError("Layer fraction must lie in [0, 1]", {"a": a})
    if not (gamma1 > 0 and gamma2 > 0):
        raise ParameterError("Conductivities must be positive", {"gamma1": gamma1, "gamma2": gamma2})
    return 1.0 / (a / gamma1 + (1.0 - a) / gamma2)


def solve_1d_layered(a: float, gamma1: float, gamma2: float, cells: int = 100) -> float:
    """
    Effective conductivity of the two-layer unit interval from a finite-difference
    solve of (γu')' = 0 with u(0) = 0 and u(1) = 1.

    Each cell carries the conductance 1/∫_cell (1/γ), so a cell cut by the
    interface is represented exactly.

    Returns:
        the flux γu', which equals G for a unit potential drop
    """
    if cells < 1:
        raise ParameterError("Need at least one cell", {"cells": cells})
    edges = np.linspace(0.0, 1.0, cells + 1)
    left = np.clip(a - edges[:-1], 0.0, edges[1:] - edges[:-1])
    right = (edges[1:] - edges[:-1]) - left
    conductance = 1.0 / (left / gamma1 + right / gamma2)

    n_inner = cells - 1
    if n_inner == 0:
        return float(conductance[0])
    main = conductance[:-1] + conductance[1:]
    off = -conductance[1:-1]
    matrix = sp.diags([off, main, off], [-1, 0, 1], shape=(n_inner, n_inner), format="csc")
    rhs = np.zeros(n_inner)
    rhs[-1] = conductance[-1]
    u = np.concatenate([[0.0], np.atleast_1d(spsolve(matrix, rhs)), [1.0]])
    flux = conductance * np.diff(u)
    return float(flux.mean())


@dataclass(frozen=True)
class WeightedAverageReport:
    integral_w: float
    integral_w_over_gamma: float
    integral_w_tilde: float

    @property
    def harmonic_factor(self) -> float:
        """∫w / ∫w/γ."""
        return self.integral_w / self.integral_w_over_gamma

    @property
    def geometry_factor(self) -> float:
        """∫w̃ / ∫w."""
        return self.integral_w_tilde / self.integral_w

    @property
    def geometry_free(self) -> float:
        return self.harmonic_factor * self.geometry_factor

    @property
    def is_weighted_harmonic_mean(self) -> bool:
        return bool(np.isclose(self.integral_w_tilde, self.integral_w, rtol=1e-6))


def weighted_average_report(mesh: Mesh, sigma: np.ndarray, u_k: PotentialField, u_l: PotentialField,
                            v_k: PotentialField, v_l: PotentialField) -> WeightedAverageReport:
    """
    Integrals of the weight functions for drive pair k and measure pair l.

    u_* are point-electrode solutions with the true σ, v_* with σ ≡ 1, all on `mesh`.
    """
    current = u_k.current
    area = mesh.areas
    w = sigma ** 2 * element_energy_density(mesh, u_k.nodal_values, u_l.nodal_values) / current ** 2
    w_tilde = element_energy_density(mesh, v_k.nodal_values, v_l.nodal_values) / current ** 2
    report = WeightedAverageReport(
        integral_w=float(np.sum(w * area)),
        integral_w_over_gamma=float(np.sum(w / sigma * area)),
        integral_w_tilde=float(np.sum(w_tilde * area)),
    )
    logger.debug(f"Weighted average: harmonic {report.harmonic_factor:.6g}, geometry {report.geometry_factor:.6g}")
    return report
