"""
Constant conductivity from Neumann-function values.

    γ = (I / U) · (N(k⁺,l⁺) - N(k⁺,l⁻) - N(k⁻,l⁺) + N(k⁻,l⁻))

On the disk the values come from the closed form; on any other domain they
are the γ = 1 point-electrode solutions of a ForwardSolver.
"""
from typing import Sequence, Tuple

import numpy as np

from errors import DegenerateError
from forward.models import Pattern
from forward.solvers import ForwardSolver
from geometry.models import ElectrodeConfig, Mesh


def constant_gamma_from_neumann(neumann_values: Sequence[float], voltage: float, current: float) -> float:
    """
    Args:
        neumann_values: (N(k⁺,l⁺), N(k⁺,l⁻), N(k⁻,l⁺), N(k⁻,l⁻))
        voltage: measured U_{k,l}
        current: drive current I

    Returns:
        γ in S/m
    """
    if voltage == 0:
        raise DegenerateError("Zero voltage; the pattern carries no information about γ")
    n_pp, n_pm, n_mp, n_mm = neumann_values
    return current / voltage * (n_pp - n_pm - n_mp + n_mm)


def fem_neumann_values(solver: ForwardSolver, pattern: Pattern) -> Tuple[float, float, float, float]:
    """
    Neumann-function values between electrode centers from a unit-conductivity context.

    The solver must have been built with σ ≡ 1.
    """
    nodes = solver.center_nodes
    n_kp = solver.neumann_field(pattern.k_plus)
    n_km = solver.neumann_field(pattern.k_minus)
    lp, lm = nodes[pattern.l_plus - 1], nodes[pattern.l_minus - 1]
    return float(n_kp[lp]), float(n_kp[lm]), float(n_km[lp]), float(n_km[lm])


def unit_solver(mesh: Mesh, electrodes: ElectrodeConfig) -> ForwardSolver:
    return ForwardSolver(mesh, np.ones(mesh.n_triangles), electrodes)
