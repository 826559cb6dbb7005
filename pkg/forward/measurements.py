"""
Voltage extraction and energy-form checks on forward solutions.
"""
from typing import Optional

import numpy as np

from errors import DependencyError, PatternError
from forward.fem_assembly import element_energy_density
from forward.models import PotentialField
from geometry.models import Mesh


def measure(potential: PotentialField, l_plus: int, l_minus: int) -> float:
    """
    Voltage U = value(l_plus) - value(l_minus) for 1-based electrode indices.

    CEM fields use the electrode constants, PEM and gap fields the potentials
    at the electrode center nodes.

    Raises:
        PatternError: a measure electrode carries drive current
    """
    if {l_plus, l_minus} & set(potential.drive):
        raise PatternError(
            "Cannot measure on a drive electrode",
            {"drive": potential.drive, "measure": (l_plus, l_minus)},
        )
    if l_plus == l_minus:
        return 0.0
    values = potential.electrode_values
    return float(values[l_plus - 1] - values[l_minus - 1])


def energy_product(mesh: Mesh, sigma: np.ndarray, u: np.ndarray, w: np.ndarray,
                   elements: Optional[np.ndarray] = None) -> float:
    """∫ σ ∇u·∇w dx over all triangles, or over `elements` only."""
    density = element_energy_density(mesh, u, w) * mesh.areas * sigma
    if elements is not None:
        density = density[elements]
    return float(density.sum())


def energy_identity_gap(mesh: Mesh, sigma: np.ndarray, drive_field: PotentialField,
                        measure_field: PotentialField) -> float:
    """
    Relative gap between I·U_{k,l} and ∫σ∇u_k·∇u_l.

    U_{k,l} is measured on drive_field across measure_field's drive pair.
    """
    if drive_field.mesh_id != measure_field.mesh_id:
        raise DependencyError("Fields live on different meshes")
    voltage = measure(drive_field, *measure_field.drive)
    energy = energy_product(mesh, sigma, drive_field.nodal_values, measure_field.nodal_values)
    lhs = drive_field.current * voltage
    return abs(lhs - energy) / max(abs(lhs), np.finfo(float).tiny)
