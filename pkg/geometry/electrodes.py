"""
Electrode placement and the electrode-to-mesh bookkeeping used by the solvers.
"""
import logging
from typing import List, Tuple, Union

import numpy as np

from errors import ConfigError, ResolutionError
from geometry.models import ElectrodeConfig, Mesh

logger = logging.getLogger(__name__)

DEFAULT_CONTACT_IMPEDANCE = 0.01  # Ω·m
DEFAULT_CURRENT = 1.0  # mA

# Size of the local electrode window Z_n
NEIGHBORHOOD_SIZE = 8


def equally_spaced_electrodes(
    perimeter: float,
    count: int,
    half_width: float,
    contact_impedance: float = DEFAULT_CONTACT_IMPEDANCE,
    current: float = DEFAULT_CURRENT,
    offset: float = 0.0,
) -> ElectrodeConfig:
    """
    Place `count` electrodes at equal arc-length spacing.

    Args:
        perimeter: boundary length
        count: number of electrodes N_E
        half_width: electrode arc half-length h
        contact_impedance: z for every electrode
        current: drive current I
        offset: arc position of electrode 1

    Returns:
        ElectrodeConfig
    """
    centers = np.mod(offset + perimeter * np.arange(count) / count, perimeter)
    return ElectrodeConfig(
        centers=centers,
        half_width=half_width,
        contact_impedance=np.full(count, contact_impedance, dtype=float),
        drive_current=current,
        perimeter=perimeter,
    )


def wrap_index(index: int, count: int) -> int:
    """Reduce an (unreduced) electrode index into 1..count."""
    return (index - 1) % count + 1


def electrode_neighborhood(n: int, electrodes: Union[ElectrodeConfig, int]) -> Tuple[int, ...]:
    """
    The window (n-3, ..., n+4) of eight consecutive electrodes, reduced into 1..N_E.

    Args:
        n: center electrode index (1-based)
        electrodes: ElectrodeConfig or the electrode count

    Returns:
        Tuple of 8 electrode indices in cyclic order
    """
    count = electrodes if isinstance(electrodes, int) else electrodes.count
    if count < NEIGHBORHOOD_SIZE:
        raise ConfigError(
            f"At least {NEIGHBORHOOD_SIZE} electrodes are required, got {count}",
            {"count": count},
        )
    return tuple(wrap_index(n + offset, count) for offset in range(-3, 5))


def cyclic_distance(a, b, period: float) -> np.ndarray:
    """Distance between arc positions on a closed curve."""
    d = np.mod(np.asarray(a) - np.asarray(b), period)
    return np.minimum(d, period - d)


def required_boundary_positions(electrodes: ElectrodeConfig) -> np.ndarray:
    """Sorted arc positions that must be mesh nodes: every center and arc endpoint."""
    c = electrodes.centers
    h = electrodes.half_width
    s = np.concatenate([c, c - h, c + h])
    return np.unique(np.mod(s, electrodes.perimeter))


def _node_s_tolerance(mesh: Mesh) -> float:
    return 1e-9 * (mesh.perimeter or mesh.boundary_length)


def electrode_center_nodes(mesh: Mesh, electrodes: ElectrodeConfig) -> np.ndarray:
    """
    Mesh node index at each electrode center.

    Raises:
        ResolutionError: a center is not a boundary node of the mesh
    """
    if mesh.boundary_s is None:
        raise ResolutionError("Mesh carries no boundary arc positions; electrode nodes cannot be located")
    period = mesh.perimeter or electrodes.perimeter
    nodes = np.empty(electrodes.count, dtype=np.int64)
    for k, center in enumerate(electrodes.centers):
        dist = cyclic_distance(mesh.boundary_s, center, period)
        i = int(np.argmin(dist))
        if dist[i] > _node_s_tolerance(mesh):
            raise ResolutionError(
                f"Electrode {k + 1} center is not a mesh node",
                {"electrode": k + 1, "distance": float(dist[i])},
            )
        nodes[k] = mesh.boundary_nodes[i]
    return nodes


def electrode_edges(mesh: Mesh, electrodes: ElectrodeConfig) -> List[np.ndarray]:
    """
    Boundary-edge indices covered by each electrode arc.

    An edge belongs to electrode k when its arc midpoint lies inside the arc
    [p_k - h, p_k + h]. Every electrode must be resolved by at least one edge.
    """
    if mesh.boundary_s is None:
        raise ResolutionError("Mesh carries no boundary arc positions; electrode arcs cannot be located")
    period = mesh.perimeter or electrodes.perimeter
    s0 = mesh.boundary_s
    s1 = np.roll(s0, -1)
    s1 = np.where(s1 <= s0, s1 + period, s1)
    mid = np.mod(0.5 * (s0 + s1), period)
    edges = []
    for k, center in enumerate(electrodes.centers):
        ids = np.nonzero(cyclic_distance(mid, center, period) < electrodes.half_width)[0]
        if len(ids) == 0:
            raise ResolutionError(
                f"Electrode {k + 1} is not resolved by any boundary edge",
                {"electrode": k + 1, "half_width": electrodes.half_width},
            )
        edges.append(ids)
    return edges
