"""
Diagnostics of a sensitivity system: column correlation maps and the decay of
the reference-field weight w̃ = (∇v_k/I)·(∇v_l/I) away from the electrodes.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Optional

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from errors import ParameterError
from forward.fem_assembly import element_energy_density
from forward.models import PotentialField
from geometry.electrodes import cyclic_distance
from geometry.models import ElectrodeConfig, Mesh
from reconstruction.recon_domain import ReconDomain, boundary_distance, element_adjacency
from reconstruction.sensitivity import SensitivitySystem

logger = logging.getLogger(__name__)

CORRELATION_THRESHOLD = 0.5
HIGH_CORRELATION = 0.9
DECAY_BINS = 24


def _column_position(system: SensitivitySystem, element_id: int) -> int:
    pos = np.searchsorted(system.element_ids, element_id)
    if pos >= len(system.element_ids) or system.element_ids[pos] != element_id:
        raise ParameterError(f"Element {element_id} is not in the reconstruction domain",
                             {"n": system.n})
    return int(pos)


def _normalised_columns(S: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(S, axis=0)
    out = np.full(S.shape, np.nan)
    nonzero = norms > 0
    out[:, nonzero] = S[:, nonzero] / norms[nonzero]
    return out


def column_correlation(system: SensitivitySystem, element_id: int) -> np.ndarray:
    """
    c_ij = s_i·s_j / (‖s_i‖‖s_j‖) for every column j, aligned with element_ids.

    Zero columns give NaN. c_ii is exactly 1.
    """
    i = _column_position(system, element_id)
    cols = _normalised_columns(system.S)
    c = np.clip(cols[:, i] @ cols, -1.0, 1.0)
    if np.isfinite(c[i]):
        c[i] = 1.0
    else:
        logger.warning(f"Element {element_id} has a zero sensitivity column")
    return c


def correlation_matrix(system: SensitivitySystem) -> np.ndarray:
    """Full symmetric correlation matrix of the columns of S."""
    cols = _normalised_columns(system.S)
    C = np.clip(cols.T @ cols, -1.0, 1.0)
    C = 0.5 * (C + C.T)
    diag = np.isfinite(np.diag(C))
    C[np.arange(len(C))[diag], np.arange(len(C))[diag]] = 1.0
    return C


def correlation_table(system: SensitivitySystem, element_ids: Iterable[int],
                      threshold: float = CORRELATION_THRESHOLD) -> pd.DataFrame:
    """Sparse correlation map rows (i, j, c) with |c| > threshold for each reference element i."""
    frames = []
    for i in element_ids:
        c = column_correlation(system, int(i))
        keep = np.abs(np.nan_to_num(c)) > threshold
        frames.append(pd.DataFrame({"i": int(i), "j": system.element_ids[keep], "c": c[keep]}))
    if not frames:
        return pd.DataFrame(columns=["i", "j", "c"])
    return pd.concat(frames, ignore_index=True)


def adjacent_pair_correlations(system: SensitivitySystem, mesh: Mesh, depth_tolerance: float) -> pd.DataFrame:
    """
    Correlation of every edge-adjacent pair of columns whose centroid depths
    differ by at most depth_tolerance: rows (i, j, depth_i, depth_j, c) with i < j.
    """
    ids = system.element_ids
    adj = sp.triu(element_adjacency(mesh, ids), k=1).tocoo()
    depth = boundary_distance(mesh, mesh.centroids[ids])
    level = np.abs(depth[adj.row] - depth[adj.col]) <= depth_tolerance
    a, b = adj.row[level], adj.col[level]
    cols = _normalised_columns(system.S)
    c = np.clip(np.sum(cols[:, a] * cols[:, b], axis=0), -1.0, 1.0)
    return pd.DataFrame({"i": ids[a], "j": ids[b], "depth_i": depth[a], "depth_j": depth[b], "c": c})


def high_correlation_components(system: SensitivitySystem, mesh: Mesh, element_id: int,
                                threshold: float = HIGH_CORRELATION) -> int:
    """Number of edge-connected pieces of {j : c_ij > threshold}, which always holds i itself."""
    c = column_correlation(system, element_id)
    members = system.element_ids[np.nan_to_num(c, nan=-1.0) > threshold]
    n_parts, _ = connected_components(element_adjacency(mesh, members), directed=False)
    return int(n_parts)


def reference_elements(domain: ReconDomain, electrodes: ElectrodeConfig) -> Dict[str, int]:
    """
    Three elements of D below the center electrode: the one nearest the
    boundary, one at mid depth and the deepest.
    """
    mesh = domain.mesh
    period = mesh.perimeter or electrodes.perimeter
    nearest = np.argmin(cyclic_distance(mesh.boundary_s, electrodes.center(domain.n), period))
    center = mesh.nodes[mesh.boundary_nodes[nearest]]
    centroids = domain.centroids
    depth = boundary_distance(mesh, centroids)
    along2 = np.sum((centroids - center) ** 2, axis=1) - depth ** 2
    below = np.nonzero(along2 <= (0.5 * electrodes.pitch) ** 2)[0]
    if len(below) == 0:
        below = np.arange(domain.size)
    d = depth[below]
    picks = {}
    for name, target in (("near_boundary", d.min()), ("mid", 0.5 * (d.min() + d.max())), ("deep", d.max())):
        picks[name] = int(domain.element_ids[below[np.argmin(np.abs(d - target))]])
    return picks


@dataclass(frozen=True, eq=False)
class DecayDiagnostic:
    """
    weights:  (M,) |w̃| per triangle
    distance: (M,) centroid distance to the nearest cluster electrode
    profile:  shell averages of |w̃| by distance (r_inner, r_outer, r_mid, mean_weight, count)
    """
    weights: np.ndarray
    distance: np.ndarray
    profile: pd.DataFrame

    def tail(self, r_min: float, r_max: Optional[float] = None) -> pd.DataFrame:
        p = self.profile
        mask = p["r_inner"] >= r_min
        if r_max is not None:
            mask &= p["r_outer"] <= r_max
        return p[mask]


def decay_diagnostic(v_k: PotentialField, v_l: PotentialField, mesh: Mesh,
                     cluster_points: np.ndarray, bins: int = DECAY_BINS) -> DecayDiagnostic:
    """
    |w̃| = |∇v_k·∇v_l| / I² per triangle and its shell-averaged profile by
    distance from the electrode cluster.

    Args:
        v_k, v_l: γ ≡ 1 fields on `mesh`
        mesh: shared mesh
        cluster_points: (P, 2) electrode centers of the pattern
        bins: number of equal-width distance shells
    """
    if v_k.mesh_id != mesh.mesh_id or v_l.mesh_id != mesh.mesh_id:
        raise ParameterError("Decay fields must live on the given mesh")
    current = v_k.current
    weights = np.abs(element_energy_density(mesh, v_k.nodal_values, v_l.nodal_values)) / current ** 2
    points = np.atleast_2d(cluster_points)
    diff = mesh.centroids[:, None, :] - points[None, :, :]
    distance = np.sqrt(np.sum(diff ** 2, axis=2)).min(axis=1)

    edges = np.linspace(0.0, distance.max(), bins + 1)
    shell = np.clip(np.digitize(distance, edges) - 1, 0, bins - 1)
    area = mesh.areas
    weighted = np.bincount(shell, weights=weights * area, minlength=bins)
    shell_area = np.bincount(shell, weights=area, minlength=bins)
    count = np.bincount(shell, minlength=bins)
    filled = count > 0
    profile = pd.DataFrame({
        "r_inner": edges[:-1][filled],
        "r_outer": edges[1:][filled],
        "r_mid": 0.5 * (edges[:-1] + edges[1:])[filled],
        "mean_weight": weighted[filled] / shell_area[filled],
        "count": count[filled],
    })
    return DecayDiagnostic(weights=weights, distance=distance, profile=profile)
