"""
Reconstruction domain D around the eight electrodes of one pattern set.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import shapely
from scipy.sparse.csgraph import connected_components
from shapely.geometry import LinearRing, LineString

from errors import GeometryError
from geometry.electrodes import NEIGHBORHOOD_SIZE, wrap_index
from geometry.models import ElectrodeConfig, Mesh

logger = logging.getLogger(__name__)

# default depth of D in electrode pitches
DEPTH_PITCHES = 2.0
DEFAULT_DEPTH_INRADIUS = 0.5


@dataclass(frozen=True, eq=False)
class ReconDomain:
    """
    mesh:        parent mesh (the γ ≡ 1 reference mesh)
    element_ids: sorted triangle ids of D
    n:           center electrode
    depth:       selection depth from the boundary arc
    """
    mesh: Mesh
    element_ids: np.ndarray
    n: int
    depth: float

    @property
    def size(self) -> int:
        return len(self.element_ids)

    @property
    def mesh_id(self) -> str:
        return self.mesh.mesh_id

    @property
    def areas(self) -> np.ndarray:
        return self.mesh.areas[self.element_ids]

    @property
    def centroids(self) -> np.ndarray:
        return self.mesh.centroids[self.element_ids]

    def mask(self) -> np.ndarray:
        out = np.zeros(self.mesh.n_triangles, dtype=bool)
        out[self.element_ids] = True
        return out


def boundary_ring(mesh: Mesh) -> LinearRing:
    return LinearRing(mesh.nodes[mesh.boundary_nodes])


def boundary_distance(mesh: Mesh, points: np.ndarray) -> np.ndarray:
    """Distance from each point to the mesh boundary polygon."""
    return shapely.distance(boundary_ring(mesh), shapely.points(points))


def element_adjacency(mesh: Mesh, element_ids: np.ndarray) -> sp.csr_matrix:
    """Edge adjacency among the given triangles, indexed by position in element_ids."""
    tris = mesh.triangles[element_ids]
    edges = np.sort(np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1)
    owner = np.tile(np.arange(len(element_ids)), 3)
    _, inverse, counts = np.unique(edges, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    shared = counts[inverse] == 2
    order = np.argsort(inverse[shared], kind="stable")
    pairs = owner[shared][order].reshape(-1, 2)
    n = len(element_ids)
    data = np.ones(len(pairs))
    adj = sp.coo_matrix((data, (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    return (adj + adj.T).tocsr()


def _window_arc(mesh: Mesh, electrodes: ElectrodeConfig, n: int):
    """Boundary polyline from one pitch before electrode n-3 to one pitch after n+4."""
    period = mesh.perimeter or electrodes.perimeter
    pitch = electrodes.pitch
    first = electrodes.center(wrap_index(n - 3, electrodes.count))
    span = (NEIGHBORHOOD_SIZE - 1 + 2) * pitch
    if span >= period:
        return boundary_ring(mesh)
    start = first - pitch
    offset = np.mod(mesh.boundary_s - start, period)
    inside = np.nonzero(offset <= span)[0]
    inside = inside[np.argsort(offset[inside], kind="stable")]
    if len(inside) < 2:
        raise GeometryError("Electrode window arc holds fewer than two boundary nodes", {"n": n})
    return LineString(mesh.nodes[mesh.boundary_nodes[inside]])


def extract_recon_domain(mesh: Mesh, electrodes: ElectrodeConfig, n: int,
                         depth: Optional[float] = None) -> ReconDomain:
    """
    Triangles whose centroid lies within `depth` of the boundary arc spanned by
    the electrodes n-3 .. n+4 (plus one pitch on either side).

    Only the largest edge-connected component is kept.

    Args:
        mesh: mesh carrying boundary arc positions
        electrodes: electrode layout on that boundary
        n: center electrode (1-based)
        depth: selection depth; defaults to two electrode pitches, clamped to
            half the inradius on small domains

    Raises:
        GeometryError: non-positive depth, depth beyond the inradius or an empty selection
    """
    if mesh.boundary_s is None:
        raise GeometryError("Mesh carries no boundary arc positions")
    if not 1 <= n <= electrodes.count:
        raise GeometryError(f"Center electrode {n} outside 1..{electrodes.count}")
    centroids = mesh.centroids
    inradius = float(boundary_distance(mesh, centroids).max())
    if depth is None:
        depth = DEPTH_PITCHES * electrodes.pitch
        if depth > DEFAULT_DEPTH_INRADIUS * inradius:
            depth = DEFAULT_DEPTH_INRADIUS * inradius
            logger.info(f"D_n={n}: default depth clamped to {depth:.4g} "
                        f"({DEFAULT_DEPTH_INRADIUS:g} of the inradius {inradius:.4g})")
    else:
        depth = float(depth)
    if not depth > 0:
        raise GeometryError("Reconstruction depth must be positive", {"depth": depth})
    if depth >= inradius:
        raise GeometryError("Reconstruction depth reaches the domain inradius",
                            {"depth": depth, "inradius": inradius})

    arc = _window_arc(mesh, electrodes, n)
    selected = np.nonzero(shapely.distance(arc, shapely.points(centroids)) <= depth)[0]
    if len(selected) == 0:
        raise GeometryError("Reconstruction domain is empty", {"n": n, "depth": depth})

    n_parts, labels = connected_components(element_adjacency(mesh, selected), directed=False)
    if n_parts > 1:
        largest = np.argmax(np.bincount(labels))
        logger.debug(f"D_n={n}: keeping the largest of {n_parts} components")
        selected = selected[labels == largest]

    logger.debug(f"D_n={n}: {len(selected)} triangles within {depth:.4g} of the electrode arc")
    return ReconDomain(mesh=mesh, element_ids=np.sort(selected), n=n, depth=depth)
