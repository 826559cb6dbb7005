"""
Constrained Delaunay meshing of the domain.

The boundary polyline is built from the electrode centers and arc endpoints
plus a uniform fill; Triangle is called with boundary Steiner points
disabled, so the boundary loop is exactly the input vertices 0..Nb-1 in
counterclockwise order and every electrode center stays a node.
"""
import logging
from typing import Optional, Sequence, Union

import numpy as np
import triangle

from errors import GeometryError, ResolutionError
from geometry.electrodes import required_boundary_positions
from geometry.models import ElectrodeConfig, Mesh, BoundaryShape
from geometry.shapes import BoundaryCurve

logger = logging.getLogger(__name__)

MIN_ANGLE_DEG = 30


def _boundary_positions(required: np.ndarray, perimeter: float, edge: float) -> np.ndarray:
    """Required arc positions plus a uniform fill so consecutive gaps are ≤ edge."""
    tol = 1e-12 * perimeter
    req = np.unique(np.mod(required, perimeter))
    if len(req) == 0:
        req = np.array([0.0])
    keep = np.concatenate([[True], np.diff(req) > tol])
    req = req[keep]
    if len(req) > 1 and (req[0] + perimeter - req[-1]) <= tol:
        req = req[:-1]
    positions = []
    nxt = np.append(req[1:], req[0] + perimeter)
    for a, b in zip(req, nxt):
        n_sub = max(int(np.ceil((b - a) / edge - 1e-9)), 1)
        positions.append(a + (b - a) * np.arange(n_sub) / n_sub)
    return np.mod(np.concatenate(positions), perimeter)


def generate_mesh(
    boundary: Union[BoundaryShape, BoundaryCurve],
    electrodes: ElectrodeConfig,
    target_edge_len: float,
    interior_edge_len: Optional[float] = None,
    constraints: Sequence[np.ndarray] = (),
) -> Mesh:
    """
    Mesh the domain enclosed by `boundary`.

    Args:
        boundary: boundary shape (or an already built curve)
        electrodes: electrode layout; centers and arc endpoints become boundary nodes
        target_edge_len: maximum boundary edge length
        interior_edge_len: edge length that sets the interior area bound
            (defaults to target_edge_len; larger values give a graded mesh)
        constraints: closed interior rings (interfaces, inclusions) to conform to

    Returns:
        Mesh with every triangle tagged "other"

    Raises:
        ResolutionError: electrode arcs too short for the requested edge length
    """
    curve = boundary if isinstance(boundary, BoundaryCurve) else BoundaryCurve(boundary)
    if not target_edge_len > 0:
        raise ResolutionError("Edge length must be positive", {"edge": target_edge_len})
    if electrodes.half_width < target_edge_len:
        raise ResolutionError(
            "Electrode half-width is smaller than the boundary edge length",
            {"half_width": electrodes.half_width, "edge": target_edge_len},
        )
    if abs(electrodes.perimeter - curve.perimeter) > 1e-6 * curve.perimeter:
        raise GeometryError(
            "Electrode layout refers to a different boundary length",
            {"electrodes": electrodes.perimeter, "boundary": curve.perimeter},
        )

    boundary_s = _boundary_positions(required_boundary_positions(electrodes), curve.perimeter, target_edge_len)
    order = np.argsort(boundary_s)
    boundary_s = boundary_s[order]
    boundary_pts = curve.points(boundary_s)
    nb = len(boundary_pts)

    vertices = [boundary_pts]
    segments = [np.column_stack([np.arange(nb), (np.arange(nb) + 1) % nb])]
    offset = nb
    for ring in constraints:
        ring = np.asarray(ring, dtype=float)
        m = len(ring)
        vertices.append(ring)
        segments.append(offset + np.column_stack([np.arange(m), (np.arange(m) + 1) % m]))
        offset += m

    interior = interior_edge_len or target_edge_len
    max_area = np.sqrt(3.0) / 4.0 * interior ** 2
    opts = f"pq{MIN_ANGLE_DEG}a{max_area:.12f}Y"
    out = triangle.triangulate(
        {"vertices": np.vstack(vertices), "segments": np.vstack(segments)},
        opts,
    )
    nodes = np.asarray(out["vertices"], dtype=float)
    tris = np.asarray(out["triangles"], dtype=np.int64)
    if not np.allclose(nodes[:nb], boundary_pts):
        raise GeometryError("Mesh generator reordered the boundary vertices")

    p = nodes[tris]
    signed = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    flip = signed < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    boundary_edges = np.column_stack([np.arange(nb), (np.arange(nb) + 1) % nb])
    mesh = Mesh(
        nodes=nodes,
        triangles=tris,
        boundary_edges=boundary_edges,
        region_tags=np.full(len(tris), "other", dtype=object),
        boundary_s=boundary_s,
        perimeter=curve.perimeter,
    )
    mesh.validate()
    logger.info(
        f"Generated mesh {mesh.mesh_id}: {mesh.n_nodes} nodes, {mesh.n_triangles} triangles, "
        f"{nb} boundary edges (edge {target_edge_len:g}, interior {interior:g})"
    )
    return mesh


def generate_disk_mesh(
    radius: float,
    target_edge_len: float,
    electrodes: ElectrodeConfig,
    interior_edge_len: Optional[float] = None,
) -> Mesh:
    """
    Mesh a disk of the given radius centred at the origin.

    Raises:
        ResolutionError: target_edge_len ≥ radius/4 or electrode arcs not resolvable
    """
    if not target_edge_len < radius / 4.0:
        raise ResolutionError(
            "Disk edge length must be smaller than radius/4",
            {"radius": radius, "edge": target_edge_len},
        )
    return generate_mesh(BoundaryShape.circle(radius), electrodes, target_edge_len, interior_edge_len)
