"""
Layered tissue phantoms: a subcutaneous fat shell of fixed depth under the
boundary, muscle beneath it, an optional internal region below the muscle band
and optional polygon inclusions (bone).
"""
import logging
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import shapely
from shapely.geometry import Polygon

from errors import GeometryError, ParameterError
from geometry.mesh_generation import generate_mesh
from geometry.models import BoundaryShape, ElectrodeConfig, Inclusion, Layer, Mesh, Phantom
from geometry.shapes import BoundaryCurve, polygon_rings, resample_ring

logger = logging.getLogger(__name__)

# S/m
TISSUE_CONDUCTIVITY: Dict[str, float] = {
    "electrode": 1.0,
    "fat": 1.0 / 15.0,
    "muscle": 1.0 / 3.0,
    "bone": 1.0 / 150.0,
    "internal": (1.0 / 15.0 + 1.0 / 0.65) / 2.0,
    "other": 1.0,
}


def _eroded(outer: Polygon, depth: float):
    inner = outer.buffer(-depth)
    if inner.is_empty:
        raise GeometryError(
            "Layer depth is not smaller than the domain inradius",
            {"depth": depth},
        )
    return inner


def layered_phantom(
    boundary: BoundaryShape,
    fat_depth: float,
    conductivities: Optional[Dict[str, float]] = None,
    muscle_depth: Optional[float] = None,
    inclusions: Sequence[Tuple[Sequence[Tuple[float, float]], str]] = (),
    outline_spacing: Optional[float] = None,
) -> Phantom:
    """
    Describe a layered phantom without meshing it.

    Args:
        boundary: outer boundary
        fat_depth: thickness of the fat shell (0 for no fat)
        conductivities: map region tag -> S/m (missing tags use TISSUE_CONDUCTIVITY)
        muscle_depth: depth from the boundary at which the internal region starts
        inclusions: (polygon vertices, tag) pairs, e.g. bone cross-sections
        outline_spacing: sampling of the boundary used for offsets

    Returns:
        Phantom with interfaces stored as polygon rings
    """
    if fat_depth < 0:
        raise GeometryError("Fat depth must be non-negative", {"fat_depth": fat_depth})
    table = dict(TISSUE_CONDUCTIVITY)
    table.update(conductivities or {})
    curve = BoundaryCurve(boundary)
    outer = curve.polygon(outline_spacing)

    layers = []
    if fat_depth > 0:
        layers.append(Layer(tag="fat", sigma=table["fat"], depth=0.0))
        inner = _eroded(outer, fat_depth)
        rings = polygon_rings(inner)
        layers.append(Layer(tag="muscle", sigma=table["muscle"], depth=fat_depth,
                            interface=tuple(map(tuple, rings[0])) if len(rings) == 1 else ()))
    else:
        layers.append(Layer(tag="muscle", sigma=table["muscle"], depth=0.0))
    if muscle_depth is not None:
        if muscle_depth <= fat_depth:
            raise GeometryError(
                "Muscle depth must exceed the fat depth",
                {"fat_depth": fat_depth, "muscle_depth": muscle_depth},
            )
        rings = polygon_rings(_eroded(outer, muscle_depth))
        layers.append(Layer(tag="internal", sigma=table["internal"], depth=muscle_depth,
                            interface=tuple(map(tuple, rings[0])) if len(rings) == 1 else ()))

    incs = []
    for vertices, tag in inclusions:
        poly = Polygon(vertices)
        if not outer.contains(poly):
            raise GeometryError(f"Inclusion {tag} is not inside the domain")
        if tag not in table:
            raise ParameterError(f"No conductivity given for inclusion tag {tag}")
        incs.append(Inclusion(tag=tag, sigma=table[tag], vertices=tuple(map(tuple, vertices))))
    return Phantom(boundary=boundary, layers=tuple(layers), inclusions=tuple(incs))


def tag_regions(mesh: Mesh, phantom: Phantom, outline_spacing: Optional[float] = None) -> np.ndarray:
    """
    Region tag per triangle by centroid containment.

    A centroid within the fat depth of the boundary is fat; deeper centroids
    take the tag of the deepest layer containing them; inclusions override.
    """
    outer = BoundaryCurve(phantom.boundary).polygon(outline_spacing)
    cx, cy = mesh.centroids[:, 0], mesh.centroids[:, 1]
    tags = np.full(mesh.n_triangles, phantom.layers[0].tag, dtype=object)
    for layer in phantom.layers[1:]:
        inside = shapely.contains_xy(_eroded(outer, layer.depth), cx, cy)
        tags[inside] = layer.tag
    for inc in phantom.inclusions:
        tags[shapely.contains_xy(Polygon(inc.vertices), cx, cy)] = inc.tag
    return tags


def build_layered_phantom(
    boundary: BoundaryShape,
    fat_depth: float,
    conductivities: Optional[Dict[str, float]] = None,
    *,
    electrodes: ElectrodeConfig,
    target_edge_len: float,
    interior_edge_len: Optional[float] = None,
    muscle_depth: Optional[float] = None,
    inclusions: Sequence[Tuple[Sequence[Tuple[float, float]], str]] = (),
    conform: bool = True,
) -> Tuple[Mesh, np.ndarray]:
    """
    Mesh a layered phantom and assign conductivity by region.

    Args:
        boundary: outer boundary
        fat_depth: fat shell thickness (must be below the inradius)
        conductivities: map region tag -> S/m
        electrodes: electrode layout (centers become mesh nodes)
        target_edge_len: boundary edge length
        interior_edge_len: interior edge length (defaults to target_edge_len)
        muscle_depth: optional start depth of the internal region
        inclusions: (polygon vertices, tag) pairs
        conform: insert layer interfaces and inclusion outlines as mesh constraints

    Returns:
        (mesh with region tags, per-triangle conductivity in S/m)
    """
    phantom = layered_phantom(boundary, fat_depth, conductivities, muscle_depth, inclusions)
    spacing = interior_edge_len or target_edge_len
    constraints = []
    if conform:
        curve = BoundaryCurve(boundary)
        outer = curve.polygon()
        for layer in phantom.layers[1:]:
            constraints.extend(resample_ring(r, spacing) for r in polygon_rings(_eroded(outer, layer.depth)))
        constraints.extend(resample_ring(np.asarray(inc.vertices), spacing) for inc in phantom.inclusions)
    mesh = generate_mesh(boundary, electrodes, target_edge_len, interior_edge_len, constraints)
    mesh = mesh.with_region_tags(tag_regions(mesh, phantom))
    mesh.validate()
    table = phantom.sigma_by_tag()
    sigma = np.array([table[t] for t in mesh.region_tags], dtype=float)
    logger.info(f"Phantom regions: { {k: round(v, 6) for k, v in mesh.region_areas().items()} }")
    return mesh, sigma
