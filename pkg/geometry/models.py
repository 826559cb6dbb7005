"""
Core geometry records: boundary shapes, meshes, electrode layouts and phantoms.

Electrode indices are 1-based everywhere in the public API (electrode 1 is the
first electrode along the boundary), matching how inject-measure patterns are
written. Arrays indexed by electrode are 0-based internally.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import shapely
from shapely.geometry import LinearRing

from errors import GeometryError, ParameterError

REGION_TAGS = ("fat", "muscle", "bone", "internal", "other")

CIRCLE = "circle"
POLYGON = "polygon"
SMOOTH = "smooth"
ELLIPSE = "ellipse"
BOUNDARY_KINDS = (CIRCLE, POLYGON, SMOOTH, ELLIPSE)

Point = Tuple[float, float]


def _signed_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class BoundaryShape:
    """
    A closed, simple boundary curve in the plane.

    Kinds:
        circle:  centred at the origin, `radius` > 0
        polygon: `vertices` in counterclockwise order
        smooth:  periodic cubic spline through `control_points` (CCW)
        ellipse: semi-axes `a` (x) and `b` (y), centred at the origin
    """
    kind: str
    radius: Optional[float] = None
    vertices: Optional[Tuple[Point, ...]] = None
    control_points: Optional[Tuple[Point, ...]] = None
    a: Optional[float] = None
    b: Optional[float] = None

    def __post_init__(self):
        if self.kind not in BOUNDARY_KINDS:
            raise GeometryError(f"Unknown boundary kind: {self.kind}")
        if self.kind == CIRCLE:
            if self.radius is None or not self.radius > 0:
                raise GeometryError("Circle radius must be positive", {"radius": self.radius})
        elif self.kind == ELLIPSE:
            if self.a is None or self.b is None or not (self.a > 0 and self.b > 0):
                raise GeometryError("Ellipse semi-axes must be positive", {"a": self.a, "b": self.b})
        else:
            pts = self.vertices if self.kind == POLYGON else self.control_points
            if pts is None or len(pts) < 3:
                raise GeometryError(f"A {self.kind} boundary needs at least 3 points")
            arr = np.asarray(pts, dtype=float)
            if _signed_area(arr) <= 0:
                raise GeometryError(f"{self.kind} points must be in counterclockwise order")
            if not LinearRing(arr).is_simple:
                raise GeometryError(f"{self.kind} boundary is self-intersecting")

    @classmethod
    def circle(cls, radius: float) -> "BoundaryShape":
        return cls(kind=CIRCLE, radius=float(radius))

    @classmethod
    def polygon(cls, vertices: Sequence[Point]) -> "BoundaryShape":
        return cls(kind=POLYGON, vertices=tuple((float(x), float(y)) for x, y in vertices))

    @classmethod
    def smooth(cls, control_points: Sequence[Point]) -> "BoundaryShape":
        return cls(kind=SMOOTH, control_points=tuple((float(x), float(y)) for x, y in control_points))

    @classmethod
    def ellipse(cls, a: float, b: float) -> "BoundaryShape":
        return cls(kind=ELLIPSE, a=float(a), b=float(b))

    def to_dict(self) -> dict:
        if self.kind == CIRCLE:
            return {"kind": CIRCLE, "radius": self.radius}
        if self.kind == ELLIPSE:
            return {"kind": ELLIPSE, "a": self.a, "b": self.b}
        if self.kind == POLYGON:
            return {"kind": POLYGON, "vertices": [list(p) for p in self.vertices]}
        return {"kind": SMOOTH, "control_points": [list(p) for p in self.control_points]}


@dataclass(frozen=True, eq=False)
class Mesh:
    """
    Conforming triangular mesh.

    nodes:           (N, 2) coordinates in meters
    triangles:       (M, 3) node indices, counterclockwise
    boundary_edges:  (B, 2) node pairs forming one closed counterclockwise loop
    region_tags:     (M,) region label per triangle
    boundary_s:      (B,) arc-length position of boundary_edges[:, 0] along the
                     generating curve (None for meshes loaded without it)
    """
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    region_tags: np.ndarray
    boundary_s: Optional[np.ndarray] = None
    perimeter: Optional[float] = None

    @property
    def n_nodes(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def n_triangles(self) -> int:
        return int(self.triangles.shape[0])

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        return 0.5 * (
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
        )

    @property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """(M, 3, 2) constant gradients of the three P1 hat functions per triangle."""
        p = self.nodes[self.triangles]
        twice_area = 2.0 * self.signed_areas
        grads = np.empty((self.n_triangles, 3, 2))
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            grads[:, i, 0] = (p[:, j, 1] - p[:, k, 1]) / twice_area
            grads[:, i, 1] = (p[:, k, 0] - p[:, j, 0]) / twice_area
        return grads

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        """Boundary node indices in loop order."""
        return self.boundary_edges[:, 0].copy()

    @cached_property
    def boundary_edge_lengths(self) -> np.ndarray:
        d = self.nodes[self.boundary_edges[:, 1]] - self.nodes[self.boundary_edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def boundary_weights(self) -> np.ndarray:
        """Per-node values of ∫_{∂Ω} φ_i ds (zero for interior nodes)."""
        w = np.zeros(self.n_nodes)
        half = 0.5 * self.boundary_edge_lengths
        np.add.at(w, self.boundary_edges[:, 0], half)
        np.add.at(w, self.boundary_edges[:, 1], half)
        return w

    @property
    def boundary_length(self) -> float:
        return float(self.boundary_edge_lengths.sum())

    @cached_property
    def mesh_id(self) -> str:
        h = hashlib.sha1()
        h.update(np.ascontiguousarray(self.nodes, dtype=np.float64).tobytes())
        h.update(np.ascontiguousarray(self.triangles, dtype=np.int64).tobytes())
        return h.hexdigest()[:16]

    def element_gradients(self, nodal_values: np.ndarray) -> np.ndarray:
        """(M, 2) gradient of a P1 field on every triangle."""
        return np.einsum("mi,mid->md", nodal_values[self.triangles], self.basis_gradients)

    def region_mask(self, tag: str) -> np.ndarray:
        return self.region_tags == tag

    def region_areas(self) -> Dict[str, float]:
        return {
            str(tag): float(self.areas[self.region_tags == tag].sum())
            for tag in np.unique(self.region_tags)
        }

    def with_region_tags(self, region_tags: np.ndarray) -> "Mesh":
        return Mesh(
            nodes=self.nodes,
            triangles=self.triangles,
            boundary_edges=self.boundary_edges,
            region_tags=np.asarray(region_tags, dtype=object),
            boundary_s=self.boundary_s,
            perimeter=self.perimeter,
        )

    def validate(self) -> None:
        """Check the structural invariants; raises GeometryError on the first failure."""
        if np.any(self.signed_areas <= 0):
            raise GeometryError(
                "Mesh has triangles with non-positive signed area",
                {"count": int(np.sum(self.signed_areas <= 0))},
            )
        if len(self.region_tags) != self.n_triangles:
            raise GeometryError("Every triangle needs exactly one region tag")
        unknown = set(np.unique(self.region_tags)) - set(REGION_TAGS)
        if unknown:
            raise GeometryError(f"Unknown region tags: {sorted(unknown)}")
        edges = self.boundary_edges
        if not np.array_equal(edges[:, 1], np.roll(edges[:, 0], -1)):
            raise GeometryError("Boundary edges do not form a single closed loop")
        if len(np.unique(edges[:, 0])) != len(edges):
            raise GeometryError("Boundary loop visits a node twice")


@dataclass(frozen=True, eq=False)
class ElectrodeConfig:
    """
    Electrodes as boundary arcs.

    centers:            (N_E,) arc-length positions p_k along the boundary
    half_width:         arc half-length h
    contact_impedance:  (N_E,) contact impedance z per electrode (Ω·m)
    drive_current:      injected current I (mA)
    perimeter:          length of the boundary the centers refer to
    """
    centers: np.ndarray
    half_width: float
    contact_impedance: np.ndarray
    drive_current: float
    perimeter: float

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float)
        object.__setattr__(self, "centers", centers)
        z = np.broadcast_to(np.asarray(self.contact_impedance, dtype=float), centers.shape).copy()
        object.__setattr__(self, "contact_impedance", z)
        if len(centers) < 8:
            raise ParameterError(
                "At least 8 electrodes are needed for the local pattern sets",
                {"count": len(centers)},
            )
        if not self.half_width > 0:
            raise ParameterError("Electrode half-width must be positive", {"half_width": self.half_width})
        if np.any(z <= 0):
            raise ParameterError("Contact impedance must be positive")
        if not self.drive_current > 0:
            raise ParameterError("Drive current must be positive", {"current": self.drive_current})
        if not self.perimeter > 0:
            raise ParameterError("Perimeter must be positive")
        self._check_disjoint()

    def _check_disjoint(self) -> None:
        s = np.sort(np.mod(self.centers, self.perimeter))
        gaps = np.diff(np.append(s, s[0] + self.perimeter))
        if np.any(gaps <= 2.0 * self.half_width):
            raise GeometryError(
                "Electrode arcs overlap",
                {"min_gap": float(gaps.min()), "half_width": self.half_width},
            )

    @property
    def count(self) -> int:
        return int(len(self.centers))

    @property
    def pitch(self) -> float:
        """Mean arc distance between consecutive electrode centers."""
        return self.perimeter / self.count

    def center(self, k: int) -> float:
        return float(self.centers[k - 1])

    def arc(self, k: int) -> Tuple[float, float]:
        """(start, end) arc-length interval of electrode k (may exceed the perimeter)."""
        c = self.center(k)
        return c - self.half_width, c + self.half_width

    def with_half_width(self, half_width: float) -> "ElectrodeConfig":
        return ElectrodeConfig(
            centers=self.centers,
            half_width=half_width,
            contact_impedance=self.contact_impedance,
            drive_current=self.drive_current,
            perimeter=self.perimeter,
        )

    def to_dict(self) -> dict:
        return {
            "centers": [float(c) for c in self.centers],
            "half_width": self.half_width,
            "contact_impedance": [float(z) for z in self.contact_impedance],
            "current": self.drive_current,
            "perimeter": self.perimeter,
        }


@dataclass(frozen=True)
class Layer:
    """
    One nested tissue layer.

    The layer occupies the points of the domain deeper than `depth` (distance
    to the outer boundary) and not claimed by a deeper layer. `interface` is
    the polygon of its outer curve (the boundary itself for depth 0).
    """
    tag: str
    sigma: float
    depth: float
    interface: Tuple[Point, ...] = ()


@dataclass(frozen=True)
class Inclusion:
    tag: str
    sigma: float
    vertices: Tuple[Point, ...]


@dataclass(frozen=True)
class Phantom:
    """Piecewise-constant real conductivity: nested layers plus polygon inclusions."""
    boundary: BoundaryShape
    layers: Tuple[Layer, ...]
    inclusions: Tuple[Inclusion, ...] = field(default_factory=tuple)

    def __post_init__(self):
        depths = [layer.depth for layer in self.layers]
        if depths != sorted(depths) or len(set(depths)) != len(depths):
            raise GeometryError("Layers must be ordered outermost-first with increasing depth")
        for layer in self.layers:
            if not layer.sigma > 0:
                raise GeometryError(f"Conductivity of layer {layer.tag} must be positive")
        for inc in self.inclusions:
            if not inc.sigma > 0:
                raise GeometryError(f"Conductivity of inclusion {inc.tag} must be positive")
        for outer, inner in zip(self.layers, self.layers[1:]):
            if outer.interface and inner.interface:
                if not shapely.Polygon(outer.interface).contains(shapely.Polygon(inner.interface)):
                    raise GeometryError(f"Interface of {inner.tag} is not nested inside {outer.tag}")

    def sigma_by_tag(self) -> Dict[str, float]:
        table = {layer.tag: layer.sigma for layer in self.layers}
        table.update({inc.tag: inc.sigma for inc in self.inclusions})
        return table

    def interfaces(self) -> List[np.ndarray]:
        return [np.asarray(layer.interface) for layer in self.layers if layer.interface and layer.depth > 0]
