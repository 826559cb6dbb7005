"""
Arc-length parametrised boundary curves.

Electrode centers and mesh boundary nodes are all addressed by their arc-length
position s in [0, perimeter), measured counterclockwise from the first point of
the curve (angle 0 for circles and ellipses).
"""
import json
import logging
from pathlib import Path
from typing import Optional

import numpy as np
import shapely
from scipy.interpolate import CubicSpline
from shapely.geometry import LinearRing, Polygon

from errors import ConfigError, GeometryError
from geometry.models import CIRCLE, ELLIPSE, POLYGON, SMOOTH, BoundaryShape

logger = logging.getLogger(__name__)

FIXTURES_DIR = Path(__file__).resolve().parent.parent / "fixtures"

# Samples used to tabulate arc length for curves without a closed form
ARC_TABLE_SAMPLES = 8192


class BoundaryCurve:
    """Evaluates points and outward normals of a BoundaryShape by arc length."""

    def __init__(self, shape: BoundaryShape):
        self.shape = shape
        if shape.kind == CIRCLE:
            self.perimeter = 2.0 * np.pi * shape.radius
        elif shape.kind == POLYGON:
            verts = np.asarray(shape.vertices, dtype=float)
            self._vertices = np.vstack([verts, verts[:1]])
            seg = np.hypot(*np.diff(self._vertices, axis=0).T)
            self._vertex_s = np.concatenate([[0.0], np.cumsum(seg)])
            self.perimeter = float(self._vertex_s[-1])
        elif shape.kind == ELLIPSE:
            t = np.linspace(0.0, 2.0 * np.pi, ARC_TABLE_SAMPLES + 1)
            self._build_table(t, np.column_stack([shape.a * np.cos(t), shape.b * np.sin(t)]))
        elif shape.kind == SMOOTH:
            ctrl = np.asarray(shape.control_points, dtype=float)
            closed = np.vstack([ctrl, ctrl[:1]])
            knots = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(closed, axis=0).T))])
            self._spline = CubicSpline(knots, closed, bc_type="periodic")
            t = np.linspace(0.0, knots[-1], ARC_TABLE_SAMPLES + 1)
            self._build_table(t, self._spline(t))
            ring = LinearRing(self._spline(t[:-1]))
            if not ring.is_simple:
                raise GeometryError("Spline through the control points self-intersects")

    def _build_table(self, t: np.ndarray, pts: np.ndarray) -> None:
        self._table_t = t
        self._table_s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
        self.perimeter = float(self._table_s[-1])

    def _param(self, s: np.ndarray) -> np.ndarray:
        return np.interp(s, self._table_s, self._table_t)

    def points(self, s) -> np.ndarray:
        """(n, 2) points at arc-length positions s (wrapped into [0, perimeter))."""
        s = np.mod(np.atleast_1d(np.asarray(s, dtype=float)), self.perimeter)
        kind = self.shape.kind
        if kind == CIRCLE:
            theta = s / self.shape.radius
            return self.shape.radius * np.column_stack([np.cos(theta), np.sin(theta)])
        if kind == POLYGON:
            x = np.interp(s, self._vertex_s, self._vertices[:, 0])
            y = np.interp(s, self._vertex_s, self._vertices[:, 1])
            return np.column_stack([x, y])
        t = self._param(s)
        if kind == ELLIPSE:
            return np.column_stack([self.shape.a * np.cos(t), self.shape.b * np.sin(t)])
        return self._spline(t)

    def normals(self, s) -> np.ndarray:
        """(n, 2) outward unit normals at s."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        delta = 1e-6 * self.perimeter
        tangent = self.points(s + delta) - self.points(s - delta)
        tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
        return np.column_stack([tangent[:, 1], -tangent[:, 0]])

    def polyline(self, spacing: float) -> np.ndarray:
        """Points sampled uniformly in arc length, at most `spacing` apart."""
        n = max(int(np.ceil(self.perimeter / spacing)), 16)
        return self.points(np.linspace(0.0, self.perimeter, n, endpoint=False))

    def polygon(self, spacing: Optional[float] = None) -> Polygon:
        spacing = spacing or self.perimeter / 4096
        return Polygon(self.polyline(spacing))


def resample_ring(ring: np.ndarray, spacing: float) -> np.ndarray:
    """Resample a closed ring at (nearly) uniform spacing along its length."""
    line = LinearRing(ring)
    n = max(int(np.ceil(line.length / spacing)), 8)
    distances = np.linspace(0.0, line.length, n, endpoint=False)
    pts = shapely.line_interpolate_point(line, distances)
    coords = shapely.get_coordinates(pts)
    if LinearRing(coords).is_ccw is False:
        coords = coords[::-1]
    return coords


def polygon_rings(geom) -> list:
    """Exterior rings of a Polygon or MultiPolygon as arrays (drops the closing point)."""
    if geom.is_empty:
        return []
    parts = getattr(geom, "geoms", [geom])
    return [np.asarray(p.exterior.coords)[:-1] for p in parts if not p.is_empty]


def boundary_shape_from_dict(spec: dict) -> BoundaryShape:
    """
    Build a BoundaryShape from a run-config boundary entry.

    Args:
        spec: {"kind": "circle", "radius": r} | {"kind": "ellipse", "a", "b"} |
              {"kind": "polygon", "vertices"} | {"kind": "smooth", "control_points"} |
              {"kind": "fixture", "name": "abdomen"}
    """
    kind = spec.get("kind")
    try:
        if kind == CIRCLE:
            return BoundaryShape.circle(spec["radius"])
        if kind == ELLIPSE:
            return BoundaryShape.ellipse(spec["a"], spec["b"])
        if kind == POLYGON:
            return BoundaryShape.polygon(spec["vertices"])
        if kind == SMOOTH:
            return BoundaryShape.smooth(spec["control_points"])
        if kind == "fixture":
            return load_fixture_boundary(spec.get("name", "abdomen"))
    except KeyError as exc:
        raise ConfigError(f"Boundary entry of kind '{kind}' is missing {exc}") from exc
    raise ConfigError(f"Unknown boundary kind: {kind}")


def load_fixture_boundary(name: str = "abdomen", fixtures_dir: Optional[Path] = None) -> BoundaryShape:
    """
    Load a shipped boundary fixture (control points of a smooth closed curve).

    Args:
        name: fixture name; the file is `<name>_boundary.json`
        fixtures_dir: directory to look in (defaults to the repository fixtures/)

    Returns:
        BoundaryShape of kind smooth
    """
    path = Path(fixtures_dir or FIXTURES_DIR) / f"{name}_boundary.json"
    if not path.exists():
        raise ConfigError(f"Boundary fixture not found: {path}", {"path": str(path)})
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    logger.debug(f"Loaded boundary fixture {name} ({len(data['control_points'])} control points)")
    return BoundaryShape.smooth(data["control_points"])
