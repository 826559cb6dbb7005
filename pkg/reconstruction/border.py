"""
Fat-border depth from a merged image.

Along the inward normal at sample points of the boundary the merged
conductivity is read off; the border is where the profile, past its minimum,
first climbs back over the midpoint between its minimum and maximum. The
per-sample depths are then median-filtered along the boundary, the fat border
being smooth on the scale of a few samples. Depth errors are scored in element
layers: the larger of the nominal layer and the size of the triangle that holds
the true interface point.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
from matplotlib.tri import Triangulation

from errors import MergeError, ParameterError
from geometry.models import Mesh
from geometry.shapes import BoundaryCurve
from reconstruction.merge import MergedImage

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES = 128
# profile step in element layers
PROFILE_STEP = 0.25
# median filter half-width along the boundary, in samples
DEFAULT_SMOOTHING = 2


@dataclass(frozen=True, eq=False)
class BorderEstimate:
    """
    table: one row per boundary sample (s, x, y, raw_depth, estimated_depth, true_depth,
           layer, error_layers); raw_depth is the single-profile estimate, estimated_depth
           its median along the boundary, NaN where no border shows
    layer: nominal element layer thickness
    """
    table: pd.DataFrame
    layer: float

    @property
    def resolved_fraction(self) -> float:
        return float(np.isfinite(self.table["estimated_depth"]).mean())

    def fraction_within(self, layers: float) -> float:
        err = self.table["error_layers"].to_numpy(dtype=float)
        return float(np.mean(np.nan_to_num(err, nan=np.inf) <= layers))


def profile_border(depths: np.ndarray, values: np.ndarray) -> float:
    """Depth where a profile rises past the midpoint of its range beyond its minimum; NaN if none."""
    finite = np.isfinite(values)
    if finite.sum() < 3:
        return float("nan")
    # stop at the first gap after the profile starts
    first = int(np.argmax(finite))
    gaps = np.nonzero(~finite[first:])[0]
    stop = first + (gaps[0] if len(gaps) else len(values) - first)
    t = depths[first:stop]
    v = values[first:stop]
    i_min = int(np.argmin(v))
    v_min = v[i_min]
    v_max = v[i_min:].max()
    if v_max - v_min <= 1e-12 * max(abs(v_max), 1.0):
        return float("nan")
    mid = 0.5 * (v_min + v_max)
    above = np.nonzero(v[i_min:] >= mid)[0]
    j = i_min + int(above[0])
    t0, t1, a, b = t[j - 1], t[j], v[j - 1], v[j]
    return float(t0 + (mid - a) * (t1 - t0) / (b - a))


def smooth_along_boundary(depths: np.ndarray, half_width: int) -> np.ndarray:
    """
    Circular median over 2·half_width + 1 neighbouring samples, ignoring NaN.
    A sample stays NaN unless most of its window is finite.
    """
    depths = np.asarray(depths, dtype=float)
    if half_width <= 0 or len(depths) == 0:
        return depths.copy()
    offsets = np.arange(-half_width, half_width + 1)
    windows = depths[(np.arange(len(depths))[:, None] + offsets) % len(depths)]
    enough = np.isfinite(windows).sum(axis=1) > half_width
    out = np.full(len(depths), np.nan)
    out[enough] = np.nanmedian(windows[enough], axis=1)
    return out


def local_layers(mesh: Mesh, finder, points: np.ndarray, layer: float) -> np.ndarray:
    """Larger of `layer` and the equilateral edge of equal area of the triangle holding each point."""
    tri = np.asarray(finder(points[:, 0], points[:, 1]))
    sizes = np.full(len(points), layer)
    found = tri >= 0
    sizes[found] = np.sqrt(4.0 * mesh.areas[tri[found]] / np.sqrt(3.0))
    return np.maximum(sizes, layer)


def estimate_border(
    merged: MergedImage,
    mesh: Mesh,
    curve: BoundaryCurve,
    fat_depth: float,
    layer: float,
    n_samples: int = DEFAULT_SAMPLES,
    max_depth: Optional[float] = None,
    smoothing: int = DEFAULT_SMOOTHING,
) -> BorderEstimate:
    """
    Args:
        merged: merged image on `mesh`
        mesh: reconstruction mesh
        curve: boundary curve the mesh was generated from
        fat_depth: true interface depth of the phantom
        layer: element layer thickness (the reconstruction mesh edge length)
        n_samples: boundary sample count
        max_depth: deepest profile point; defaults to four times fat_depth
        smoothing: median filter half-width in samples; 0 keeps the raw estimates

    Returns:
        BorderEstimate
    """
    if merged.mesh_id != mesh.mesh_id:
        raise MergeError("Merged image belongs to a different mesh")
    if not (layer > 0 and fat_depth > 0):
        raise ParameterError("Layer thickness and fat depth must be positive",
                             {"layer": layer, "fat_depth": fat_depth})
    max_depth = 4.0 * fat_depth if max_depth is None else float(max_depth)
    depths = np.arange(0.0, max_depth + 1e-12, PROFILE_STEP * layer)

    s = np.linspace(0.0, curve.perimeter, n_samples, endpoint=False)
    base = curve.points(s)
    inward = -curve.normals(s)
    # step off the boundary by half a step so the first point is inside
    depths = depths + 0.5 * PROFILE_STEP * layer
    pts = base[:, None, :] + depths[None, :, None] * inward[:, None, :]

    finder = Triangulation(mesh.nodes[:, 0], mesh.nodes[:, 1], mesh.triangles).get_trifinder()
    tri = np.asarray(finder(pts[..., 0].ravel(), pts[..., 1].ravel())).reshape(pts.shape[:2])
    values = np.full(tri.shape, np.nan)
    inside = tri >= 0
    values[inside] = merged.gamma[tri[inside]]

    raw = np.array([profile_border(depths, row) for row in values])
    estimated = smooth_along_boundary(raw, smoothing)
    layers = local_layers(mesh, finder, base + fat_depth * inward, layer)
    table = pd.DataFrame({
        "s": s,
        "x": base[:, 0],
        "y": base[:, 1],
        "raw_depth": raw,
        "estimated_depth": estimated,
        "true_depth": fat_depth,
        "layer": layers,
        "error_layers": np.abs(estimated - fat_depth) / layers,
    })
    result = BorderEstimate(table=table, layer=layer)
    logger.info(
        f"Border: {result.resolved_fraction:.0%} of {n_samples} samples resolved, "
        f"{result.fraction_within(1):.0%} within one layer"
    )
    return result
