"""
Portable graymap export of per-triangle values.

The image is a binary PGM (P5). Gray level 0 marks pixels outside the mesh or
without a value; levels 1..255 map linearly onto [vmin, vmax], and that scale
is written into a header comment.
"""
from pathlib import Path
from typing import Optional, Union

import numpy as np
from matplotlib.tri import Triangulation

from errors import ParameterError
from geometry.models import Mesh

DEFAULT_PIXELS = 256


def rasterize(mesh: Mesh, values: np.ndarray, pixels: int = DEFAULT_PIXELS) -> np.ndarray:
    """(rows, cols) array of triangle values on a grid over the mesh bounding box, NaN outside."""
    values = np.asarray(values, dtype=float)
    if values.shape != (mesh.n_triangles,):
        raise ParameterError("Raster values must be given per triangle")
    lo = mesh.nodes.min(axis=0)
    hi = mesh.nodes.max(axis=0)
    span = hi - lo
    cols = pixels
    rows = max(int(round(pixels * span[1] / span[0])), 1)
    x = lo[0] + (np.arange(cols) + 0.5) * span[0] / cols
    y = hi[1] - (np.arange(rows) + 0.5) * span[1] / rows
    gx, gy = np.meshgrid(x, y)
    finder = Triangulation(mesh.nodes[:, 0], mesh.nodes[:, 1], mesh.triangles).get_trifinder()
    tri = np.asarray(finder(gx.ravel(), gy.ravel())).reshape(rows, cols)
    grid = np.full((rows, cols), np.nan)
    inside = tri >= 0
    grid[inside] = values[tri[inside]]
    return grid


def write_pgm(mesh: Mesh, values: np.ndarray, path: Union[str, Path], pixels: int = DEFAULT_PIXELS,
              vmin: Optional[float] = None, vmax: Optional[float] = None) -> Path:
    grid = rasterize(mesh, values, pixels)
    finite = np.isfinite(grid)
    if vmin is None:
        vmin = float(np.min(grid[finite])) if finite.any() else 0.0
    if vmax is None:
        vmax = float(np.max(grid[finite])) if finite.any() else 1.0
    width = vmax - vmin if vmax > vmin else 1.0
    levels = np.zeros(grid.shape, dtype=np.uint8)
    scaled = 1.0 + 254.0 * (np.clip(grid[finite], vmin, vmax) - vmin) / width
    levels[finite] = np.round(scaled).astype(np.uint8)

    rows, cols = grid.shape
    header = (
        "P5\n"
        f"# scale: level = 1 + 254 * (value - {vmin:.9g}) / ({vmax:.9g} - {vmin:.9g}); level 0 = no data\n"
        f"{cols} {rows}\n255\n"
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(levels.tobytes())
    return path
