"""
PNG figures of merged images and correlation maps.
"""
from pathlib import Path
from typing import Optional, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.collections import PolyCollection

from geometry.models import Mesh


def _element_plot(mesh: Mesh, values: np.ndarray, path: Union[str, Path], title: str,
                  label: str, cmap: str, vmin: Optional[float] = None, vmax: Optional[float] = None,
                  marker: Optional[int] = None) -> Path:
    values = np.asarray(values, dtype=float)
    shown = np.isfinite(values)
    fig, ax = plt.subplots(figsize=(8, 6))
    background = PolyCollection(mesh.nodes[mesh.triangles[~shown]], facecolor="0.9", edgecolor="none")
    ax.add_collection(background)
    pc = PolyCollection(mesh.nodes[mesh.triangles[shown]], array=values[shown], cmap=cmap, edgecolor="none")
    pc.set_clim(vmin, vmax)
    ax.add_collection(pc)
    if marker is not None:
        cx, cy = mesh.centroids[marker]
        ax.plot(cx, cy, "k+", markersize=10)
    ax.plot(*mesh.nodes[np.append(mesh.boundary_nodes, mesh.boundary_nodes[0])].T, "k-", linewidth=0.8)
    ax.autoscale()
    ax.set_aspect("equal")
    fig.colorbar(pc, ax=ax, label=label)
    ax.set_title(title)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_conductivity(mesh: Mesh, gamma: np.ndarray, path: Union[str, Path],
                      title: str = "Merged conductivity") -> Path:
    return _element_plot(mesh, gamma, path, title, "γ (S/m)", "viridis")


def plot_correlation(mesh: Mesh, element_ids: np.ndarray, correlation: np.ndarray, reference: int,
                     path: Union[str, Path]) -> Path:
    values = np.full(mesh.n_triangles, np.nan)
    values[element_ids] = correlation
    return _element_plot(mesh, values, path, f"Column correlation with element {reference}",
                         "c", "coolwarm", vmin=-1.0, vmax=1.0, marker=reference)
