"""
Convergence of the complete electrode model to the point electrode model as
the electrode half-width h shrinks.

For every h a disk mesh is generated whose boundary nodes include that
layout's electrode centers and arc endpoints; the CEM and PEM (and gap model)
solutions with γ = 1 are computed on it and compared in the H¹ norm over
Ξ_R, the triangles with all vertices farther than R from both drive centers.

The gap between the two models outside a fixed Ξ_R shrinks like h², because a
symmetric electrode differs from a point source only at quadrupole order. With
the default "scaled" exclusion the radius follows the electrode,
R_h = R·sqrt(h / h_max), which puts the measured rate at first order. "fixed"
keeps R for every level.
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from errors import ParameterError, ResolutionError
from forward.solvers import ForwardSolver, worker_count
from geometry.electrodes import DEFAULT_CONTACT_IMPEDANCE, DEFAULT_CURRENT, equally_spaced_electrodes
from geometry.mesh_generation import generate_disk_mesh
from geometry.models import Mesh

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1

DEFAULT_RADIUS = 1.0
DEFAULT_EDGE = 0.00125
DEFAULT_H_VALUES = (0.04, 0.02, 0.01, 0.005, 0.0025)
DEFAULT_R = 0.4
DEFAULT_ELECTRODES = 16
DEFAULT_DRIVE = (1, 5)

SCALED = "scaled"
FIXED = "fixed"
EXCLUSIONS = (SCALED, FIXED)


@dataclass
class ConvergenceReport:
    h_values: List[float]
    errors: List[float]
    R: float
    drive: Tuple[int, int]
    gap_errors: List[float] = field(default_factory=list)
    n_triangles: List[int] = field(default_factory=list)
    edge: Optional[float] = None
    exclusion: str = FIXED
    r_values: List[float] = field(default_factory=list)

    @property
    def fitted_rate(self) -> Optional[float]:
        """Slope of log(error) against log(h); None with fewer than two levels."""
        return fit_rate(self.h_values, self.errors)

    @property
    def gap_rate(self) -> Optional[float]:
        return fit_rate(self.h_values, self.gap_errors) if self.gap_errors else None

    @property
    def local_rates(self) -> List[float]:
        h = np.asarray(self.h_values)
        e = np.asarray(self.errors)
        return list(np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:]))

    @property
    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.errors) < 0))

    def to_frame(self) -> pd.DataFrame:
        data = {"h": self.h_values, "error": self.errors}
        if self.r_values:
            data["R_h"] = self.r_values
        if self.gap_errors:
            data["gap_error"] = self.gap_errors
        if self.n_triangles:
            data["n_triangles"] = self.n_triangles
        return pd.DataFrame(data)

    def summary(self) -> Dict:
        rate = self.fitted_rate
        out = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "fitted_rate": rate,
            "gap_rate": self.gap_rate,
            "R": self.R,
            "drive": list(self.drive),
            "edge": self.edge,
            "exclusion": self.exclusion,
            "r_values": list(self.r_values),
            "strictly_decreasing": self.strictly_decreasing,
        }
        if rate is None:
            out["note"] = "rate undefined: fewer than two h values"
        return out


def fit_rate(h_values: Sequence[float], errors: Sequence[float]) -> Optional[float]:
    if len(h_values) < 2:
        return None
    slope, _ = np.polyfit(np.log(h_values), np.log(errors), 1)
    return float(slope)


def exclusion_elements(mesh: Mesh, centers: np.ndarray, R: float) -> np.ndarray:
    """Triangles whose three vertices are all farther than R from every point in `centers`."""
    keep = np.ones(mesh.n_triangles, dtype=bool)
    for c in np.atleast_2d(centers):
        far = np.linalg.norm(mesh.nodes - c, axis=1) > R
        keep &= far[mesh.triangles].all(axis=1)
    return np.nonzero(keep)[0]


def h1_norm(mesh: Mesh, values: np.ndarray, elements: np.ndarray) -> float:
    """Exact H¹ norm of a P1 field over the given triangles."""
    area = mesh.areas[elements]
    grads = mesh.element_gradients(values)[elements]
    semi = np.sum(area * np.sum(grads ** 2, axis=1))
    v = values[mesh.triangles[elements]]
    l2 = np.sum(area / 12.0 * (np.sum(v ** 2, axis=1) + np.sum(v, axis=1) ** 2))
    return float(np.sqrt(semi + l2))


def _check_h_values(h_values: Sequence[float], edge: float, R: float) -> None:
    h = np.asarray(h_values, dtype=float)
    if len(h) == 0:
        raise ResolutionError("No electrode half-widths given")
    if np.any(np.diff(h) >= 0):
        raise ResolutionError("Half-widths must be strictly decreasing", {"h_values": list(h)})
    if h.min() < 2.0 * edge:
        raise ResolutionError(
            "Smallest half-width must be at least twice the boundary edge length",
            {"h_min": float(h.min()), "edge": edge},
        )
    if 2.0 * h.max() >= R:
        raise ResolutionError("Exclusion radius R must exceed 2h", {"h_max": float(h.max()), "R": R})


def exclusion_radii(h_values: Sequence[float], R: float, exclusion: str = SCALED) -> List[float]:
    """Exclusion radius per level: R for "fixed", R·sqrt(h / h_max) for "scaled"."""
    if exclusion not in EXCLUSIONS:
        raise ParameterError(f"Unknown exclusion rule {exclusion!r}", {"choices": list(EXCLUSIONS)})
    h = np.asarray(h_values, dtype=float)
    if exclusion == FIXED:
        return [float(R)] * len(h)
    return [float(r) for r in R * np.sqrt(h / h.max())]


def _study_level(h: float, radius: float, edge: float, interior_edge: float, n_electrodes: int,
                 contact_impedance: float, current: float, drive: Tuple[int, int], R: float) -> Dict:
    electrodes = equally_spaced_electrodes(
        2.0 * np.pi * radius, n_electrodes, h, contact_impedance=contact_impedance, current=current
    )
    mesh = generate_disk_mesh(radius, edge, electrodes, interior_edge_len=interior_edge)
    solver = ForwardSolver(mesh, 1.0, electrodes)
    pem = solver.solve_pem(drive).boundary_mean_gauged(mesh)
    cem = solver.solve_cem(drive).boundary_mean_gauged(mesh)
    gap = solver.solve_gap(drive).boundary_mean_gauged(mesh)
    centers = mesh.nodes[solver.center_nodes[[drive[0] - 1, drive[1] - 1]]]
    elements = exclusion_elements(mesh, centers, R)
    error = h1_norm(mesh, cem - pem, elements)
    gap_error = h1_norm(mesh, gap - pem, elements)
    logger.info(f"h={h:g}, R={R:.4g}: CEM-PEM {error:.4e}, gap-PEM {gap_error:.4e} over {len(elements)} triangles")
    return {"h": h, "error": error, "gap_error": gap_error, "n_triangles": mesh.n_triangles}


def run_convergence_study(
    radius: float = DEFAULT_RADIUS,
    edge: float = DEFAULT_EDGE,
    h_values: Sequence[float] = DEFAULT_H_VALUES,
    R: float = DEFAULT_R,
    drive: Tuple[int, int] = DEFAULT_DRIVE,
    n_electrodes: int = DEFAULT_ELECTRODES,
    interior_edge: Optional[float] = None,
    contact_impedance: float = DEFAULT_CONTACT_IMPEDANCE,
    current: float = DEFAULT_CURRENT,
    exclusion: str = SCALED,
) -> ConvergenceReport:
    """
    CEM→PEM convergence on the homogeneous disk.

    Args:
        radius: disk radius
        edge: boundary edge length shared by every level
        h_values: strictly decreasing electrode half-widths
        R: exclusion radius around both drive centers at the largest h
        drive: (k⁺, k⁻)
        n_electrodes: electrodes on the disk
        interior_edge: interior edge length (defaults to 10 × edge, graded towards the boundary)
        exclusion: "scaled" (R·sqrt(h / h_max) per level) or "fixed"

    Returns:
        ConvergenceReport in the order of h_values
    """
    _check_h_values(h_values, edge, R)
    radii = exclusion_radii(h_values, R, exclusion)
    interior = interior_edge or 10.0 * edge
    args = (radius, edge, interior, n_electrodes, contact_impedance, current, tuple(drive))
    with ThreadPoolExecutor(max_workers=worker_count(len(h_values))) as pool:
        levels = list(pool.map(lambda hr: _study_level(float(hr[0]), *args, hr[1]), zip(h_values, radii)))
    report = ConvergenceReport(
        h_values=[lv["h"] for lv in levels],
        errors=[lv["error"] for lv in levels],
        gap_errors=[lv["gap_error"] for lv in levels],
        n_triangles=[lv["n_triangles"] for lv in levels],
        R=R,
        drive=tuple(drive),
        edge=edge,
        exclusion=exclusion,
        r_values=radii,
    )
    logger.info(f"Convergence study ({exclusion} exclusion): fitted rate {report.fitted_rate}")
    return report


def write_convergence_report(report: ConvergenceReport, out_dir: Union[str, Path]) -> Tuple[Path, Path]:
    """Write convergence.csv (h, error, ...) and convergence.json (fitted rate, R)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "convergence.csv"
    json_path = out / "convergence.json"
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# schema_version: {REPORT_SCHEMA_VERSION}\n")
        report.to_frame().to_csv(fh, index=False, float_format="%.12g", lineterminator="\n")
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path
