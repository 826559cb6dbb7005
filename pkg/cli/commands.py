"""
The four commands behind main.py: simulate, reconstruct, convergence and
diagnostics. Each takes a validated RunConfig, writes its files under
config.out_dir and returns a summary dict.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from analytic.convergence import (
    DEFAULT_DRIVE, DEFAULT_EDGE, DEFAULT_ELECTRODES, DEFAULT_H_VALUES, DEFAULT_R, DEFAULT_RADIUS, SCALED,
    run_convergence_study, write_convergence_report,
)
from cli.figures import plot_conductivity, plot_correlation
from cli.raster import write_pgm
from cli.run_config import RunConfig
from errors import DataMismatchError, MissingArtifactError
from forward.solvers import ForwardSolver, worker_count
from geometry.electrodes import DEFAULT_CONTACT_IMPEDANCE
from geometry.mesh_generation import generate_mesh
from geometry.mesh_io import write_mesh
from geometry.models import ElectrodeConfig, Mesh
from geometry.phantoms import build_layered_phantom
from geometry.shapes import BoundaryCurve
from measurements.frame_io import frame_stem, read_frame, write_csv_table, write_frame, write_json
from measurements.frames import MeasurementFrame, simulate_frames
from measurements.noise import add_noise, frame_noise_sigma
from measurements.patterns import enumerate_patterns
from reconstruction.border import estimate_border
from reconstruction.diagnostics import (
    HIGH_CORRELATION, adjacent_pair_correlations, column_correlation, correlation_table, decay_diagnostic,
    high_correlation_components, reference_elements,
)
from reconstruction.image_io import load_system, save_system, write_image, write_merged
from reconstruction.merge import merge_images
from reconstruction.recon_domain import ReconDomain, extract_recon_domain
from reconstruction.sensitivity import assemble_sensitivity, neumann_v_fields
from reconstruction.tikhonov import solve_tikhonov

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ReferenceGeometry:
    """Known geometry: boundary curve, electrodes and the γ ≡ 1 mesh."""
    curve: BoundaryCurve
    electrodes: ElectrodeConfig
    mesh: Mesh


def build_reference_geometry(config: RunConfig) -> ReferenceGeometry:
    electrodes = config.electrodes()
    curve = BoundaryCurve(config.boundary)
    mesh = generate_mesh(curve, electrodes, config.v_edge, config.v_interior)
    return ReferenceGeometry(curve=curve, electrodes=electrodes, mesh=mesh)


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _noise_seed(seed: int, n: int) -> int:
    """Per-center seed so centers draw independent but reproducible noise."""
    return int(seed) + int(n)


def cmd_simulate(config: RunConfig) -> Dict:
    """Simulate one frame per center electrode and write frame CSV + JSON pairs."""
    config.validate()
    out = _out_dir(config)
    reference = build_reference_geometry(config)
    mesh_u, sigma = build_layered_phantom(
        config.boundary,
        config.fat_depth,
        config.conductivities,
        electrodes=reference.electrodes,
        target_edge_len=config.u_edge,
        interior_edge_len=config.u_interior,
        muscle_depth=config.muscle_depth,
        inclusions=config.inclusions,
    )
    write_mesh(mesh_u, out / "mesh_u.json")
    write_mesh(reference.mesh, out / "mesh_v.json")

    centers = config.center_list()
    pattern_sets = [enumerate_patterns(n, config.electrode_count) for n in centers]
    frames = simulate_frames(mesh_u, sigma, reference.mesh, reference.electrodes, pattern_sets,
                             v_model=config.v_model)
    noisy = config.snr_db is not None and not np.isposinf(config.snr_db)
    if noisy:
        frames = [add_noise(f, config.snr_db, _noise_seed(config.seed, f.n)) for f in frames]

    written = []
    for frame in frames:
        csv_path, _ = write_frame(frame, out)
        written.append(str(csv_path))
    logger.info(f"Simulated {len(frames)} frame(s) into {out}")
    return {"frames": written, "mesh_u_id": mesh_u.mesh_id, "mesh_v_id": reference.mesh.mesh_id}


def _load_frames(config: RunConfig, frame_paths: Optional[Sequence[Union[str, Path]]]) -> List[MeasurementFrame]:
    if not frame_paths:
        out = Path(config.out_dir)
        frame_paths = [out / f"{frame_stem(n)}.csv" for n in config.center_list()]
    frames = []
    for path in frame_paths:
        if not Path(path).exists():
            raise MissingArtifactError(f"Frame not found: {path}", {"path": str(path)})
        frames.append(read_frame(path))
    return frames


def _check_frame(frame: MeasurementFrame, config: RunConfig, mesh: Mesh) -> None:
    prov = frame.provenance
    count = prov.get("n_electrodes")
    if count is not None and int(count) != config.electrode_count:
        raise DataMismatchError(
            "Frame was simulated with a different electrode count",
            {"n": frame.n, "frame": count, "config": config.electrode_count},
        )
    mesh_v_id = prov.get("mesh_v_id")
    if mesh_v_id is not None and mesh_v_id != mesh.mesh_id:
        raise DataMismatchError(
            "Frame reference voltages come from a different mesh",
            {"n": frame.n, "frame": mesh_v_id, "mesh": mesh.mesh_id},
        )


def cmd_reconstruct(config: RunConfig, frame_paths: Optional[Sequence[Union[str, Path]]] = None) -> Dict:
    """
    Reconstruct one image per frame, merge them and write image CSVs, the
    merged CSV, system artifacts and reconstruct_summary.json.
    """
    config.validate()
    out = _out_dir(config)
    reference = build_reference_geometry(config)
    mesh = reference.mesh
    frames = sorted(_load_frames(config, frame_paths), key=lambda f: f.n)
    for frame in frames:
        _check_frame(frame, config, mesh)

    pattern_sets = {f.n: enumerate_patterns(f.n, config.electrode_count) for f in frames}
    pairs = [p for ps in pattern_sets.values() for p in ps.drive_pairs() + ps.measure_pairs()]
    v_solver = ForwardSolver(mesh, 1.0, reference.electrodes)
    v_fields = neumann_v_fields(v_solver, pairs)

    def reconstruct(frame: MeasurementFrame):
        domain = extract_recon_domain(mesh, reference.electrodes, frame.n, config.depth)
        system = assemble_sensitivity(domain, v_fields, pattern_sets[frame.n], frame, lam=config.lam,
                                      noise_sigma=frame_noise_sigma(frame))
        return system, solve_tikhonov(system, config.alpha)

    with ThreadPoolExecutor(max_workers=worker_count(len(frames))) as pool:
        results = list(pool.map(reconstruct, frames))

    per_center = []
    for system, image in results:
        save_system(system, out)
        write_image(image, out)
        per_center.append({
            "n": image.n,
            "rows": int(system.S.shape[0]),
            "elements": int(system.S.shape[1]),
            "dropped": system.dropped,
            "gamma0": image.gamma0,
            "alpha": image.alpha,
            "noise_sigma": system.noise_sigma,
            "normal_residual": image.normal_residual,
        })
    merged = merge_images([image for _, image in results], mesh)
    write_merged(merged, out)
    summary = {
        "schema_version": 1,
        "mesh_v_id": mesh.mesh_id,
        "centers": per_center,
        "covered_elements": int(merged.covered.sum()),
    }

    if config.fat_depth > 0:
        border = estimate_border(merged, mesh, reference.curve, config.fat_depth, layer=config.v_edge)
        write_csv_table(border.table, out / "border.csv")
        summary["border"] = {
            "fat_depth": config.fat_depth,
            "layer": config.v_edge,
            "resolved_fraction": border.resolved_fraction,
            "within_1_layer": border.fraction_within(1),
            "within_2_layers": border.fraction_within(2),
        }
    if config.raster:
        write_pgm(mesh, merged.gamma, out / "merged.pgm")
    if config.figures:
        plot_conductivity(mesh, merged.gamma, out / "merged.png")
    write_json(summary, out / "reconstruct_summary.json")
    logger.info(f"Reconstructed {len(results)} image(s) into {out}")
    return summary


def cmd_convergence(config: RunConfig) -> Dict:
    """CEM→PEM convergence study on the disk; writes convergence.csv and convergence.json."""
    conv = config.convergence
    report = run_convergence_study(
        radius=float(conv.get("radius", DEFAULT_RADIUS)),
        edge=float(conv.get("edge", DEFAULT_EDGE)),
        h_values=[float(h) for h in conv.get("h_values", DEFAULT_H_VALUES)],
        R=float(conv.get("R", DEFAULT_R)),
        drive=tuple(conv.get("pattern", DEFAULT_DRIVE)),
        n_electrodes=int(conv.get("electrodes", DEFAULT_ELECTRODES)),
        interior_edge=conv.get("interior_edge"),
        contact_impedance=float(conv.get("contact_impedance", DEFAULT_CONTACT_IMPEDANCE)),
        current=config.current,
        exclusion=str(conv.get("exclusion", SCALED)),
    )
    write_convergence_report(report, _out_dir(config))
    return report.summary()


def cmd_diagnostics(config: RunConfig, system_path: Union[str, Path]) -> Dict:
    """
    Correlation maps for three reference elements (near boundary, mid depth,
    deep) and the decay profile of the reference pattern, from a saved system.
    """
    system = load_system(system_path)
    config.validate()
    out = _out_dir(config)
    reference = build_reference_geometry(config)
    mesh = reference.mesh
    if system.mesh_id != mesh.mesh_id:
        raise DataMismatchError("System was assembled on a different mesh",
                                {"system": system.mesh_id, "mesh": mesh.mesh_id})
    domain = ReconDomain(mesh=mesh, element_ids=system.element_ids, n=system.n,
                         depth=float(config.depth or np.nan))
    refs = reference_elements(domain, reference.electrodes)
    table = correlation_table(system, refs.values())
    write_csv_table(table, out / f"correlation_n{system.n}.csv")

    patterns = enumerate_patterns(system.n, config.electrode_count)
    ref = patterns.reference
    solver = ForwardSolver(mesh, 1.0, reference.electrodes)
    fields = neumann_v_fields(solver, [ref.drive, ref.measure])
    cluster = mesh.nodes[solver.center_nodes[[k - 1 for k in ref.as_tuple()]]]
    decay = decay_diagnostic(fields[ref.drive], fields[ref.measure], mesh, cluster)
    write_csv_table(decay.profile, out / f"decay_n{system.n}.csv")
    pairs = adjacent_pair_correlations(system, mesh, 0.5 * config.v_edge)

    if config.figures:
        for role, element in refs.items():
            plot_correlation(mesh, system.element_ids, column_correlation(system, element), element,
                             out / f"correlation_n{system.n}_{role}.png")
    summary = {
        "schema_version": 1,
        "n": system.n,
        "reference_elements": refs,
        "high_correlation_counts": {
            role: int(((table["i"] == element) & (table["c"] > HIGH_CORRELATION)).sum())
            for role, element in refs.items()
        },
        "high_correlation_components": {
            role: high_correlation_components(system, mesh, element) for role, element in refs.items()
        },
        "adjacent_pairs": len(pairs),
        "adjacent_high_fraction": float((pairs["c"] > HIGH_CORRELATION).mean()) if len(pairs) else None,
    }
    write_json(summary, out / f"diagnostics_n{system.n}.json")
    return summary
