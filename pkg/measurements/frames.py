"""
Measurement frames.

One frame holds the records of one pattern set, reference first:

    U  transadmittance voltage (CEM by default) with the true conductivity
    V  the same pattern simulated with γ ≡ 1 on the known geometry
    G  = V / U, geometry-free data
    B  = 1/G - 1/G_ref = U/V - U_ref/V_ref, reference-subtracted data

Degenerate records (U = 0, V ≈ 0 or non-finite) keep their row with NaN
values and valid = False.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import DegenerateError, ParameterError
from forward.measurements import measure
from forward.models import CEM, PEM, Pattern, PotentialField
from forward.solvers import ForwardSolver
from geometry.models import ElectrodeConfig, Mesh
from measurements.patterns import PatternSet

logger = logging.getLogger(__name__)

FRAME_COLUMNS = ["n", "k_plus", "k_minus", "l_plus", "l_minus", "U", "V", "G", "B", "valid"]

# |V| below this is treated as a degenerate record
DEGENERATE_V = 1e-14


def geometry_free_data(U: np.ndarray, V: np.ndarray, reference_index: int = 0) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    G, B and the validity mask from voltage arrays.

    Returns:
        (G, B, valid); invalid entries are NaN
    """
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    ok = np.isfinite(U) & np.isfinite(V) & (U != 0) & (np.abs(V) > DEGENERATE_V)
    G = np.full(U.shape, np.nan)
    ratio = np.full(U.shape, np.nan)
    G[ok] = V[ok] / U[ok]
    ratio[ok] = U[ok] / V[ok]
    if ok[reference_index]:
        B = ratio - ratio[reference_index]
        valid = ok
    else:
        B = np.full(U.shape, np.nan)
        valid = np.zeros(U.shape, dtype=bool)
    return G, B, valid


@dataclass(frozen=True, eq=False)
class MeasurementFrame:
    """
    table:       DataFrame with FRAME_COLUMNS, row 0 is the reference pattern
    provenance:  mesh ids, sigma id, electrode models, noise settings
    combinatorial_count / filtered_count: pattern counts before and after
                 the drive/measure filter
    """
    table: pd.DataFrame
    provenance: Dict = field(default_factory=dict)
    combinatorial_count: int = 0
    filtered_count: int = 0

    @property
    def n(self) -> int:
        return int(self.table["n"].iloc[0])

    @property
    def U(self) -> np.ndarray:
        return self.table["U"].to_numpy(dtype=float)

    @property
    def V(self) -> np.ndarray:
        return self.table["V"].to_numpy(dtype=float)

    @property
    def G(self) -> np.ndarray:
        return self.table["G"].to_numpy(dtype=float)

    @property
    def B(self) -> np.ndarray:
        return self.table["B"].to_numpy(dtype=float)

    @property
    def valid(self) -> np.ndarray:
        return self.table["valid"].to_numpy(dtype=bool)

    @property
    def reference(self) -> pd.Series:
        return self.table.iloc[0]

    def patterns(self) -> List[Pattern]:
        cols = self.table[["k_plus", "k_minus", "l_plus", "l_minus"]].to_numpy(dtype=int)
        return [Pattern(*map(int, row)) for row in cols]

    def with_voltages(self, U: np.ndarray, **provenance) -> "MeasurementFrame":
        """Copy with new U values; G and B are recomputed, V is kept and invalid records stay invalid."""
        table = self.table.copy()
        G, B, valid = geometry_free_data(U, table["V"].to_numpy(dtype=float))
        valid &= self.valid
        G[~valid] = np.nan
        B[~valid] = np.nan
        table["U"] = np.asarray(U, dtype=float)
        table["G"] = G
        table["B"] = B
        table["valid"] = valid
        prov = dict(self.provenance)
        prov.update(provenance)
        return replace(self, table=table, provenance=prov)


def build_frame(patterns: PatternSet, U: Sequence[float], V: Sequence[float],
                provenance: Optional[Dict] = None) -> MeasurementFrame:
    """Assemble a frame from voltages aligned with patterns.all_patterns."""
    rows = patterns.all_patterns
    if len(U) != len(rows) or len(V) != len(rows):
        raise ParameterError("Voltages must align with the reference plus pattern list",
                             {"patterns": len(rows), "U": len(U), "V": len(V)})
    G, B, valid = geometry_free_data(U, V)
    table = pd.DataFrame({
        "n": patterns.n,
        "k_plus": [p.k_plus for p in rows],
        "k_minus": [p.k_minus for p in rows],
        "l_plus": [p.l_plus for p in rows],
        "l_minus": [p.l_minus for p in rows],
        "U": np.asarray(U, dtype=float),
        "V": np.asarray(V, dtype=float),
        "G": G,
        "B": B,
        "valid": valid,
    }, columns=FRAME_COLUMNS)
    dropped = int((~valid).sum())
    if dropped:
        logger.warning(f"Frame n={patterns.n}: {dropped} degenerate record(s) marked invalid")
    return MeasurementFrame(
        table=table,
        provenance=dict(provenance or {}),
        combinatorial_count=patterns.combinatorial_count,
        filtered_count=patterns.filtered_count,
    )


def _pattern_voltages(fields: Dict[Tuple[int, int], PotentialField], patterns: PatternSet) -> np.ndarray:
    return np.array([measure(fields[p.drive], *p.measure) for p in patterns.all_patterns])


def simulate_frames(
    mesh_U: Mesh,
    sigma,
    mesh_V: Mesh,
    electrodes: ElectrodeConfig,
    pattern_sets: Sequence[PatternSet],
    v_model: str = PEM,
    u_model: str = CEM,
    u_solver: Optional[ForwardSolver] = None,
    v_solver: Optional[ForwardSolver] = None,
) -> List[MeasurementFrame]:
    """
    Simulate U on mesh_U with `sigma` and V on mesh_V with γ ≡ 1 for several
    pattern sets.

    Every distinct drive pair over all sets is solved once per mesh and
    reused across measure pairs and sets. Pass prebuilt solvers to share
    factorisations with other callers.

    Args:
        mesh_U: mesh for the data voltages
        sigma: per-triangle conductivity on mesh_U
        mesh_V: mesh for the reference voltages (may differ from mesh_U)
        electrodes: electrode layout shared by both meshes
        pattern_sets: pattern sets (reference included in each)
        v_model: "pem" (default) or "cem" for V
        u_model: "cem" (default), "pem" or "gap" for U

    Returns:
        one MeasurementFrame per pattern set, in order
    """
    for patterns in pattern_sets:
        if patterns.n_electrodes != electrodes.count:
            raise ParameterError("Pattern set and electrode layout disagree on the electrode count")
    u_solver = u_solver or ForwardSolver(mesh_U, sigma, electrodes)
    v_solver = v_solver or ForwardSolver(mesh_V, np.ones(mesh_V.n_triangles), electrodes)
    drives = list(dict.fromkeys(d for patterns in pattern_sets for d in patterns.drive_pairs()))
    u_fields = u_solver.solve_many(drives, u_model)
    v_fields = v_solver.solve_many(drives, v_model)
    provenance = {
        "mesh_u_id": mesh_U.mesh_id,
        "mesh_v_id": mesh_V.mesh_id,
        "sigma_id": u_solver.sigma.sigma_id,
        "u_model": u_model,
        "v_model": v_model,
        "n_electrodes": electrodes.count,
        "current": electrodes.drive_current,
        "noise": None,
    }
    return [
        build_frame(patterns, _pattern_voltages(u_fields, patterns), _pattern_voltages(v_fields, patterns), provenance)
        for patterns in pattern_sets
    ]


def simulate_frame(
    mesh_U: Mesh,
    sigma,
    mesh_V: Mesh,
    electrodes: ElectrodeConfig,
    patterns: PatternSet,
    v_model: str = PEM,
    u_model: str = CEM,
    u_solver: Optional[ForwardSolver] = None,
    v_solver: Optional[ForwardSolver] = None,
) -> MeasurementFrame:
    """Frame of one pattern set; see simulate_frames."""
    return simulate_frames(mesh_U, sigma, mesh_V, electrodes, [patterns], v_model, u_model,
                           u_solver, v_solver)[0]


def alpha_ratio(patterns: PatternSet, V: Sequence[float]) -> np.ndarray:
    """
    α = V / V_ref for every record aligned with patterns.all_patterns.

    Raises:
        DegenerateError: the reference voltage is zero
    """
    V = np.asarray(V, dtype=float)
    if len(V) != len(patterns.all_patterns):
        raise ParameterError("V must align with the reference plus pattern list")
    if abs(V[0]) <= DEGENERATE_V:
        raise DegenerateError("Reference voltage is zero", {"n": patterns.n})
    return V / V[0]
