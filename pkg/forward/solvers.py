"""
Forward solvers for the complete electrode model (CEM), the point electrode
model (PEM) and the uniform-current gap model.

A ForwardSolver owns the assembled and factorised systems of one
(mesh, conductivity, electrodes) triple. Factorisations are built lazily
under a lock and are read-only afterwards, so many drives can be solved
concurrently against one context.
"""
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import minres, splu

from errors import ConvergenceError, ParameterError, SolverError
from forward.fem_assembly import (
    assemble_cem_system,
    assemble_electrode_blocks,
    assemble_neumann_system,
    assemble_stiffness,
)
from forward.models import CEM, ELECTRODE_MODELS, GAP, PEM, ConductivityField, PotentialField
from geometry.models import ElectrodeConfig, Mesh

logger = logging.getLogger(__name__)

DIRECT = "direct"
MINRES = "minres"

# Relative residual every solve must reach
RESIDUAL_TOLERANCE = 1e-10


def thread_count(raw: Optional[str]) -> int:
    """Worker threads from an EIT_THREADS value; unset, zero or garbage means one per CPU."""
    default = os.cpu_count() or 1
    if raw is None or not raw.strip():
        return default
    try:
        value = int(raw)
    except ValueError:
        logger.warning(f"Ignoring EIT_THREADS={raw!r}: not an integer")
        return default
    if value <= 0:
        return default
    return value


EIT_THREADS = thread_count(os.environ.get("EIT_THREADS"))

Drive = Tuple[int, int]


def worker_count(n_tasks: int) -> int:
    return max(1, min(EIT_THREADS, n_tasks))


def _as_conductivity(mesh: Mesh, sigma) -> ConductivityField:
    if isinstance(sigma, ConductivityField):
        values = sigma.values
    else:
        values = np.asarray(sigma, dtype=float)
        if values.ndim == 0:
            values = np.full(mesh.n_triangles, float(values))
    if values.shape != (mesh.n_triangles,):
        raise ParameterError(
            "Conductivity must have one value per triangle",
            {"expected": mesh.n_triangles, "got": int(values.size)},
        )
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise SolverError("Non-positive or non-finite conductivity makes the system singular")
    return sigma if isinstance(sigma, ConductivityField) else ConductivityField(values)


class ForwardSolver:
    """
    Solve context for one mesh, conductivity and electrode layout.

    Args:
        mesh: conforming mesh whose boundary nodes carry arc positions
        sigma: ConductivityField, per-triangle array or scalar
        electrodes: electrode layout on the same boundary
        method: "direct" (sparse LU) or "minres" (checked to the residual tolerance)
    """

    def __init__(self, mesh: Mesh, sigma: Union[ConductivityField, np.ndarray, float],
                 electrodes: ElectrodeConfig, method: str = DIRECT):
        if method not in (DIRECT, MINRES):
            raise ParameterError(f"Unknown linear solver method: {method}")
        self.mesh = mesh
        self.sigma = _as_conductivity(mesh, sigma)
        self.electrodes = electrodes
        self.method = method
        self.stiffness = assemble_stiffness(mesh, self.sigma.values)
        self.blocks = assemble_electrode_blocks(mesh, electrodes)
        self._systems: Dict[str, sp.csc_matrix] = {}
        self._factors: Dict[str, object] = {}
        self._lock = threading.Lock()

    @property
    def current(self) -> float:
        return self.electrodes.drive_current

    @property
    def center_nodes(self) -> np.ndarray:
        return self.blocks.center_nodes

    def _system(self, kind: str) -> sp.csc_matrix:
        with self._lock:
            if kind not in self._systems:
                if kind == CEM:
                    self._systems[kind] = assemble_cem_system(
                        self.stiffness, self.blocks, self.electrodes.contact_impedance
                    )
                else:
                    self._systems[kind] = assemble_neumann_system(self.stiffness, self.mesh.boundary_weights)
                if self.method == DIRECT:
                    try:
                        self._factors[kind] = splu(self._systems[kind])
                    except RuntimeError as exc:
                        raise SolverError(
                            f"Singular {kind} system: {exc}",
                            {"mesh_id": self.mesh.mesh_id},
                        ) from exc
                    logger.debug(f"Factorised {kind} system of size {self._systems[kind].shape[0]}")
            return self._systems[kind]

    def _solve(self, kind: str, rhs: np.ndarray) -> Tuple[np.ndarray, float]:
        matrix = self._system(kind)
        rhs_norm = np.linalg.norm(rhs) or 1.0
        if self.method == DIRECT:
            lu = self._factors[kind]
            x = lu.solve(rhs)
            r = rhs - matrix @ x
            if np.linalg.norm(r) > RESIDUAL_TOLERANCE * rhs_norm:
                x = x + lu.solve(r)
        else:
            x, info = minres(matrix, rhs, rtol=1e-13, maxiter=20 * matrix.shape[0])
            if info < 0:
                raise SolverError(f"minres failed on the {kind} system", {"info": info})
        if not np.all(np.isfinite(x)):
            raise SolverError(f"Singular {kind} system (non-finite solution)", {"mesh_id": self.mesh.mesh_id})
        residual = float(np.linalg.norm(matrix @ x - rhs) / rhs_norm)
        if residual > RESIDUAL_TOLERANCE and self.method == DIRECT:
            logger.warning(f"{kind} direct solve residual {residual:.2e} above {RESIDUAL_TOLERANCE:.0e}")
        elif residual > RESIDUAL_TOLERANCE:
            raise ConvergenceError(
                f"{kind} solve did not reach the residual tolerance",
                {"residual": residual, "tolerance": RESIDUAL_TOLERANCE},
            )
        return x, residual

    def _check_drive(self, drive: Drive) -> Tuple[int, int]:
        k_plus, k_minus = drive
        count = self.electrodes.count
        for k in drive:
            if not 1 <= k <= count:
                raise ParameterError(f"Electrode index {k} outside 1..{count}")
        if k_plus == k_minus:
            raise ParameterError("Drive electrodes must differ", {"drive": drive})
        return k_plus - 1, k_minus - 1

    def solve_cem(self, drive: Drive) -> PotentialField:
        """Complete electrode model with +I on k_plus and -I on k_minus."""
        kp, km = self._check_drive(drive)
        n = self.mesh.n_nodes
        n_el = self.electrodes.count
        rhs = np.zeros(n + n_el + 1)
        rhs[n + kp] = self.current
        rhs[n + km] = -self.current
        try:
            x, residual = self._solve(CEM, rhs)
        except SolverError as exc:
            raise exc.with_context(drive=drive, model=CEM)
        electrode_potentials = x[n:n + n_el]
        return PotentialField(
            nodal_values=x[:n],
            electrode_values=electrode_potentials,
            drive=tuple(drive),
            model=CEM,
            current=self.current,
            mesh_id=self.mesh.mesh_id,
            electrode_potentials=electrode_potentials,
            residual=residual,
        )

    def _solve_neumann(self, load: np.ndarray, drive: Drive, model: str) -> PotentialField:
        rhs = np.append(load, 0.0)
        try:
            x, residual = self._solve(PEM, rhs)
        except SolverError as exc:
            raise exc.with_context(drive=drive, model=model)
        u = x[:-1]
        return PotentialField(
            nodal_values=u,
            electrode_values=u[self.center_nodes],
            drive=tuple(drive),
            model=model,
            current=self.current,
            mesh_id=self.mesh.mesh_id,
            residual=residual,
        )

    def solve_pem(self, drive: Drive) -> PotentialField:
        """Point electrode model: point loads ±I at the two center nodes."""
        kp, km = self._check_drive(drive)
        load = np.zeros(self.mesh.n_nodes)
        load[self.center_nodes[kp]] += self.current
        load[self.center_nodes[km]] -= self.current
        return self._solve_neumann(load, drive, PEM)

    def solve_gap(self, drive: Drive) -> PotentialField:
        """Uniform current density I/|E| on the two drive arcs, no contact layer."""
        kp, km = self._check_drive(drive)
        loads = self.blocks.loads
        lengths = self.blocks.lengths
        load = self.current * (loads[:, kp].toarray().ravel() / lengths[kp]
                               - loads[:, km].toarray().ravel() / lengths[km])
        return self._solve_neumann(load, drive, GAP)

    def neumann_field(self, k: int) -> np.ndarray:
        """
        Discrete Neumann function N(·, p_k) for unit conductivity scaling of this
        context: unit point source at the center of electrode k balanced by a
        uniform boundary sink, boundary-mean gauge.
        """
        c = self.mesh.boundary_weights
        load = -c / c.sum()
        load[self.center_nodes[k - 1]] += 1.0
        return self._solve_neumann(load, (k, k), PEM).nodal_values

    def solve(self, drive: Drive, model: str = CEM) -> PotentialField:
        if model == CEM:
            return self.solve_cem(drive)
        if model == PEM:
            return self.solve_pem(drive)
        if model == GAP:
            return self.solve_gap(drive)
        raise ParameterError(f"Unknown electrode model: {model}", {"models": ELECTRODE_MODELS})

    def solve_many(self, drives: Iterable[Drive], model: str = CEM) -> Dict[Drive, PotentialField]:
        """Solve several drives concurrently; the result is keyed by drive."""
        drives = list(dict.fromkeys(tuple(d) for d in drives))
        if drives:
            self._system(CEM if model == CEM else PEM)
        with ThreadPoolExecutor(max_workers=worker_count(len(drives))) as pool:
            fields = list(pool.map(lambda d: self.solve(d, model), drives))
        logger.debug(f"Solved {len(drives)} {model} drives on mesh {self.mesh.mesh_id}")
        return dict(zip(drives, fields))

    def electrode_currents(self, field: PotentialField) -> np.ndarray:
        """CEM currents (1/z_l)∫_{E_l}(U_l - u) ds leaving each electrode into the body."""
        if field.electrode_potentials is None:
            raise ParameterError("Electrode currents are defined for CEM solutions only")
        z = self.electrodes.contact_impedance
        trace = self.blocks.loads.T @ field.nodal_values
        return (self.blocks.lengths * field.electrode_potentials - trace) / z


def _context(mesh: Mesh, sigma, electrodes: ElectrodeConfig,
             solver: Optional[ForwardSolver]) -> ForwardSolver:
    return solver if solver is not None else ForwardSolver(mesh, sigma, electrodes)


def solve_cem(mesh: Mesh, sigma, electrodes: ElectrodeConfig, drive: Drive,
              solver: Optional[ForwardSolver] = None) -> PotentialField:
    return _context(mesh, sigma, electrodes, solver).solve_cem(drive)


def solve_pem(mesh: Mesh, sigma, electrodes: ElectrodeConfig, drive: Drive,
              solver: Optional[ForwardSolver] = None) -> PotentialField:
    return _context(mesh, sigma, electrodes, solver).solve_pem(drive)


def solve_gap(mesh: Mesh, sigma, electrodes: ElectrodeConfig, drive: Drive,
              solver: Optional[ForwardSolver] = None) -> PotentialField:
    return _context(mesh, sigma, electrodes, solver).solve_gap(drive)


def solve_models(mesh: Mesh, sigma, electrodes: ElectrodeConfig, drive: Drive,
                 models: List[str] = (CEM, PEM)) -> Dict[str, PotentialField]:
    """One context, several electrode models for the same drive."""
    solver = ForwardSolver(mesh, sigma, electrodes)
    return {model: solver.solve(drive, model) for model in models}
