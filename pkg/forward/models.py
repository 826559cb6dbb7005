"""
Forward-problem records: conductivity, potentials and inject-measure patterns.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Optional, Tuple

import numpy as np

from errors import ParameterError, PatternError
from geometry.models import Mesh

CEM = "cem"
PEM = "pem"
GAP = "gap"
ELECTRODE_MODELS = (CEM, PEM, GAP)


@dataclass(frozen=True, eq=False)
class ConductivityField:
    """Per-triangle real conductivity in S/m."""
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if not np.all(np.isfinite(values)):
            raise ParameterError("Conductivity must be finite")
        if np.any(values <= 0):
            raise ParameterError("Conductivity must be strictly positive", {"min": float(values.min())})

    @classmethod
    def homogeneous(cls, mesh: Mesh, value: float = 1.0) -> "ConductivityField":
        return cls(np.full(mesh.n_triangles, float(value)))

    @classmethod
    def from_tags(cls, mesh: Mesh, table: Dict[str, float]) -> "ConductivityField":
        return cls(np.array([table[str(t)] for t in mesh.region_tags], dtype=float))

    def scaled(self, factor: float) -> "ConductivityField":
        return ConductivityField(self.values * factor)

    @property
    def is_homogeneous(self) -> bool:
        return bool(np.all(self.values == self.values[0]))

    @cached_property
    def sigma_id(self) -> str:
        return hashlib.sha1(np.ascontiguousarray(self.values).tobytes()).hexdigest()[:16]


@dataclass(frozen=True)
class Pattern:
    """
    Inject through (k_plus, k_minus), measure across (l_plus, l_minus).
    Indices are 1-based electrode numbers.
    """
    k_plus: int
    k_minus: int
    l_plus: int
    l_minus: int

    def __post_init__(self):
        if self.k_plus == self.k_minus:
            raise PatternError("Drive electrodes must differ", {"pattern": self.as_tuple()})
        if self.l_plus == self.l_minus:
            raise PatternError("Measure electrodes must differ", {"pattern": self.as_tuple()})
        if {self.l_plus, self.l_minus} & {self.k_plus, self.k_minus}:
            raise PatternError(
                "Measure electrodes must not carry drive current",
                {"pattern": self.as_tuple()},
            )

    @property
    def drive(self) -> Tuple[int, int]:
        return self.k_plus, self.k_minus

    @property
    def measure(self) -> Tuple[int, int]:
        return self.l_plus, self.l_minus

    def as_tuple(self) -> Tuple[int, int, int, int]:
        return self.k_plus, self.k_minus, self.l_plus, self.l_minus

    def swapped(self) -> "Pattern":
        """Measure pair becomes the drive pair (reciprocity)."""
        return Pattern(self.l_plus, self.l_minus, self.k_plus, self.k_minus)


@dataclass(frozen=True, eq=False)
class PotentialField:
    """
    Solution of one drive.

    nodal_values:         per-node potential (V)
    electrode_values:     per-electrode value used for measurements; the
                          electrode constants for CEM, the center-node
                          potentials for PEM and the gap model
    electrode_potentials: CEM electrode constants (None for other models)
    """
    nodal_values: np.ndarray
    electrode_values: np.ndarray
    drive: Tuple[int, int]
    model: str
    current: float
    mesh_id: str
    electrode_potentials: Optional[np.ndarray] = None
    residual: float = 0.0

    def __neg__(self) -> "PotentialField":
        return PotentialField(
            nodal_values=-self.nodal_values,
            electrode_values=-self.electrode_values,
            drive=(self.drive[1], self.drive[0]),
            model=self.model,
            current=self.current,
            mesh_id=self.mesh_id,
            electrode_potentials=None if self.electrode_potentials is None else -self.electrode_potentials,
            residual=self.residual,
        )

    def boundary_mean_gauged(self, mesh: Mesh) -> np.ndarray:
        """Nodal values shifted so the boundary integral vanishes."""
        w = mesh.boundary_weights
        return self.nodal_values - float(w @ self.nodal_values) / float(w.sum())
