"""
Run configuration: a JSON file plus command-line overrides.

Every field has a default so a config only needs what differs; see
fixtures/*.json for complete examples.
"""
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from errors import ConfigError, EITError, GeometryError
from forward.models import CEM, PEM
from geometry.electrodes import DEFAULT_CONTACT_IMPEDANCE, DEFAULT_CURRENT, equally_spaced_electrodes
from geometry.models import BoundaryShape, ElectrodeConfig
from geometry.shapes import BoundaryCurve, boundary_shape_from_dict

logger = logging.getLogger(__name__)

DEFAULT_OUT_DIR = "eit_output"
DEFAULT_ELECTRODE_COUNT = 32
DEFAULT_LAMBDA = 1e-2

ALL_CENTERS = "all"


@dataclass(frozen=True)
class RunConfig:
    boundary: BoundaryShape
    fat_depth: float = 0.0
    muscle_depth: Optional[float] = None
    conductivities: Dict[str, float] = field(default_factory=dict)
    inclusions: Tuple[Tuple[Tuple[Tuple[float, float], ...], str], ...] = ()
    electrode_count: int = DEFAULT_ELECTRODE_COUNT
    half_width: Optional[float] = None
    contact_impedance: float = DEFAULT_CONTACT_IMPEDANCE
    current: float = DEFAULT_CURRENT
    offset: float = 0.0
    u_edge: Optional[float] = None
    v_edge: Optional[float] = None
    u_interior: Optional[float] = None
    v_interior: Optional[float] = None
    centers: Union[str, Tuple[int, ...]] = ALL_CENTERS
    snr_db: Optional[float] = None
    seed: Optional[int] = None
    depth: Optional[float] = None
    lam: float = DEFAULT_LAMBDA
    alpha: Optional[float] = None
    v_model: str = PEM
    convergence: Dict = field(default_factory=dict)
    out_dir: str = DEFAULT_OUT_DIR
    raster: bool = False
    figures: bool = False
    source: Optional[str] = None

    @property
    def perimeter(self) -> float:
        return BoundaryCurve(self.boundary).perimeter

    def electrodes(self) -> ElectrodeConfig:
        return equally_spaced_electrodes(
            self.perimeter,
            self.electrode_count,
            self.half_width,
            contact_impedance=self.contact_impedance,
            current=self.current,
            offset=self.offset,
        )

    def center_list(self) -> List[int]:
        if self.centers == ALL_CENTERS:
            return list(range(1, self.electrode_count + 1))
        return list(self.centers)

    def with_overrides(self, validate: bool = True, **overrides) -> "RunConfig":
        """Copy with every non-None override applied (validated unless told otherwise)."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        config = replace(self, **changes)
        if validate:
            config.validate()
        return config

    def validate(self) -> None:
        if self.electrode_count < 8:
            raise ConfigError("At least 8 electrodes are required", {"count": self.electrode_count})
        for name in ("u_edge", "v_edge", "half_width"):
            value = getattr(self, name)
            if value is None or not value > 0:
                raise ConfigError(f"{name} must be positive", {name: value})
        for name in ("u_interior", "v_interior"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ConfigError(f"{name} must be positive", {name: value})
        if self.snr_db is not None and not np.isposinf(self.snr_db) and self.seed is None:
            raise ConfigError("A seed is required when noise is set", {"snr_db": self.snr_db})
        if self.centers != ALL_CENTERS:
            bad = [n for n in self.centers if not 1 <= n <= self.electrode_count]
            if bad or not self.centers:
                raise ConfigError(f"Center electrodes outside 1..{self.electrode_count}: {bad}")
        if self.v_model not in (PEM, CEM):
            raise ConfigError(f"v_model must be '{PEM}' or '{CEM}'", {"v_model": self.v_model})
        if self.alpha is not None and not self.alpha > 0:
            raise ConfigError("alpha must be positive", {"alpha": self.alpha})
        if self.fat_depth < 0:
            raise ConfigError("fat_depth must be non-negative", {"fat_depth": self.fat_depth})


def parse_centers(value: Union[str, List[int], None]) -> Union[str, Tuple[int, ...], None]:
    """'all', '1,5,9' or a list of ints."""
    if value is None:
        return None
    if isinstance(value, str):
        if value.strip().lower() == ALL_CENTERS:
            return ALL_CENTERS
        try:
            return tuple(int(v) for v in value.split(",") if v.strip())
        except ValueError as exc:
            raise ConfigError(f"Invalid center list: {value}") from exc
    return tuple(int(v) for v in value)


def config_from_dict(data: Dict, source: Optional[str] = None) -> RunConfig:
    if "boundary" not in data and "convergence" not in data:
        raise ConfigError("Run config has no boundary entry", {"source": source})
    # a convergence-only config runs on the disk it describes
    default_disk = {"kind": "circle", "radius": data.get("convergence", {}).get("radius", 1.0)}
    try:
        boundary = boundary_shape_from_dict(data.get("boundary", default_disk))
    except GeometryError as exc:
        raise ConfigError(f"Invalid boundary: {exc}", {"source": source}) from exc
    layers = data.get("layers", {})
    electrodes = data.get("electrodes", {})
    mesh = data.get("mesh", {})
    recon = data.get("reconstruction", {})
    noise = data.get("noise") or {}
    u_edge = mesh.get("u_edge")
    half_width = electrodes.get("half_width")
    if half_width is None and u_edge is not None:
        half_width = 2.0 * u_edge
    try:
        config = RunConfig(
            boundary=boundary,
            fat_depth=float(layers.get("fat_depth", 0.0)),
            muscle_depth=layers.get("muscle_depth"),
            conductivities={k: float(v) for k, v in data.get("conductivities", {}).items()},
            inclusions=tuple(
                (tuple(tuple(map(float, p)) for p in inc["vertices"]), inc.get("tag", "bone"))
                for inc in data.get("inclusions", [])
            ),
            electrode_count=int(electrodes.get("count", DEFAULT_ELECTRODE_COUNT)),
            half_width=half_width,
            contact_impedance=float(electrodes.get("contact_impedance", DEFAULT_CONTACT_IMPEDANCE)),
            current=float(electrodes.get("current", DEFAULT_CURRENT)),
            offset=float(electrodes.get("offset", 0.0)),
            u_edge=u_edge,
            v_edge=mesh.get("v_edge", u_edge),
            u_interior=mesh.get("u_interior"),
            v_interior=mesh.get("v_interior"),
            centers=parse_centers(data.get("centers", ALL_CENTERS)),
            snr_db=noise.get("snr_db"),
            seed=noise.get("seed"),
            depth=recon.get("depth"),
            lam=float(recon.get("lambda", DEFAULT_LAMBDA)),
            alpha=recon.get("alpha"),
            v_model=data.get("v_model", PEM),
            convergence=dict(data.get("convergence", {})),
            source=source,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, EITError):
            raise
        raise ConfigError(f"Invalid run config: {exc}", {"source": source}) from exc
    return config


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """
    Read a run config file.

    Raises:
        ConfigError: the file is missing or malformed
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Run config not found: {path}", {"path": str(path)})
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Run config is not valid JSON: {exc}", {"path": str(path)}) from exc
    logger.debug(f"Loaded run config {path}")
    return config_from_dict(data, source=str(path))
