"""
Image tables and system artifacts.

    image_n{n}.csv     element_id, kappa, gamma
    merged.csv         element_id, gamma, coverage_count (gamma empty where uncovered)
    system_n{n}.npz    S, b, element ids, patterns, gamma0, alpha, current, mesh id
"""
import logging
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from errors import MissingArtifactError, SchemaVersionError
from forward.models import Pattern
from measurements.frame_io import SCHEMA_VERSION, write_csv_table
from reconstruction.merge import MergedImage
from reconstruction.sensitivity import SensitivitySystem
from reconstruction.tikhonov import ReconImage

logger = logging.getLogger(__name__)


def image_table(image: ReconImage) -> pd.DataFrame:
    return pd.DataFrame({
        "element_id": image.element_ids,
        "kappa": image.kappa,
        "gamma": image.gamma,
    })


def merged_table(merged: MergedImage) -> pd.DataFrame:
    return pd.DataFrame({
        "element_id": np.arange(len(merged.gamma)),
        "gamma": merged.gamma,
        "coverage_count": merged.coverage,
    })


def write_image(image: ReconImage, out_dir: Union[str, Path]) -> Path:
    return write_csv_table(image_table(image), Path(out_dir) / f"image_n{image.n}.csv")


def write_merged(merged: MergedImage, out_dir: Union[str, Path]) -> Path:
    return write_csv_table(merged_table(merged), Path(out_dir) / "merged.csv")


def save_system(system: SensitivitySystem, out_dir: Union[str, Path]) -> Path:
    path = Path(out_dir) / f"system_n{system.n}.npz"
    path.parent.mkdir(parents=True, exist_ok=True)
    patterns = np.array([p.as_tuple() for p in system.patterns], dtype=np.int64).reshape(-1, 4)
    np.savez(
        path,
        schema_version=np.int64(SCHEMA_VERSION),
        n=np.int64(system.n),
        S=system.S,
        b=system.b,
        patterns=patterns,
        element_ids=system.element_ids,
        gamma0=np.float64(system.gamma0),
        alpha=np.float64(system.alpha),
        current=np.float64(system.current),
        mesh_id=np.array(system.mesh_id),
        dropped=np.int64(system.dropped),
        noise_sigma=np.float64(np.nan if system.noise_sigma is None else system.noise_sigma),
    )
    logger.debug(f"Saved system n={system.n} to {path}")
    return path


def load_system(path: Union[str, Path]) -> SensitivitySystem:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"System artifact not found: {path}", {"path": str(path)})
    with np.load(path, allow_pickle=False) as data:
        version = int(data["schema_version"]) if "schema_version" in data.files else None
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(f"Unsupported schema version {version} in {path}")
        noise_sigma = float(data["noise_sigma"]) if "noise_sigma" in data.files else float("nan")
        return SensitivitySystem(
            n=int(data["n"]),
            S=data["S"],
            b=data["b"],
            patterns=tuple(Pattern(*map(int, row)) for row in data["patterns"]),
            element_ids=data["element_ids"],
            gamma0=float(data["gamma0"]),
            alpha=float(data["alpha"]),
            current=float(data["current"]),
            mesh_id=str(data["mesh_id"]),
            dropped=int(data["dropped"]),
            noise_sigma=noise_sigma if np.isfinite(noise_sigma) else None,
        )
