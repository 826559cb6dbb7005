"""
Frame files.

    frame_n{n}.csv   '# schema_version: 1' then FRAME_COLUMNS, reference first
    frame_n{n}.json  provenance, reference pattern, pattern counts, schema_version
"""
import json
import logging
from pathlib import Path
from typing import Tuple, Union

import pandas as pd

from errors import DataMismatchError, MissingArtifactError, SchemaVersionError
from measurements.frames import FRAME_COLUMNS, MeasurementFrame

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCHEMA_PREFIX = "# schema_version:"
FLOAT_FORMAT = "%.17g"


def frame_stem(n: int) -> str:
    return f"frame_n{n}"


def write_csv_table(table: pd.DataFrame, path: Union[str, Path]) -> Path:
    """CSV with the schema header line; '.' decimal, '\\n' line ends, UTF-8."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{SCHEMA_PREFIX} {SCHEMA_VERSION}\n")
        table.to_csv(fh, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def read_csv_table(path: Union[str, Path]) -> pd.DataFrame:
    """Read a table written by write_csv_table, rejecting other schema versions."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"File not found: {path}", {"path": str(path)})
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
    if not first.startswith(SCHEMA_PREFIX):
        raise SchemaVersionError(f"{path} has no schema version header")
    version = first[len(SCHEMA_PREFIX):].strip()
    if version != str(SCHEMA_VERSION):
        raise SchemaVersionError(f"Unsupported schema version {version} in {path}")
    return pd.read_csv(path, comment="#", float_precision="round_trip")


def write_json(data: dict, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_json(path: Union[str, Path]) -> dict:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"File not found: {path}", {"path": str(path)})
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"Unsupported schema version {version} in {path}")
    return data


def write_frame(frame: MeasurementFrame, out_dir: Union[str, Path]) -> Tuple[Path, Path]:
    """Write the frame CSV and its JSON sidecar; returns both paths."""
    out = Path(out_dir)
    stem = frame_stem(frame.n)
    csv_path = write_csv_table(frame.table, out / f"{stem}.csv")
    ref = frame.reference
    sidecar = {
        "schema_version": SCHEMA_VERSION,
        "n": frame.n,
        "reference": [int(ref[c]) for c in ("k_plus", "k_minus", "l_plus", "l_minus")],
        "combinatorial_count": frame.combinatorial_count,
        "filtered_count": frame.filtered_count,
        "valid_count": int(frame.valid.sum()),
        "provenance": frame.provenance,
    }
    json_path = write_json(sidecar, out / f"{stem}.json")
    logger.info(f"Wrote {csv_path.name} ({len(frame.table)} records)")
    return csv_path, json_path


def read_frame(csv_path: Union[str, Path]) -> MeasurementFrame:
    csv_path = Path(csv_path)
    table = read_csv_table(csv_path)
    missing = [c for c in FRAME_COLUMNS if c not in table.columns]
    if missing:
        raise DataMismatchError(f"Frame {csv_path} lacks columns {missing}")
    table["valid"] = table["valid"].astype(str).str.lower().isin(["true", "1"])
    sidecar = read_json(csv_path.with_suffix(".json"))
    return MeasurementFrame(
        table=table[FRAME_COLUMNS],
        provenance=sidecar.get("provenance", {}),
        combinatorial_count=int(sidecar.get("combinatorial_count", 0)),
        filtered_count=int(sidecar.get("filtered_count", 0)),
    )
