"""
JSON mesh files.

    {"schema_version": 1, "nodes": [[x, y], ...], "triangles": [[i, j, k], ...],
     "boundary_edges": [[i, j], ...], "region_tags": [tag, ...],
     "boundary_s": [...], "perimeter": P}

Indices are 0-based, coordinates in meters. boundary_s and perimeter are
optional; without them electrode arcs cannot be located on the mesh.
"""
import json
from pathlib import Path
from typing import Union

import numpy as np

from errors import MissingArtifactError, SchemaVersionError
from geometry.models import Mesh

MESH_SCHEMA_VERSION = 1


def mesh_to_dict(mesh: Mesh) -> dict:
    data = {
        "schema_version": MESH_SCHEMA_VERSION,
        "nodes": mesh.nodes.tolist(),
        "triangles": mesh.triangles.tolist(),
        "boundary_edges": mesh.boundary_edges.tolist(),
        "region_tags": [str(t) for t in mesh.region_tags],
    }
    if mesh.boundary_s is not None:
        data["boundary_s"] = mesh.boundary_s.tolist()
        data["perimeter"] = mesh.perimeter
    return data


def mesh_from_dict(data: dict) -> Mesh:
    version = data.get("schema_version", MESH_SCHEMA_VERSION)
    if version != MESH_SCHEMA_VERSION:
        raise SchemaVersionError(f"Unsupported mesh schema version: {version}")
    boundary_s = data.get("boundary_s")
    mesh = Mesh(
        nodes=np.asarray(data["nodes"], dtype=float),
        triangles=np.asarray(data["triangles"], dtype=np.int64),
        boundary_edges=np.asarray(data["boundary_edges"], dtype=np.int64),
        region_tags=np.asarray(data["region_tags"], dtype=object),
        boundary_s=None if boundary_s is None else np.asarray(boundary_s, dtype=float),
        perimeter=data.get("perimeter"),
    )
    mesh.validate()
    return mesh


def write_mesh(mesh: Mesh, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(mesh_to_dict(mesh), fh)
        fh.write("\n")
    return path


def read_mesh(path: Union[str, Path]) -> Mesh:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"Mesh file not found: {path}", {"path": str(path)})
    with open(path, encoding="utf-8") as fh:
        return mesh_from_dict(json.load(fh))
