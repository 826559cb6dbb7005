"""
Shared pytest fixtures.

Meshes and solver contexts are session-scoped so the expensive set-ups are
built once. Acceptance-scale runs are marked `slow`; deselect them with
`pytest -m "not slow"`.
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project to path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from forward.solvers import ForwardSolver
from geometry.electrodes import equally_spaced_electrodes
from geometry.mesh_generation import generate_disk_mesh
from geometry.models import BoundaryShape
from geometry.phantoms import build_layered_phantom

collect_ignore = ["examples"]

DISK_RADIUS = 1.0
DISK_ELECTRODES = 16
DISK_HALF_WIDTH = 0.03
DISK_CONTACT_IMPEDANCE = 0.1
DISK_EDGE = 0.025
DISK_INTERIOR = 0.1

FAT_DEPTH = 0.1
FAT_SIGMA = 1.0 / 15.0
MUSCLE_SIGMA = 1.0 / 3.0


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-scale run (minutes)")


@pytest.fixture(scope="session")
def disk_electrodes():
    """16 electrodes on the unit circle."""
    return equally_spaced_electrodes(
        2.0 * np.pi * DISK_RADIUS, DISK_ELECTRODES, DISK_HALF_WIDTH,
        contact_impedance=DISK_CONTACT_IMPEDANCE,
    )


@pytest.fixture(scope="session")
def disk_mesh(disk_electrodes):
    return generate_disk_mesh(DISK_RADIUS, DISK_EDGE, disk_electrodes, interior_edge_len=DISK_INTERIOR)


@pytest.fixture(scope="session")
def coarse_disk_mesh(disk_electrodes):
    """A second, different mesh of the same disk (for V on a separate mesh)."""
    return generate_disk_mesh(DISK_RADIUS, DISK_HALF_WIDTH, disk_electrodes, interior_edge_len=0.12)


@pytest.fixture(scope="session")
def unit_disk_solver(disk_mesh, disk_electrodes):
    return ForwardSolver(disk_mesh, 1.0, disk_electrodes)


@pytest.fixture(scope="session")
def layered_disk(disk_electrodes):
    """(mesh, sigma) of the unit disk with a fat shell of depth 0.1 over muscle."""
    return build_layered_phantom(
        BoundaryShape.circle(DISK_RADIUS),
        FAT_DEPTH,
        {"fat": FAT_SIGMA, "muscle": MUSCLE_SIGMA},
        electrodes=disk_electrodes,
        target_edge_len=DISK_EDGE,
        interior_edge_len=DISK_INTERIOR,
    )
