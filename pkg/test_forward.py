"""
Tests for the CEM, PEM and gap forward solvers.
"""
import numpy as np
import pytest

from errors import ParameterError, PatternError, SolverError
from forward.measurements import energy_identity_gap, measure
from forward.models import CEM, GAP, PEM, ConductivityField, Pattern
from forward.solvers import ForwardSolver, solve_models, thread_count


@pytest.fixture(scope="module")
def random_sigma(disk_mesh):
    rng = np.random.default_rng(7)
    return rng.uniform(0.5, 2.0, disk_mesh.n_triangles)


@pytest.fixture(scope="module")
def random_solver(disk_mesh, disk_electrodes, random_sigma):
    return ForwardSolver(disk_mesh, random_sigma, disk_electrodes)


@pytest.mark.parametrize("model", [CEM, PEM])
def test_reciprocity(random_solver, model):
    """Swapping the drive and measure pairs leaves U unchanged."""
    forward = measure(random_solver.solve((1, 5), model), 9, 13)
    backward = measure(random_solver.solve((9, 13), model), 1, 5)
    assert forward == pytest.approx(backward, rel=1e-8)


def test_cem_current_conservation(random_solver):
    """+I leaves k⁺, -I leaves k⁻, nothing leaves the other electrodes."""
    field = random_solver.solve_cem((2, 7))
    currents = random_solver.electrode_currents(field)
    current = random_solver.current
    assert abs(currents.sum()) < 1e-10 * current
    assert currents[1] == pytest.approx(current, rel=1e-8)
    assert currents[6] == pytest.approx(-current, rel=1e-8)
    others = np.delete(currents, [1, 6])
    assert np.max(np.abs(others)) < 1e-8 * current


def test_pem_energy_identity(disk_mesh, random_sigma, random_solver):
    """I·U_{k,l} = ∫σ∇u_k·∇u_l for point-electrode fields."""
    u_k = random_solver.solve_pem((1, 4))
    u_l = random_solver.solve_pem((8, 11))
    assert energy_identity_gap(disk_mesh, random_sigma, u_k, u_l) < 1e-8


def test_pem_boundary_mean_gauge(disk_mesh, random_solver):
    u = random_solver.solve_pem((3, 10)).nodal_values
    w = disk_mesh.boundary_weights
    assert abs(w @ u) < 1e-10 * np.max(np.abs(u)) * w.sum()


def test_reversed_drive_negates_voltage(random_solver):
    for model in (CEM, PEM, GAP):
        a = measure(random_solver.solve((2, 6), model), 10, 12)
        b = measure(random_solver.solve((6, 2), model), 10, 12)
        assert b == pytest.approx(-a, rel=1e-7)


def test_pem_voltage_scales_with_conductivity(disk_mesh, disk_electrodes):
    """Multiplying a homogeneous σ by c divides every PEM voltage by c."""
    u1 = ForwardSolver(disk_mesh, 1.0, disk_electrodes).solve_pem((1, 2))
    u3 = ForwardSolver(disk_mesh, 3.0, disk_electrodes).solve_pem((1, 2))
    assert measure(u3, 4, 9) == pytest.approx(measure(u1, 4, 9) / 3.0, rel=1e-8)


def test_electrode_models_agree_far_from_the_electrodes(disk_mesh, disk_electrodes):
    """Small electrodes: CEM, gap and PEM voltages across distant electrodes nearly coincide."""
    fields = solve_models(disk_mesh, 1.0, disk_electrodes, (1, 5), models=[CEM, PEM, GAP])
    pem = measure(fields[PEM], 9, 13)
    assert measure(fields[GAP], 9, 13) == pytest.approx(pem, rel=1e-2)
    assert measure(fields[CEM], 9, 13) == pytest.approx(pem, rel=2e-2)


def test_solve_many_is_keyed_by_drive(random_solver):
    drives = [(1, 2), (3, 4), (1, 2), (5, 9)]
    fields = random_solver.solve_many(drives, PEM)
    assert list(fields) == [(1, 2), (3, 4), (5, 9)]
    for drive, field in fields.items():
        assert field.drive == drive
        assert field.model == PEM


def test_bad_drives_rejected(random_solver):
    with pytest.raises(ParameterError):
        random_solver.solve_cem((1, 1))
    with pytest.raises(ParameterError):
        random_solver.solve_pem((0, 3))
    with pytest.raises(ParameterError):
        random_solver.solve((1, 2), "dipole")


def test_measure_on_drive_electrode_rejected(random_solver):
    field = random_solver.solve_pem((1, 5))
    with pytest.raises(PatternError):
        measure(field, 1, 3)
    assert measure(field, 3, 3) == 0.0


def test_invalid_conductivity(disk_mesh, disk_electrodes):
    sigma = np.ones(disk_mesh.n_triangles)
    sigma[0] = 0.0
    with pytest.raises(SolverError):
        ForwardSolver(disk_mesh, sigma, disk_electrodes)
    with pytest.raises(ParameterError):
        ConductivityField(sigma)
    with pytest.raises(ParameterError):
        ForwardSolver(disk_mesh, np.ones(3), disk_electrodes)


def test_pattern_validation():
    with pytest.raises(PatternError):
        Pattern(1, 1, 2, 3)
    with pytest.raises(PatternError):
        Pattern(1, 2, 2, 3)
    assert Pattern(1, 2, 3, 4).swapped() == Pattern(3, 4, 1, 2)



@pytest.mark.parametrize("raw", [None, "", "0", "-3", "four", "2.5"])
def test_thread_count_falls_back_to_cpu_count(monkeypatch, raw):
    monkeypatch.setattr("os.cpu_count", lambda: 6)
    assert thread_count(raw) == 6


def test_thread_count_reads_integer():
    assert thread_count(" 3 ") == 3
