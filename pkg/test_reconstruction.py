"""
Tests for the reconstruction domain, sensitivity assembly, Tikhonov solve,
merging, diagnostics and border estimation.
"""
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy.sparse.csgraph import connected_components

from errors import (
    EmptyInputError, EstimationError, GeometryError, MergeError, ParameterError,
)
from forward.models import PEM
from forward.solvers import ForwardSolver
from geometry.electrodes import equally_spaced_electrodes
from geometry.mesh_generation import generate_mesh
from geometry.models import BoundaryShape
from geometry.phantoms import build_layered_phantom
from geometry.shapes import BoundaryCurve, load_fixture_boundary
from measurements.frames import build_frame, simulate_frame
from measurements.noise import add_noise, frame_noise_sigma
from measurements.patterns import enumerate_patterns
from reconstruction.border import estimate_border, profile_border, smooth_along_boundary
from reconstruction.diagnostics import (
    adjacent_pair_correlations, column_correlation, correlation_matrix, correlation_table, decay_diagnostic,
    high_correlation_components, reference_elements,
)
from reconstruction.image_io import load_system, save_system
from reconstruction.merge import MergedImage, merge_images
from reconstruction.recon_domain import boundary_distance, element_adjacency, extract_recon_domain
from reconstruction.sensitivity import (
    SensitivitySystem,
    assemble_sensitivity,
    default_alpha,
    discrepancy_alpha,
    estimate_gamma0,
    noise_whitener,
    predicted_b,
    sensitivity_row,
    v_fields_for_patterns,
)
from reconstruction.tikhonov import (
    ReconImage, gamma_to_kappa, kappa_to_gamma, solution_operator_norm, solve_tikhonov,
)

FAT_DEPTH = 0.1
LAYER = 0.025


@pytest.fixture(scope="module")
def layered_setup(layered_disk, disk_electrodes):
    """Point-electrode frame of center 1 on the layered disk with U and V on one mesh."""
    mesh, sigma = layered_disk
    patterns = enumerate_patterns(1, 16)
    v_solver = ForwardSolver(mesh, 1.0, disk_electrodes)
    u_solver = ForwardSolver(mesh, sigma, disk_electrodes)
    frame = simulate_frame(mesh, sigma, mesh, disk_electrodes, patterns,
                           u_model=PEM, u_solver=u_solver, v_solver=v_solver)
    v_fields = v_fields_for_patterns(v_solver, patterns)
    domain = extract_recon_domain(mesh, disk_electrodes, 1, depth=0.4)
    return {
        "mesh": mesh,
        "sigma": sigma,
        "patterns": patterns,
        "frame": frame,
        "u_solver": u_solver,
        "v_solver": v_solver,
        "v_fields": v_fields,
        "domain": domain,
    }


@pytest.fixture(scope="module")
def layered_system(layered_setup):
    s = layered_setup
    return assemble_sensitivity(s["domain"], s["v_fields"], s["patterns"], s["frame"])


def _system(S, b, gamma0=0.5):
    S = np.asarray(S, dtype=float)
    return SensitivitySystem(
        n=1, S=S, b=np.asarray(b, dtype=float), patterns=(), element_ids=np.arange(S.shape[1]),
        gamma0=gamma0, alpha=default_alpha(S), current=1.0, mesh_id="synthetic",
    )


def _image(n, ids, gamma, mesh_id):
    ids = np.asarray(ids)
    return ReconImage(n=n, element_ids=ids, kappa=np.zeros(len(ids)), gamma=np.asarray(gamma, dtype=float),
                      gamma0=1.0, alpha=1.0, current=1.0, mesh_id=mesh_id)


# Reconstruction domain

def test_domain_is_connected_and_shallow(disk_mesh, disk_electrodes):
    domain = extract_recon_domain(disk_mesh, disk_electrodes, 1)
    ids = domain.element_ids
    assert np.all(np.diff(ids) > 0)
    inradius = boundary_distance(disk_mesh, disk_mesh.centroids).max()
    assert domain.depth == pytest.approx(min(2.0 * disk_electrodes.pitch, 0.5 * inradius))
    n_parts, _ = connected_components(element_adjacency(disk_mesh, ids), directed=False)
    assert n_parts == 1
    assert boundary_distance(disk_mesh, domain.centroids).max() <= domain.depth
    assert domain.mask().sum() == domain.size


def test_domain_excludes_the_far_side(disk_mesh, disk_electrodes):
    domain = extract_recon_domain(disk_mesh, disk_electrodes, 1)
    far = int(np.argmin(np.sum((disk_mesh.centroids - [-0.99, 0.0]) ** 2, axis=1)))
    near = int(np.argmin(np.sum((disk_mesh.centroids - [0.99, 0.0]) ** 2, axis=1)))
    assert far not in domain.element_ids
    assert near in domain.element_ids


def test_shallower_domain_is_a_subset(disk_mesh, disk_electrodes):
    deep = extract_recon_domain(disk_mesh, disk_electrodes, 9, depth=0.6)
    shallow = extract_recon_domain(disk_mesh, disk_electrodes, 9, depth=0.3)
    assert shallow.size < deep.size
    assert np.isin(shallow.element_ids, deep.element_ids).all()


def test_domain_rejects_bad_depth_and_center(disk_mesh, disk_electrodes):
    with pytest.raises(GeometryError):
        extract_recon_domain(disk_mesh, disk_electrodes, 1, depth=0.0)
    with pytest.raises(GeometryError):
        extract_recon_domain(disk_mesh, disk_electrodes, 1, depth=5.0)
    with pytest.raises(GeometryError):
        extract_recon_domain(disk_mesh, disk_electrodes, 0)
    with pytest.raises(GeometryError):
        extract_recon_domain(disk_mesh, disk_electrodes, 17)


def test_default_depth_is_clamped_on_a_small_outline(caplog):
    """16 electrodes on a 1.5 x 1 ellipse put two pitches at the inradius; explicit depths still fail there."""
    curve = BoundaryCurve(BoundaryShape.ellipse(1.5, 1.0))
    electrodes = equally_spaced_electrodes(curve.perimeter, 16, 0.04)
    mesh = generate_mesh(curve, electrodes, 0.03, 0.1)
    inradius = boundary_distance(mesh, mesh.centroids).max()
    assert 2.0 * electrodes.pitch > 0.5 * inradius

    with caplog.at_level("INFO", logger="reconstruction.recon_domain"):
        domain = extract_recon_domain(mesh, electrodes, 2)
    assert domain.depth == pytest.approx(0.5 * inradius)
    assert "clamped" in caplog.text
    assert domain.size > 0
    with pytest.raises(GeometryError):
        extract_recon_domain(mesh, electrodes, 2, depth=inradius)


# Sensitivity system

def test_reference_row_is_zero(layered_setup):
    s = layered_setup
    ref = s["patterns"].reference
    row = sensitivity_row(s["domain"], s["v_fields"], ref, ref)
    assert not np.any(row)


def test_system_shape_and_rows(layered_setup, layered_system):
    s = layered_setup
    system = layered_system
    assert system.shape == (210, s["domain"].size)
    assert system.patterns == s["patterns"].patterns
    np.testing.assert_array_equal(system.b, s["frame"].B[1:])
    np.testing.assert_array_equal(system.element_ids, s["domain"].element_ids)
    assert system.gamma0 == pytest.approx(s["frame"].G[0])
    assert system.alpha == pytest.approx(default_alpha(system.S))
    for i in (0, 57, 209):
        row = sensitivity_row(s["domain"], s["v_fields"], system.patterns[i], s["patterns"].reference)
        np.testing.assert_allclose(system.S[i], row, rtol=1e-12, atol=1e-14 * np.abs(row).max())


@pytest.mark.parametrize("gamma0", [1.0 / 15.0, 1.0])
def test_integral_form_reproduces_b(layered_setup, gamma0):
    """For point-electrode data on one mesh the integral form of B is exact for any γ0."""
    s = layered_setup
    patterns = s["patterns"]
    u_fields = s["u_solver"].solve_many(patterns.drive_pairs(), PEM)
    B = predicted_b(s["mesh"], s["sigma"], gamma0, u_fields, s["v_fields"], patterns.patterns, patterns.reference)
    scale = np.max(np.abs(s["frame"].B))
    np.testing.assert_allclose(B, s["frame"].B[1:], rtol=0, atol=1e-7 * scale)


def test_integral_form_ignores_the_outer_layer(layered_setup):
    """With γ0 equal to the fat conductivity only the muscle contributes."""
    s = layered_setup
    patterns = s["patterns"]
    mesh = s["mesh"]
    u_fields = s["u_solver"].solve_many(patterns.drive_pairs(), PEM)
    full = predicted_b(mesh, s["sigma"], 1.0 / 15.0, u_fields, s["v_fields"], patterns.patterns, patterns.reference)
    muscle = np.nonzero(mesh.region_mask("muscle"))[0]
    inner = predicted_b(mesh, s["sigma"], 1.0 / 15.0, u_fields, s["v_fields"], patterns.patterns,
                        patterns.reference, elements=muscle)
    np.testing.assert_allclose(inner, full, rtol=1e-10, atol=1e-10 * np.abs(full).max())


def test_small_perturbation_is_linear(disk_mesh, disk_electrodes, unit_disk_solver):
    """A 0.1% conductivity bump inside D: S κ reproduces b to first order."""
    patterns = enumerate_patterns(1, 16)
    domain = extract_recon_domain(disk_mesh, disk_electrodes, 1)
    centroids = domain.centroids
    bump = domain.element_ids[np.hypot(centroids[:, 0] - 0.85, centroids[:, 1] - 0.05) < 0.08]
    assert len(bump) > 0
    sigma = np.ones(disk_mesh.n_triangles)
    sigma[bump] += 1e-3

    frame = simulate_frame(disk_mesh, sigma, disk_mesh, disk_electrodes, patterns,
                           u_model=PEM, v_solver=unit_disk_solver)
    v_fields = v_fields_for_patterns(unit_disk_solver, patterns)
    system = assemble_sensitivity(domain, v_fields, patterns, frame, gamma0=1.0)
    kappa = gamma_to_kappa(sigma[domain.element_ids], 1.0, system.current)
    residual = np.linalg.norm(system.S @ kappa - system.b)
    assert residual <= 1e-2 * np.linalg.norm(system.b)


@pytest.mark.parametrize("shape, count, half_width, edge, interior", [
    (BoundaryShape.circle(1.0), 16, 0.03, 0.03, 0.12),
    (BoundaryShape.ellipse(1.5, 1.0), 16, 0.04, 0.03, 0.1),
    (load_fixture_boundary("abdomen"), 32, 0.004, 0.003, 0.012),
])
def test_constant_conductivity_gives_null_data_and_image(shape, count, half_width, edge, interior):
    """γ constant on three outlines: B vanishes and so does the reconstructed κ."""
    curve = BoundaryCurve(shape)
    electrodes = equally_spaced_electrodes(curve.perimeter, count, half_width)
    mesh = generate_mesh(curve, electrodes, edge, interior)
    patterns = enumerate_patterns(2, count)
    v_solver = ForwardSolver(mesh, 1.0, electrodes)
    frame = simulate_frame(mesh, 3.0, mesh, electrodes, patterns, u_model=PEM, v_solver=v_solver)
    ref = abs(frame.U[0] / frame.V[0])
    assert np.max(np.abs(frame.B)) < 1e-8 * ref

    domain = extract_recon_domain(mesh, electrodes, 2)
    system = assemble_sensitivity(domain, v_fields_for_patterns(v_solver, patterns), patterns, frame)
    assert system.gamma0 == pytest.approx(3.0, rel=1e-8)
    image = solve_tikhonov(system)
    floor = solution_operator_norm(system) * 1e-8 * ref
    assert np.max(np.abs(image.kappa)) <= 10.0 * floor


def test_invalid_records_are_dropped(layered_setup):
    s = layered_setup
    frame = s["frame"]
    U = frame.U.copy()
    U[[3, 40]] = 0.0
    degraded = build_frame(s["patterns"], U, frame.V, frame.provenance)
    system = assemble_sensitivity(s["domain"], s["v_fields"], s["patterns"], degraded)
    assert system.dropped == 2
    assert system.shape[0] == 208


def test_system_artifact_round_trip(tmp_path, layered_system):
    path = save_system(layered_system, tmp_path)
    assert path.name == "system_n1.npz"
    loaded = load_system(path)
    np.testing.assert_array_equal(loaded.S, layered_system.S)
    np.testing.assert_array_equal(loaded.b, layered_system.b)
    assert loaded.patterns == layered_system.patterns
    assert loaded.mesh_id == layered_system.mesh_id
    assert loaded.gamma0 == layered_system.gamma0


def test_noise_whitener_factors_the_covariance():
    V = np.array([0.5, -1.0, 2.0])
    L = noise_whitener(V, 0.8, 0.1)
    expected = 0.01 * (np.diag(1.0 / V ** 2) + 1.0 / 0.64)
    np.testing.assert_allclose(L @ L.T, expected, rtol=1e-12)
    np.testing.assert_array_equal(L, np.tril(L))


def test_whitened_system_follows_the_noise_level(layered_setup):
    """Rows whitened by the noise covariance; α puts the whitened residual at sqrt(rows)."""
    s = layered_setup
    noisy = add_noise(s["frame"], 15.0, seed=21)
    sigma = frame_noise_sigma(noisy)
    assert sigma == noisy.provenance["noise"]["sigma"]
    raw = assemble_sensitivity(s["domain"], s["v_fields"], s["patterns"], noisy)
    white = assemble_sensitivity(s["domain"], s["v_fields"], s["patterns"], noisy, noise_sigma=sigma)
    assert raw.noise_sigma is None
    assert white.noise_sigma == sigma
    assert white.patterns == raw.patterns

    rows = np.nonzero(noisy.valid[1:])[0] + 1
    L = noise_whitener(noisy.V[rows], noisy.V[0], sigma)
    np.testing.assert_allclose(L @ white.S, raw.S, rtol=1e-8, atol=1e-12 * np.abs(raw.S).max())
    np.testing.assert_allclose(L @ white.b, raw.b, rtol=1e-8, atol=1e-12 * np.abs(raw.b).max())

    image = solve_tikhonov(white)
    residual = np.linalg.norm(white.S @ image.kappa - white.b)
    assert residual == pytest.approx(np.sqrt(len(white.b)), rel=1e-4)


def test_noise_sigma_of_a_frame(layered_setup):
    frame = layered_setup["frame"]
    assert frame_noise_sigma(frame) is None
    noisy = add_noise(frame, 15.0, seed=5)
    legacy = replace(noisy, provenance={**noisy.provenance, "noise": {"snr_db": 15.0, "seed": 5}})
    assert frame_noise_sigma(legacy) == pytest.approx(frame_noise_sigma(noisy), rel=0.2)


# Background conductivity

def test_gamma0_of_a_homogeneous_body(disk_mesh, disk_electrodes, unit_disk_solver):
    frame = simulate_frame(disk_mesh, 3.0, disk_mesh, disk_electrodes, enumerate_patterns(7, 16),
                           u_model=PEM, v_solver=unit_disk_solver)
    assert estimate_gamma0(frame) == pytest.approx(3.0, rel=1e-8)


def test_gamma0_tracks_a_thick_outer_layer():
    """Closely spaced electrodes over a thick fat layer see mostly fat."""
    electrodes = equally_spaced_electrodes(2.0 * np.pi, 64, 0.02)
    mesh, sigma = build_layered_phantom(
        BoundaryShape.circle(1.0), 0.5, {"fat": 1.0 / 15.0, "muscle": 1.0 / 3.0},
        electrodes=electrodes, target_edge_len=0.015, interior_edge_len=0.1,
    )
    frame = simulate_frame(mesh, sigma, mesh, electrodes, enumerate_patterns(1, 64), u_model=PEM)
    assert estimate_gamma0(frame) == pytest.approx(1.0 / 15.0, rel=0.1)


def test_gamma0_needs_a_valid_reference(layered_setup):
    s = layered_setup
    U = s["frame"].U.copy()
    U[0] = 0.0
    frame = build_frame(s["patterns"], U, s["frame"].V)
    with pytest.raises(EstimationError):
        estimate_gamma0(frame)


def test_gamma0_under_noise_stays_near_noiseless(layered_setup):
    """At 15 dB the reference G of a typical seed stays within 15% of the noiseless value."""
    frame = layered_setup["frame"]
    clean = estimate_gamma0(frame)
    errors = [abs(estimate_gamma0(add_noise(frame, 15.0, seed=seed)) / clean - 1.0) for seed in range(40)]
    assert np.median(errors) < 0.15


# Tikhonov

def test_zero_data_gives_background(layered_system):
    image = solve_tikhonov(layered_system.with_data(np.zeros(layered_system.shape[0])))
    assert not np.any(image.kappa)
    np.testing.assert_array_equal(image.gamma, layered_system.gamma0)


def test_solution_is_linear_in_the_data():
    rng = np.random.default_rng(1)
    S = rng.normal(size=(40, 25))
    b1, b2 = rng.normal(size=40), rng.normal(size=40)
    k1 = solve_tikhonov(_system(S, b1)).kappa
    k2 = solve_tikhonov(_system(S, b2)).kappa
    k12 = solve_tikhonov(_system(S, b1 + 2.0 * b2)).kappa
    np.testing.assert_allclose(k12, k1 + 2.0 * k2, rtol=1e-8, atol=1e-12)


def test_norm_decreases_with_alpha():
    rng = np.random.default_rng(2)
    system = _system(rng.normal(size=(30, 50)), rng.normal(size=30))
    norms = [np.linalg.norm(solve_tikhonov(system, alpha).kappa) for alpha in (1e-3, 1e-2, 1e-1, 1.0)]
    assert all(a > b for a, b in zip(norms, norms[1:]))


def test_recovers_manufactured_solution():
    """Correlated columns and a small α: κ comes back with a tiny normal-equation residual."""
    rng = np.random.default_rng(3)
    S = rng.normal(size=(60, 5)) @ rng.normal(size=(5, 20)) + 0.1 * rng.normal(size=(60, 20))
    kappa = rng.normal(size=20)
    image = solve_tikhonov(_system(S, S @ kappa), alpha=1e-8)
    assert np.linalg.norm(image.kappa - kappa) <= 1e-4 * np.linalg.norm(kappa)
    assert image.normal_residual < 1e-10
    np.testing.assert_allclose(image.gamma, kappa_to_gamma(image.kappa, 0.5))


def test_dual_form_matches_normal_equations():
    """Fewer rows than elements goes through SSᵀ and agrees with the primal solution."""
    rng = np.random.default_rng(4)
    S = rng.normal(size=(20, 60))
    b = rng.normal(size=20)
    image = solve_tikhonov(_system(S, b), alpha=0.3)
    primal = np.linalg.solve(S.T @ S + 0.3 * np.eye(60), S.T @ b)
    np.testing.assert_allclose(image.kappa, primal, rtol=1e-8, atol=1e-12)
    assert image.normal_residual < 1e-10


def test_discrepancy_alpha_meets_the_target():
    rng = np.random.default_rng(4)
    S = rng.normal(size=(40, 120))
    kappa = np.zeros(120)
    kappa[[5, 60]] = [1.0, -2.0]
    b = S @ kappa + rng.normal(size=40)
    target = np.sqrt(40.0)
    alpha = discrepancy_alpha(S, b, target)
    image = solve_tikhonov(_system(S, b), alpha)
    assert np.linalg.norm(S @ image.kappa - b) == pytest.approx(target, rel=1e-4)

    quiet = 1e-3 * rng.normal(size=40)
    assert discrepancy_alpha(S, quiet, target) >= 1e3 * alpha


def test_tikhonov_rejects_bad_input():
    system = _system(np.eye(3), np.ones(3))
    with pytest.raises(ParameterError):
        solve_tikhonov(system, alpha=0.0)
    with pytest.raises(ParameterError):
        solve_tikhonov(system, alpha=-1.0)
    with pytest.raises(EmptyInputError):
        solve_tikhonov(_system(np.zeros((0, 4)), np.zeros(0)), alpha=1.0)


def test_kappa_gamma_conversion():
    kappa = np.array([-2.0, 0.0, 0.5])
    gamma = kappa_to_gamma(kappa, 0.2, current=2.0)
    np.testing.assert_allclose(gamma, 0.2 - 2.0 * 0.04 * kappa)
    np.testing.assert_allclose(gamma_to_kappa(gamma, 0.2, current=2.0), kappa, atol=1e-15)


# Merge

def test_merge_averages_overlaps(disk_mesh):
    a = _image(1, [0, 1, 2], [1.0, 2.0, 3.0], disk_mesh.mesh_id)
    b = _image(5, [2, 3], [5.0, 7.0], disk_mesh.mesh_id)
    merged = merge_images([b, a], disk_mesh)
    np.testing.assert_allclose(merged.gamma[:4], [1.0, 2.0, 4.0, 7.0])
    np.testing.assert_array_equal(merged.coverage[:4], [1, 1, 2, 1])
    assert np.isnan(merged.gamma[4:]).all()
    assert merged.covered.sum() == 4
    assert merged.centers == (1, 5)
    again = merge_images([a, b], disk_mesh)
    np.testing.assert_array_equal(again.gamma, merged.gamma)


def test_merge_errors(disk_mesh):
    with pytest.raises(EmptyInputError):
        merge_images([], disk_mesh)
    with pytest.raises(MergeError):
        merge_images([_image(1, [0], [1.0], "another-mesh")], disk_mesh)


# Diagnostics

def test_correlation_matrix(layered_system):
    C = correlation_matrix(layered_system)
    np.testing.assert_array_equal(C, C.T)
    np.testing.assert_array_equal(np.diag(C), 1.0)
    assert np.all(np.abs(C) <= 1.0)
    element = int(layered_system.element_ids[10])
    np.testing.assert_allclose(column_correlation(layered_system, element), C[:, 10], atol=1e-12)


def test_correlation_of_foreign_element(layered_setup, layered_system):
    outside = np.setdiff1d(np.arange(layered_setup["mesh"].n_triangles), layered_system.element_ids)
    with pytest.raises(ParameterError):
        column_correlation(layered_system, int(outside[0]))


def test_reference_elements_and_table(layered_setup, layered_system, disk_electrodes):
    domain = layered_setup["domain"]
    refs = reference_elements(domain, disk_electrodes)
    assert set(refs) == {"near_boundary", "mid", "deep"}
    depth = boundary_distance(domain.mesh, domain.mesh.centroids[list(refs.values())])
    assert depth[0] <= depth[1] <= depth[2]
    table = correlation_table(layered_system, refs.values())
    assert list(table.columns) == ["i", "j", "c"]
    for element in refs.values():
        mine = table[table["i"] == element]
        assert element in set(mine["j"])
        assert (mine["c"].abs() > 0.5).all()


def test_high_correlation_set_is_connected(layered_setup, layered_system, disk_electrodes):
    refs = reference_elements(layered_setup["domain"], disk_electrodes)
    assert high_correlation_components(layered_system, layered_setup["mesh"], refs["near_boundary"]) == 1


def test_adjacent_pairs_share_a_depth(layered_setup, layered_system):
    mesh = layered_setup["mesh"]
    pairs = adjacent_pair_correlations(layered_system, mesh, 0.01)
    assert len(pairs) > 0
    assert (np.abs(pairs["depth_i"] - pairs["depth_j"]) <= 0.01).all()
    assert (pairs["i"] != pairs["j"]).all()
    C = correlation_matrix(layered_system)
    pos = np.searchsorted(layered_system.element_ids, pairs[["i", "j"]].to_numpy())
    np.testing.assert_allclose(pairs["c"], C[pos[:, 0], pos[:, 1]], atol=1e-12)


def test_weight_decays_away_from_the_electrodes(disk_mesh, disk_electrodes, unit_disk_solver):
    ref = enumerate_patterns(1, 16).reference
    fields = v_fields_for_patterns(unit_disk_solver, enumerate_patterns(1, 16))
    cluster = disk_mesh.nodes[unit_disk_solver.center_nodes[[k - 1 for k in ref.as_tuple()]]]
    decay = decay_diagnostic(fields[ref.drive], fields[ref.measure], disk_mesh, cluster)
    profile = decay.profile
    peak = profile.loc[profile["mean_weight"].idxmax()]
    assert peak["r_mid"] < disk_electrodes.pitch
    near = decay.tail(0.8, 1.2)["mean_weight"].mean()
    far = decay.tail(1.2, 1.6)["mean_weight"].mean()
    assert far < near < 5e-2 * peak["mean_weight"]


def test_decay_profile_tail_is_strictly_decreasing(disk_mesh, unit_disk_solver):
    """Beyond the larger pair separation of the reference pattern the shell average only falls."""
    patterns = enumerate_patterns(1, 16)
    ref = patterns.reference
    fields = v_fields_for_patterns(unit_disk_solver, patterns)
    nodes = disk_mesh.nodes[unit_disk_solver.center_nodes]
    d_k = np.linalg.norm(nodes[ref.k_plus - 1] - nodes[ref.k_minus - 1])
    d_l = np.linalg.norm(nodes[ref.l_plus - 1] - nodes[ref.l_minus - 1])
    cluster = nodes[[k - 1 for k in ref.as_tuple()]]
    decay = decay_diagnostic(fields[ref.drive], fields[ref.measure], disk_mesh, cluster)
    tail = decay.tail(max(d_k, d_l))["mean_weight"].to_numpy()
    assert len(tail) >= 5
    assert np.all(np.diff(tail) < 0)


# Border

def test_profile_border_on_a_step():
    depths = np.linspace(0.0, 1.0, 101)
    values = np.where(depths < 0.3, 1.0 / 15.0, 1.0 / 3.0)
    assert profile_border(depths, values) == pytest.approx(0.295, abs=1e-9)
    assert np.isnan(profile_border(depths, np.full(101, 0.2)))
    assert np.isnan(profile_border(depths, np.full(101, np.nan)))


def test_border_of_the_true_image(layered_disk):
    """Reading the phantom's own conductivity puts the border within one layer everywhere."""
    mesh, sigma = layered_disk
    merged = MergedImage(gamma=sigma, coverage=np.ones(mesh.n_triangles, dtype=int),
                         mesh_id=mesh.mesh_id, centers=())
    curve = BoundaryCurve(BoundaryShape.circle(1.0))
    border = estimate_border(merged, mesh, curve, FAT_DEPTH, LAYER)
    assert len(border.table) == 128
    assert border.resolved_fraction == 1.0
    assert border.fraction_within(1) >= 0.95
    assert (border.table["layer"] >= LAYER).all()
    assert border.table["raw_depth"].notna().all()
    with pytest.raises(MergeError):
        estimate_border(replace(merged, mesh_id="another-mesh"), mesh, curve, FAT_DEPTH, LAYER)
    with pytest.raises(ParameterError):
        estimate_border(merged, mesh, curve, FAT_DEPTH, 0.0)


def test_boundary_median_removes_outliers_and_bridges_gaps():
    depths = np.full(12, 0.1)
    depths[4] = 0.5
    depths[7] = np.nan
    np.testing.assert_allclose(smooth_along_boundary(depths, 2), 0.1)
    np.testing.assert_array_equal(smooth_along_boundary(depths, 0), depths)

    sparse = np.full(12, np.nan)
    sparse[[11, 0, 1]] = 0.2
    smoothed = smooth_along_boundary(sparse, 2)
    assert smoothed[0] == smoothed[11] == 0.2
    assert np.isnan(smoothed[6])


@pytest.mark.slow
def test_abdomen_pipeline_orders_fat_below_muscle(tmp_path):
    """Noiseless abdomen run: the merged image is lower in the fat shell than beneath it."""
    from cli.commands import build_reference_geometry, cmd_reconstruct, cmd_simulate
    from cli.run_config import load_run_config
    from measurements.frame_io import read_csv_table

    config = load_run_config(Path(__file__).parent / "fixtures" / "abdomen_two_layer.json")
    config = replace(config, snr_db=None, out_dir=str(tmp_path), centers=(1, 9, 17, 25))
    cmd_simulate(config)
    summary = cmd_reconstruct(config)
    assert summary["covered_elements"] > 0

    mesh = build_reference_geometry(config).mesh
    gamma = read_csv_table(tmp_path / "merged.csv")["gamma"].to_numpy(dtype=float)
    depth = boundary_distance(mesh, mesh.centroids)
    covered = np.isfinite(gamma)
    fat = covered & (depth < config.fat_depth)
    muscle = covered & (depth > config.fat_depth + config.v_edge)
    assert fat.any() and muscle.any()
    assert gamma[fat].mean() < gamma[muscle].mean()


@pytest.mark.slow
def test_abdomen_columns_are_highly_correlated():
    """Center 4 of the abdomen: most edge-adjacent columns at one depth correlate above 0.9."""
    from cli.commands import build_reference_geometry
    from cli.run_config import load_run_config

    config = load_run_config(Path(__file__).parent / "fixtures" / "abdomen_two_layer.json")
    reference = build_reference_geometry(config)
    mesh, electrodes = reference.mesh, reference.electrodes
    patterns = enumerate_patterns(4, config.electrode_count)
    assert patterns.reference.as_tuple() == (4, 5, 3, 6)
    v_solver = ForwardSolver(mesh, 1.0, electrodes)
    frame = simulate_frame(mesh, 3.0, mesh, electrodes, patterns, u_model=PEM, v_solver=v_solver)
    domain = extract_recon_domain(mesh, electrodes, 4)
    system = assemble_sensitivity(domain, v_fields_for_patterns(v_solver, patterns), patterns, frame)

    pairs = adjacent_pair_correlations(system, mesh, 0.5 * config.v_edge)
    assert len(pairs) >= 100
    assert (pairs["c"] > 0.9).mean() >= 0.5
    C = correlation_matrix(system)
    np.testing.assert_allclose(C, C.T, atol=1e-12)
    np.testing.assert_allclose(np.diag(C), 1.0, atol=1e-12)


@pytest.mark.slow
@pytest.mark.parametrize("snr_db, layers, share", [(None, 1, 0.8), (15.0, 2, 0.7)])
def test_abdomen_fat_border_is_recovered(tmp_path, snr_db, layers, share):
    """All 32 centers merged: the interface depth holds along most of the boundary, with and without noise."""
    from cli.commands import cmd_reconstruct, cmd_simulate
    from cli.run_config import load_run_config

    config = load_run_config(Path(__file__).parent / "fixtures" / "abdomen_two_layer.json")
    config = replace(config, snr_db=snr_db, out_dir=str(tmp_path))
    cmd_simulate(config)
    summary = cmd_reconstruct(config)
    assert len(summary["centers"]) == 32
    border = summary["border"]
    key = "within_1_layer" if layers == 1 else "within_2_layers"
    assert border[key] >= share
