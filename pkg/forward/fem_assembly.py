"""
P1 finite-element assembly.

Stiffness:  K_ij = Σ_T σ_T |T| ∇φ_i·∇φ_j
Electrode l with contact impedance z_l, arc E_l and P1 trace φ:
    M_l = ∫_{E_l} φ_i φ_j ds      (edge mass (L/6)[[2, 1], [1, 2]])
    b_l = ∫_{E_l} φ_i ds          (L/2 per edge endpoint)
    |E_l| = Σ edge lengths

The CEM block system in unknowns (u, U_1..U_L, λ) is

    [ K + Σ M_l/z_l    -B Z⁻¹        0 ] [u]   [0]
    [ -Z⁻¹ Bᵀ          diag(|E|/z)   1 ] [U] = [I]
    [ 0                1ᵀ            0 ] [λ]   [0]

with the last row fixing Σ U_l = 0. The PEM system closes K u = f with
cᵀu = 0, c_i = ∫_{∂Ω} φ_i ds.
"""
from dataclasses import dataclass
from typing import List

import numpy as np
import scipy.sparse as sp

from geometry.electrodes import electrode_center_nodes, electrode_edges
from geometry.models import ElectrodeConfig, Mesh


def assemble_stiffness(mesh: Mesh, sigma: np.ndarray) -> sp.csr_matrix:
    """Global P1 stiffness matrix for per-triangle conductivity `sigma`."""
    grads = mesh.basis_gradients
    local = np.einsum("mid,mjd->mij", grads, grads) * (mesh.areas * sigma)[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_nodes
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def element_energy_density(mesh: Mesh, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Per-triangle ∇u·∇w (constant on each triangle)."""
    return np.einsum("md,md->m", mesh.element_gradients(u), mesh.element_gradients(w))


@dataclass(frozen=True, eq=False)
class ElectrodeBlocks:
    """Boundary integrals of every electrode on one mesh."""
    edges: List[np.ndarray]
    mass: List[sp.csr_matrix]
    loads: sp.csc_matrix  # (N, L), column l = b_l
    lengths: np.ndarray   # (L,)
    center_nodes: np.ndarray


def _edge_mass(mesh: Mesh, edge_ids: np.ndarray) -> sp.csr_matrix:
    e = mesh.boundary_edges[edge_ids]
    length = mesh.boundary_edge_lengths[edge_ids]
    i, j = e[:, 0], e[:, 1]
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([i, j, j, i])
    vals = np.concatenate([length / 3.0, length / 3.0, length / 6.0, length / 6.0])
    n = mesh.n_nodes
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def _edge_load(mesh: Mesh, edge_ids: np.ndarray) -> np.ndarray:
    b = np.zeros(mesh.n_nodes)
    half = 0.5 * mesh.boundary_edge_lengths[edge_ids]
    np.add.at(b, mesh.boundary_edges[edge_ids, 0], half)
    np.add.at(b, mesh.boundary_edges[edge_ids, 1], half)
    return b


def assemble_electrode_blocks(mesh: Mesh, electrodes: ElectrodeConfig) -> ElectrodeBlocks:
    edges = electrode_edges(mesh, electrodes)
    loads = np.column_stack([_edge_load(mesh, ids) for ids in edges])
    return ElectrodeBlocks(
        edges=edges,
        mass=[_edge_mass(mesh, ids) for ids in edges],
        loads=sp.csc_matrix(loads),
        lengths=np.array([mesh.boundary_edge_lengths[ids].sum() for ids in edges]),
        center_nodes=electrode_center_nodes(mesh, electrodes),
    )


def assemble_cem_system(stiffness: sp.csr_matrix, blocks: ElectrodeBlocks, z: np.ndarray) -> sp.csc_matrix:
    """Gauged CEM matrix of size N + L + 1."""
    n_el = len(z)
    inv_z = 1.0 / np.asarray(z, dtype=float)
    top_left = stiffness + sum(m * w for m, w in zip(blocks.mass, inv_z))
    coupling = -(blocks.loads @ sp.diags(inv_z))
    electrode = sp.diags(blocks.lengths * inv_z)
    gauge = sp.csr_matrix(np.ones((1, n_el)))
    return sp.bmat(
        [
            [top_left, coupling, None],
            [coupling.T, electrode, gauge.T],
            [None, gauge, sp.csr_matrix((1, 1))],
        ],
        format="csc",
    )


def assemble_neumann_system(stiffness: sp.csr_matrix, boundary_weights: np.ndarray) -> sp.csc_matrix:
    """Stiffness bordered by the boundary-integral gauge row (size N + 1)."""
    c = sp.csr_matrix(boundary_weights.reshape(-1, 1))
    return sp.bmat([[stiffness, c], [c.T, sp.csr_matrix((1, 1))]], format="csc")
