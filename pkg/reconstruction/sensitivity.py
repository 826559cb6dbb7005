"""
Sensitivity system S κ = b of one pattern set.

Row (k, l) of S over the elements D_m of the reconstruction domain:

    S[(k,l), m] = ∫_{D_m} ∇v_k·∇v_l / V_kl - ∇v_ref·∇v_ref' / V_ref dx

where v_k is the γ ≡ 1 point-electrode field of drive pair k, v_l the field of
measure pair l used as a drive, and V the matching reference voltage. The
gradients are constant per triangle so the integral is exact. b holds the
frame's B values of the same rows.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular
from scipy.optimize import brentq

from errors import DataMismatchError, DegenerateError, DependencyError, EstimationError, ParameterError
from forward.fem_assembly import element_energy_density
from forward.measurements import measure
from forward.models import PEM, Pattern, PotentialField
from forward.solvers import ForwardSolver, worker_count
from geometry.models import Mesh
from measurements.frames import DEGENERATE_V, MeasurementFrame
from measurements.patterns import PatternSet
from reconstruction.recon_domain import ReconDomain

logger = logging.getLogger(__name__)

Drive = Tuple[int, int]

DEFAULT_LAMBDA = 1e-2
# whitened residual norm sought by the discrepancy rule, in units of sqrt(rows)
DISCREPANCY_TAU = 1.0


@dataclass(frozen=True, eq=False)
class SensitivitySystem:
    """
    S:           (rows, N_T) sensitivity matrix, valid non-reference patterns only
    b:           (rows,) B values aligned with S
    patterns:    pattern of every row
    element_ids: triangle id of every column
    gamma0:      background conductivity estimate (S/m)
    alpha:       default regularisation for this system
    noise_sigma: U noise deviation the rows were whitened with; None for raw rows
    """
    n: int
    S: np.ndarray
    b: np.ndarray
    patterns: Tuple[Pattern, ...]
    element_ids: np.ndarray
    gamma0: float
    alpha: float
    current: float
    mesh_id: str
    dropped: int = 0
    noise_sigma: Optional[float] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.S.shape

    def with_data(self, b: np.ndarray) -> "SensitivitySystem":
        b = np.asarray(b, dtype=float)
        if b.shape != self.b.shape:
            raise ParameterError("Data vector does not match the system rows",
                                 {"rows": len(self.b), "given": len(b)})
        return SensitivitySystem(
            n=self.n, S=self.S, b=b, patterns=self.patterns, element_ids=self.element_ids,
            gamma0=self.gamma0, alpha=self.alpha, current=self.current,
            mesh_id=self.mesh_id, dropped=self.dropped, noise_sigma=self.noise_sigma,
        )


def estimate_gamma0(frame: MeasurementFrame) -> float:
    """
    Background conductivity from the reference record: G of the most closely
    spaced pattern, which senses mostly the outermost layer.

    Raises:
        EstimationError: the reference record is invalid
    """
    valid = frame.valid
    G = frame.G
    if len(G) == 0 or not valid[0] or not np.isfinite(G[0]) or G[0] <= 0:
        raise EstimationError("Reference record is invalid; cannot estimate the background conductivity",
                              {"n": frame.n if len(G) else None})
    return float(G[0])


def default_alpha(S: np.ndarray, lam: float = DEFAULT_LAMBDA) -> float:
    """α = λ·trace(SᵀS)/N_T."""
    if S.size == 0:
        return float("nan")
    return float(lam * np.sum(S * S) / S.shape[1])


def discrepancy_alpha(S: np.ndarray, b: np.ndarray, target: float) -> float:
    """
    α at which the Tikhonov residual ‖Sκ_α - b‖ equals `target`.

    The residual grows monotonically with α, so the root is bracketed between
    α = s_max²·1e-14 and α = s_max²·1e6 and found in log α. When even the
    largest α leaves the residual below target the data are indistinguishable
    from noise and that largest α is returned; when the smallest α already
    exceeds it, the smallest is returned.
    """
    if S.size == 0:
        return float("nan")
    U, s, _ = np.linalg.svd(S, full_matrices=False)
    beta = U.T @ b
    outside = max(float(b @ b - beta @ beta), 0.0)
    s2 = s ** 2

    def excess(log_alpha: float) -> float:
        alpha = np.exp(log_alpha)
        return float(np.sqrt(np.sum((alpha / (s2 + alpha) * beta) ** 2) + outside) - target)

    scale = np.log(s2.max())
    lo, hi = scale + np.log(1e-14), scale + np.log(1e6)
    if excess(hi) <= 0.0:
        logger.info(f"Data within the noise level (‖b‖={np.linalg.norm(b):.3e}, target {target:.3e})")
        return float(np.exp(hi))
    if excess(lo) >= 0.0:
        return float(np.exp(lo))
    return float(np.exp(brentq(excess, lo, hi, xtol=1e-6)))


def noise_whitener(V: np.ndarray, ref_v: float, sigma: float) -> np.ndarray:
    """
    Lower Cholesky factor of Cov(b) when every U carries independent noise of
    deviation σ: Cov(b) = σ²(diag(1/V²) + 11ᵀ/V_ref²), the reference record
    entering every row.
    """
    V = np.asarray(V, dtype=float)
    cov = sigma ** 2 * (np.diag(1.0 / V ** 2) + 1.0 / ref_v ** 2)
    try:
        return cholesky(cov, lower=True)
    except LinAlgError as exc:
        raise DegenerateError(f"Noise covariance is not positive definite: {exc}") from exc


def _pair_field(nodal: np.ndarray, pair: Drive, solver: ForwardSolver) -> PotentialField:
    return PotentialField(
        nodal_values=nodal,
        electrode_values=nodal[solver.center_nodes],
        drive=pair,
        model=PEM,
        current=solver.current,
        mesh_id=solver.mesh.mesh_id,
    )


def neumann_v_fields(solver: ForwardSolver, pairs: Iterable[Drive]) -> Dict[Drive, PotentialField]:
    """
    γ ≡ 1 point-electrode fields v_(a,b) = I·(N_a - N_b) for every pair, from
    one discrete Neumann function per electrode involved.
    """
    pairs = list(dict.fromkeys(tuple(p) for p in pairs))
    electrodes = sorted({k for p in pairs for k in p})
    with ThreadPoolExecutor(max_workers=worker_count(len(electrodes))) as pool:
        neumann = dict(zip(electrodes, pool.map(solver.neumann_field, electrodes)))
    current = solver.current
    return {
        (a, b): _pair_field(current * (neumann[a] - neumann[b]), (a, b), solver)
        for a, b in pairs
    }


def v_fields_for_patterns(solver: ForwardSolver, patterns: PatternSet) -> Dict[Drive, PotentialField]:
    """Every drive and measure pair of the set (reference included)."""
    return neumann_v_fields(solver, patterns.drive_pairs() + patterns.measure_pairs())


def _lookup(v_fields: Mapping[Drive, PotentialField], pair: Drive) -> PotentialField:
    if pair in v_fields:
        return v_fields[pair]
    swapped = (pair[1], pair[0])
    if swapped in v_fields:
        return -v_fields[swapped]
    raise DependencyError(f"No v-field for electrode pair {pair}", {"pair": pair})


def _row_density(mesh: Mesh, v_fields: Mapping[Drive, PotentialField], pattern: Pattern,
                 cache: Dict) -> Tuple[np.ndarray, float]:
    """Per-triangle ∇v_k·∇v_l and V_kl for one pattern."""
    v_k = _lookup(v_fields, pattern.drive)
    v_l = _lookup(v_fields, pattern.measure)
    key = (pattern.drive, pattern.measure)
    if key not in cache:
        cache[key] = element_energy_density(mesh, v_k.nodal_values, v_l.nodal_values)
    return cache[key], measure(v_k, *pattern.measure)


def assemble_sensitivity(
    domain: ReconDomain,
    v_fields: Mapping[Drive, PotentialField],
    patterns: PatternSet,
    frame: MeasurementFrame,
    gamma0: Optional[float] = None,
    lam: float = DEFAULT_LAMBDA,
    noise_sigma: Optional[float] = None,
    tau: float = DISCREPANCY_TAU,
) -> SensitivitySystem:
    """
    Build S and b for one pattern set over its reconstruction domain.

    Args:
        domain: reconstruction domain on the v-field mesh
        v_fields: γ ≡ 1 fields keyed by electrode pair (a reversed pair is negated)
        patterns: pattern set of the frame
        frame: measurement frame giving b = B and validity
        gamma0: background conductivity; defaults to the frame estimate
        lam: λ of the default α
        noise_sigma: deviation of the noise on U; when given, rows and data are
            whitened with the noise covariance of b and α follows the
            discrepancy rule ‖Sκ - b‖ = τ·sqrt(rows) instead of λ
        tau: discrepancy factor

    Returns:
        SensitivitySystem over the valid non-reference rows

    Raises:
        DependencyError: a pair has no v-field
        DataMismatchError: frame and pattern set disagree
    """
    mesh = domain.mesh
    if frame.n != patterns.n or len(frame.table) != len(patterns.all_patterns):
        raise DataMismatchError("Frame does not belong to this pattern set",
                                {"frame_n": frame.n, "patterns_n": patterns.n})
    for pair, field in v_fields.items():
        if field.mesh_id != mesh.mesh_id:
            raise DataMismatchError("v-field lives on a different mesh", {"pair": pair})
    if gamma0 is None:
        gamma0 = estimate_gamma0(frame)

    cache: Dict = {}
    ref_density, ref_v = _row_density(mesh, v_fields, patterns.reference, cache)
    if abs(ref_v) <= DEGENERATE_V:
        raise DegenerateError("Reference pattern has a vanishing reference voltage", {"n": patterns.n})
    ids = domain.element_ids
    areas = mesh.areas[ids]
    ref_row = areas * ref_density[ids] / ref_v

    frame_valid = frame.valid
    B = frame.B
    rows, data, kept, voltages = [], [], [], []
    dropped = 0
    for idx, pattern in enumerate(patterns.all_patterns):
        if idx == 0:
            continue
        density, V = _row_density(mesh, v_fields, pattern, cache)
        if not frame_valid[idx] or abs(V) <= DEGENERATE_V:
            dropped += 1
            continue
        rows.append(areas * density[ids] / V - ref_row)
        data.append(B[idx])
        kept.append(pattern)
        voltages.append(V)
    if dropped:
        logger.info(f"System n={patterns.n}: dropped {dropped} invalid or degenerate row(s)")

    S = np.array(rows, dtype=float).reshape(len(rows), len(ids))
    if not np.all(np.isfinite(S)):
        raise DataMismatchError("Sensitivity matrix has non-finite entries", {"n": patterns.n})
    b = np.asarray(data, dtype=float)
    whitened = noise_sigma is not None and noise_sigma > 0 and len(rows) > 0
    if whitened:
        L = noise_whitener(np.asarray(voltages), ref_v, noise_sigma)
        S = solve_triangular(L, S, lower=True)
        b = solve_triangular(L, b, lower=True)
        alpha = discrepancy_alpha(S, b, tau * np.sqrt(len(b)))
    else:
        alpha = default_alpha(S, lam)
    system = SensitivitySystem(
        n=patterns.n,
        S=S,
        b=b,
        patterns=tuple(kept),
        element_ids=ids,
        gamma0=float(gamma0),
        alpha=alpha,
        current=frame.provenance.get("current", 1.0) or 1.0,
        mesh_id=mesh.mesh_id,
        dropped=dropped,
        noise_sigma=float(noise_sigma) if whitened else None,
    )
    logger.info(f"System n={patterns.n}: {S.shape[0]} rows x {S.shape[1]} elements, γ0={system.gamma0:.4g}, "
                f"α={alpha:.3e}" + (" (whitened, discrepancy rule)" if whitened else ""))
    return system


def sensitivity_row(domain: ReconDomain, v_fields: Mapping[Drive, PotentialField],
                  pattern: Pattern, reference: Pattern) -> np.ndarray:
    """One row of S for an arbitrary pattern against a reference (zero when pattern == reference)."""
    mesh = domain.mesh
    cache: Dict = {}
    ids = domain.element_ids
    d, V = _row_density(mesh, v_fields, pattern, cache)
    d_ref, V_ref = _row_density(mesh, v_fields, reference, cache)
    return mesh.areas[ids] * (d[ids] / V - d_ref[ids] / V_ref)


def predicted_b(
    mesh: Mesh,
    sigma: np.ndarray,
    gamma0: float,
    u_fields: Mapping[Drive, PotentialField],
    v_fields: Mapping[Drive, PotentialField],
    patterns: Sequence[Pattern],
    reference: Pattern,
    elements: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Exact integral form of B for point-electrode data on one mesh:

        B = -∫ β (∇u_k·∇v_l / V_kl - ∇u_ref·∇v_ref' / V_ref),  β = (γ/γ0 - 1)/I

    β vanishes wherever γ = γ0, so `elements` may restrict the integral to the
    region below a homogeneous outermost layer.

    Args:
        mesh: shared mesh of the u- and v-fields
        sigma: per-triangle true conductivity
        gamma0: conductivity of the eliminated outermost region
        u_fields: point-electrode fields with sigma, keyed by drive pair
        v_fields: γ ≡ 1 fields keyed by electrode pair
        patterns: patterns to evaluate
        reference: reference pattern
        elements: triangles to integrate over (all by default)

    Returns:
        B per pattern
    """
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (mesh.n_triangles,))
    if elements is None:
        elements = np.arange(mesh.n_triangles)
    ref_u = _lookup(u_fields, reference.drive)
    current = ref_u.current
    beta = (sigma[elements] / gamma0 - 1.0) / current
    weight = beta * mesh.areas[elements]

    def term(pattern: Pattern) -> np.ndarray:
        u_k = _lookup(u_fields, pattern.drive)
        v_k = _lookup(v_fields, pattern.drive)
        v_l = _lookup(v_fields, pattern.measure)
        density = element_energy_density(mesh, u_k.nodal_values, v_l.nodal_values)[elements]
        return density / measure(v_k, *pattern.measure)

    ref_term = term(reference)
    return np.array([-float(np.sum(weight * (term(p) - ref_term))) for p in patterns])
