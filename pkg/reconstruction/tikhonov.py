"""
Tikhonov-regularised solve of S κ = b and the κ ↔ γ conversion.

    κ = argmin ‖Sκ - b‖² + α‖κ‖²
    κ_m = -(1/I)(γ_m/γ0² - 1/γ0)   ⇔   γ_m = γ0 - I·γ0²·κ_m
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from errors import EmptyInputError, ParameterError, SolverError
from reconstruction.sensitivity import SensitivitySystem

logger = logging.getLogger(__name__)

NORMAL_RESIDUAL_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class ReconImage:
    """
    kappa:       per-element κ over element_ids
    gamma:       per-element conductivity (S/m)
    normal_residual: ‖(SᵀS + αI)κ - Sᵀb‖ / ‖Sᵀb‖ of the solve
    """
    n: int
    element_ids: np.ndarray
    kappa: np.ndarray
    gamma: np.ndarray
    gamma0: float
    alpha: float
    current: float
    mesh_id: str
    normal_residual: float = 0.0


def kappa_to_gamma(kappa: np.ndarray, gamma0: float, current: float = 1.0) -> np.ndarray:
    return gamma0 - current * gamma0 ** 2 * np.asarray(kappa, dtype=float)


def gamma_to_kappa(gamma: np.ndarray, gamma0: float, current: float = 1.0) -> np.ndarray:
    return -(np.asarray(gamma, dtype=float) / gamma0 ** 2 - 1.0 / gamma0) / current


def _regularised_solve(gram: np.ndarray, alpha: float, rhs: np.ndarray, apply) -> np.ndarray:
    """Cholesky solve of (gram + αI) x = rhs with one refinement step; `apply` maps x to (gram + αI) x."""
    matrix = gram + alpha * np.eye(gram.shape[0])
    try:
        factor = cho_factor(matrix)
    except LinAlgError as exc:
        raise SolverError(f"Regularised normal matrix is not positive definite: {exc}") from exc
    x = cho_solve(factor, rhs)
    return x + cho_solve(factor, rhs - apply(x))


def normal_residual(S: np.ndarray, b: np.ndarray, alpha: float, kappa: np.ndarray) -> float:
    rhs = S.T @ b
    scale = np.linalg.norm(rhs)
    if scale == 0.0:
        return float(np.linalg.norm(S.T @ (S @ kappa) + alpha * kappa))
    return float(np.linalg.norm(S.T @ (S @ kappa - b) + alpha * kappa) / scale)


def solve_tikhonov(system: SensitivitySystem, alpha: Optional[float] = None) -> ReconImage:
    """
    Regularised least-squares image of one system.

    The smaller of the two Gram matrices is factorised: SSᵀ + αI (dual form)
    when there are fewer rows than elements, SᵀS + αI otherwise.

    Args:
        system: assembled sensitivity system
        alpha: regularisation; defaults to system.alpha

    Returns:
        ReconImage with κ and γ = γ0 - I·γ0²·κ

    Raises:
        ParameterError: alpha is not positive
        EmptyInputError: the system has no rows
    """
    alpha = system.alpha if alpha is None else float(alpha)
    if not np.isfinite(alpha) or alpha <= 0:
        raise ParameterError("Regularisation parameter must be positive", {"alpha": alpha})
    S, b = system.S, system.b
    rows, cols = S.shape
    if rows == 0:
        raise EmptyInputError("Sensitivity system has no valid rows", {"n": system.n})

    if not np.any(b):
        kappa = np.zeros(cols)
    elif rows < cols:
        y = _regularised_solve(S @ S.T, alpha, b, lambda x: S @ (S.T @ x) + alpha * x)
        kappa = S.T @ y
    else:
        kappa = _regularised_solve(S.T @ S, alpha, S.T @ b, lambda x: S.T @ (S @ x) + alpha * x)

    residual = normal_residual(S, b, alpha, kappa)
    if residual > NORMAL_RESIDUAL_TOLERANCE:
        logger.warning(f"Image n={system.n}: normal-equation residual {residual:.2e}")
    logger.info(f"Image n={system.n}: α={alpha:.3e}, ‖κ‖∞={np.max(np.abs(kappa)):.3e}")
    return ReconImage(
        n=system.n,
        element_ids=system.element_ids,
        kappa=kappa,
        gamma=kappa_to_gamma(kappa, system.gamma0, system.current),
        gamma0=system.gamma0,
        alpha=alpha,
        current=system.current,
        mesh_id=system.mesh_id,
        normal_residual=residual,
    )


def solution_operator_norm(system: SensitivitySystem, alpha: Optional[float] = None) -> float:
    """‖(SᵀS + αI)⁻¹Sᵀ‖∞, the largest κ produced per unit of ‖b‖∞."""
    alpha = system.alpha if alpha is None else float(alpha)
    S = system.S
    if S.shape[0] == 0:
        raise EmptyInputError("Sensitivity system has no valid rows", {"n": system.n})
    R = S.T @ np.linalg.solve(S @ S.T + alpha * np.eye(S.shape[0]), np.eye(S.shape[0]))
    return float(np.max(np.sum(np.abs(R), axis=1)))
