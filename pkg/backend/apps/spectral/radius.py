"""
Nonlocal operators H_[h], G_xi and their Perron roots.

Both operators are dense n_x x n_x matrices assembled column by column:
column j is the b-weighted age integral of the propagator applied to the
j-th unit trace. All columns are evolved as one batch.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import structlog
from numpy.typing import NDArray

from apps.branches.params import ModelParams
from apps.common.exceptions import InvalidBirthProfileError, SpectralConvergenceError
from apps.common.monitoring import MetricsCollector
from apps.evolve.steppers import DEFAULT_STEPPER, evolve_conservative, evolve_linear
from apps.grid.meshes import AgeField, BirthProfile, SpatialField
from apps.grid.operators import Discretization

logger = structlog.get_logger(__name__)

POWER_TOL = 1e-12
POWER_MAX_ITER = 100_000


@dataclass(frozen=True, eq=False)
class NonlocalOperator:
    matrix: NDArray[np.float64]
    provenance: str

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def scaled(self, factor: float) -> 'NonlocalOperator':
        return NonlocalOperator(factor * self.matrix, f"{factor!r}*{self.provenance}")


@dataclass(frozen=True, eq=False)
class SpectralResult:
    radius: float
    eigvec: SpatialField
    iterations: int
    residual: float


def assemble_H(disc: Discretization, h, b: BirthProfile, label: str = 'h') -> NonlocalOperator:
    """H_[h] = sum_k w_k b_k Pi_[h](a_k, 0), one column per unit trace."""
    columns = evolve_linear(disc, h, np.eye(disc.n_x))
    return NonlocalOperator(disc.age_integral(columns, b), f"H[{label}]")


def assemble_G(disc: Discretization, v_xi: AgeField, params: ModelParams, b: BirthProfile,
               floor: float = DEFAULT_STEPPER.diffusion_floor) -> NonlocalOperator:
    """G_xi built from the divergence-form propagator with d = 1 + gamma v, c = alpha2 v."""
    v_xi = np.asarray(v_xi, dtype=float)
    columns = evolve_conservative(
        disc, 1.0 + params.gamma * v_xi, params.alpha2 * v_xi, np.eye(disc.n_x), floor=floor,
    )
    return NonlocalOperator(disc.age_integral(columns, b), "G[v_xi]")


def spectral_radius(operator: NonlocalOperator, tol: float = POWER_TOL,
                    max_iter: int = POWER_MAX_ITER) -> SpectralResult:
    """
    Perron root by power iteration from the all-ones vector.

    Iterates are normalized in the sup norm; convergence when successive
    iterates differ by at most tol.
    """
    matrix = operator.matrix if isinstance(operator, NonlocalOperator) else np.asarray(operator)
    x = np.ones(matrix.shape[0])
    radius = 0.0
    change = np.inf
    for iteration in range(1, max_iter + 1):
        y = matrix @ x
        radius = float(np.abs(y).max())
        if radius == 0.0:
            break
        y /= radius
        change = float(np.abs(y - x).max())
        x = y
        if change <= tol:
            residual = float(np.abs(matrix @ x - radius * x).max())
            MetricsCollector.track_newton('power_iteration', iteration)
            logger.debug("power_iteration_converged", iterations=iteration, radius=radius,
                         residual=residual)
            return SpectralResult(radius, x, iteration, residual)
    residual = float(np.abs(matrix @ x - radius * x).max())
    raise SpectralConvergenceError(
        "power iteration exhausted its iteration budget (near-degenerate spectral gap?)",
        {'iterations': max_iter, 'last_change': change, 'residual': residual},
    )


def normalize_birth(disc: Discretization, b_raw: BirthProfile,
                    tol: float = POWER_TOL) -> Tuple[BirthProfile, float]:
    """
    Scale the raw birth shape so that r(H_[0]) = 1 on this grid.

    Returns the normalized profile and the constant c = 1 / r(H_[0] for b_raw).
    """
    if not np.any(b_raw.values > 0):
        raise InvalidBirthProfileError("birth profile is identically zero")
    result = spectral_radius(assemble_H(disc, 0.0, b_raw, label='0'), tol=tol)
    c = 1.0 / result.radius
    logger.info("birth_profile_normalized", constant=c, raw_radius=result.radius,
                n_x=disc.n_x, n_a=disc.n_a)
    return b_raw.scaled(c), c


def continuum_normalization_constant(lambda_1: float, a_m: float = 1.0) -> float:
    """c for b_raw = 1 in the continuum: lambda_1 / (1 - exp(-lambda_1 a_m))."""
    return lambda_1 / (1.0 - np.exp(-lambda_1 * a_m))
