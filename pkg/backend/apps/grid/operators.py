"""
Discrete operators on the meshes: Dirichlet Laplacian, its principal
eigenpair, the b-weighted age integral and the age x space norms.
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np
import scipy.sparse as sp
import structlog
from scipy.sparse.linalg import splu

from apps.common.exceptions import ShapeMismatchError, SpectralConvergenceError

from .meshes import AgeField, AgeGrid, BirthProfile, SpatialField, SpatialGrid

logger = structlog.get_logger(__name__)


class DirichletLaplacian:
    """
    Second-difference operator with Dirichlet elimination.

    Consumers only use `matrix`, `apply` and `tiled`, so another domain
    can provide the same interface without touching the steppers.
    """

    def __init__(self, grid: SpatialGrid):
        self.grid = grid
        n = grid.n_x
        r = 1.0 / grid.h_x ** 2
        self.matrix = sp.diags(
            [np.full(n - 1, r), np.full(n, -2.0 * r), np.full(n - 1, r)],
            [-1, 0, 1],
            format='csr',
        )

    @property
    def size(self) -> int:
        return self.grid.n_x

    def apply(self, z: np.ndarray) -> np.ndarray:
        """L z for z of shape (n_x,) or (n_x, m)."""
        return self.matrix @ z

    def tiled(self, m: int) -> sp.csr_matrix:
        """Block-diagonal copy acting on m trajectories stacked trajectory-major."""
        if m == 1:
            return self.matrix
        return sp.kron(sp.identity(m, format='csr'), self.matrix, format='csr')

    def closed_form_eigenvalue(self) -> float:
        h = self.grid.h_x
        return (2.0 / h ** 2) * (1.0 - np.cos(np.pi * h))


def build_laplacian(grid: SpatialGrid) -> DirichletLaplacian:
    return DirichletLaplacian(grid)


def principal_eigenpair(laplacian: DirichletLaplacian, tol: float = 1e-12,
                        max_iter: int = 1000) -> Tuple[float, SpatialField]:
    """
    Principal eigenpair of -L by inverse power iteration.

    Returns (lambda_1, e_1) with e_1 > 0 and ||e_1||_inf = 1. The residual
    ||-L e - lambda e||_inf is measured relative to lambda, so the stopping
    test does not loosen as the grid is refined.
    """
    neg_l = (-laplacian.matrix).tocsc()
    lu = splu(neg_l, permc_spec='NATURAL')
    x = np.ones(laplacian.size)
    lam = 0.0
    residual = np.inf
    for iteration in range(1, max_iter + 1):
        y = lu.solve(x)
        y /= np.abs(y).max()
        lam = float(y @ (neg_l @ y)) / float(y @ y)
        residual = float(np.abs(neg_l @ y - lam * y).max()) / lam
        step = float(np.abs(y - x).max())
        x = y
        if residual <= tol or step <= tol:
            logger.debug("laplacian_eigenpair_converged", iterations=iteration, residual=residual)
            return lam, x
    raise SpectralConvergenceError(
        "inverse power iteration for the Laplacian did not converge",
        {'iterations': max_iter, 'residual': residual},
    )


def age_integral(f: np.ndarray, b: BirthProfile, ages: AgeGrid) -> np.ndarray:
    """
    sum_k w_k b_k f_k over the leading (age) axis.

    Works for AgeFields and their batched variants; trailing axes are kept.
    """
    f = np.asarray(f, dtype=float)
    if b.values.shape[0] != ages.n_a + 1:
        raise ShapeMismatchError(
            f"birth profile has {b.values.shape[0]} samples, age grid has {ages.n_a + 1} nodes"
        )
    if f.ndim == 0 or f.shape[0] != ages.n_a + 1:
        raise ShapeMismatchError(
            f"field has leading dimension {f.shape[0] if f.ndim else 0}, expected {ages.n_a + 1}"
        )
    return np.tensordot(ages.weights * b.values, f, axes=(0, 0))


@dataclass(frozen=True)
class Discretization:
    """Everything a solver needs to know about the meshes."""

    space: SpatialGrid
    ages: AgeGrid

    @classmethod
    def build(cls, n_x: int, n_a: int, a_m: float = 1.0) -> 'Discretization':
        return cls(SpatialGrid(n_x), AgeGrid(n_a, a_m))

    @cached_property
    def laplacian(self) -> DirichletLaplacian:
        return build_laplacian(self.space)

    @cached_property
    def principal(self) -> Tuple[float, SpatialField]:
        """(lambda_1, e_1) of -L, computed once per discretization."""
        return principal_eigenpair(self.laplacian)

    @property
    def n_x(self) -> int:
        return self.space.n_x

    @property
    def n_a(self) -> int:
        return self.ages.n_a

    @property
    def da(self) -> float:
        return self.ages.da

    def age_integral(self, f: np.ndarray, b: BirthProfile) -> np.ndarray:
        return age_integral(f, b, self.ages)

    def space_norm(self, z: SpatialField) -> float:
        """Discrete L2 norm over Omega."""
        return float(np.sqrt(self.space.h_x * np.sum(np.asarray(z) ** 2)))

    def age_space_norm(self, f: AgeField) -> float:
        """Discrete L2 norm over J x Omega (trapezoid in age)."""
        f = np.asarray(f)
        per_age = self.space.h_x * np.sum(f.reshape(f.shape[0], -1) ** 2, axis=1)
        return float(np.sqrt(self.ages.weights @ per_age))

    def zeros(self) -> AgeField:
        return np.zeros((self.n_a + 1, self.n_x))
