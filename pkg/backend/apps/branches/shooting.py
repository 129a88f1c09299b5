"""
Newton shooting over initial-age traces.

The unknown of every steady-state problem is the trace at age 0; the
residual evolves the trace through the age interval and compares it with
the renewal integral. Jacobians are forward differences whose columns are
evolved together as one batch.
"""
from dataclasses import dataclass, field
from typing import Callable, Tuple

import numpy as np
import structlog

from apps.common.exceptions import ShootingDivergenceError, SolverError
from apps.common.monitoring import MetricsCollector
from apps.evolve.steppers import DEFAULT_STEPPER, StepperConfig

logger = structlog.get_logger(__name__)

BatchedResidual = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ShootingConfig:
    tol: float = 1e-10
    max_iter: int = 50
    fd_step: float = 1e-7
    ladder_start: float = 0.05
    max_backtracks: int = 30
    power_tol: float = 1e-12
    power_max_iter: int = 100_000
    stepper: StepperConfig = field(default_factory=lambda: DEFAULT_STEPPER)

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"shooting tolerance must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"shooting max_iter must be >= 1, got {self.max_iter}")


DEFAULT_SHOOTING = ShootingConfig()


def fd_jacobian(residual: BatchedResidual, x: np.ndarray,
                fd_step: float = 1e-7) -> Tuple[np.ndarray, np.ndarray]:
    """
    Forward-difference Jacobian of a batched residual at x.

    `residual` maps an (n, m) block of states to an (k, m) block of
    residuals. Column 0 of the batch is x itself, so one call yields both
    R(x) and the n difference columns. Returns (J, R(x)).
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    eps = fd_step * (1.0 + float(np.abs(x).max(initial=0.0)))
    batch = np.empty((n, n + 1))
    batch[:, 0] = x
    batch[:, 1:] = x[:, None] + eps * np.eye(n)
    values = residual(batch)
    base = values[:, 0]
    return (values[:, 1:] - base[:, None]) / eps, base


def newton_shooting(residual: BatchedResidual, guess: np.ndarray, cfg: ShootingConfig = DEFAULT_SHOOTING,
                    label: str = 'shooting', nonnegative: bool = True) -> Tuple[np.ndarray, int, float]:
    """
    Damped Newton iteration with finite-difference Jacobians.

    A step is accepted once it reduces the residual sup-norm (and keeps the
    iterate nonnegative when requested); otherwise it is halved. Converges
    when ||R||_inf <= tol * (1 + ||x||_inf).

    Returns (x, iterations, residual norm).
    """
    x = np.array(guess, dtype=float)
    norm = np.inf
    for iteration in range(cfg.max_iter + 1):
        jac, r = fd_jacobian(residual, x, cfg.fd_step)
        norm = float(np.abs(r).max())
        logger.debug("shooting_iteration", label=label, iteration=iteration, residual=norm)
        if norm <= cfg.tol * (1.0 + float(np.abs(x).max())):
            MetricsCollector.track_newton(label, iteration)
            return x, iteration, norm
        if iteration == cfg.max_iter or not np.isfinite(norm):
            break
        try:
            delta = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError as exc:
            raise ShootingDivergenceError(
                f"{label}: singular shooting Jacobian", {'iteration': iteration, 'residual': norm},
            ) from exc
        x = _backtrack(residual, x, delta, norm, cfg, nonnegative, label)
    raise ShootingDivergenceError(
        f"{label}: Newton shooting did not converge",
        {'iterations': cfg.max_iter, 'residual': norm},
    )


def _backtrack(residual: BatchedResidual, x: np.ndarray, delta: np.ndarray, norm: float,
               cfg: ShootingConfig, nonnegative: bool, label: str) -> np.ndarray:
    lam = 1.0
    for _ in range(cfg.max_backtracks):
        trial = x + lam * delta
        if nonnegative:
            trial = np.maximum(trial, 0.0)
        try:
            trial_norm = float(np.abs(residual(trial[:, None])[:, 0]).max())
        except SolverError:
            trial_norm = np.inf
        if trial_norm < norm:
            return trial
        lam *= 0.5
    raise ShootingDivergenceError(
        f"{label}: line search could not reduce the residual",
        {'residual': norm, 'last_step': lam},
    )
