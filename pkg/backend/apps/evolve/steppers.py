"""
Discrete evolution operators in age.

Every stepper is backward Euler with the coefficient sampled at the new
age level:

    (I - da L + da diag(h_{k+1})) z_{k+1} = z_k (+ da f_{k+1})

Linear steppers accept a batch of initial traces of shape (n_x, m) and
share one factorization per step across the batch. Nonlinear steppers
stack the batch trajectory-major and solve one block-diagonal Newton
system per step.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
import structlog
from scipy.sparse.linalg import spsolve, splu

from apps.branches.params import ModelParams
from apps.common.exceptions import (
    CoefficientFloorError,
    PositivityGuardError,
    ShapeMismatchError,
    StepperDivergenceError,
)
from apps.common.monitoring import MetricsCollector
from apps.grid.meshes import AgeField, SpatialField
from apps.grid.operators import Discretization

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class StepperConfig:
    tol: float = 1e-12
    max_iter: int = 20
    diffusion_floor: float = 0.5

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"stepper tolerance must be > 0, got {self.tol}")
        if not 0 < self.diffusion_floor <= 1:
            raise ValueError(f"diffusion floor must lie in (0, 1], got {self.diffusion_floor}")


DEFAULT_STEPPER = StepperConfig()


# ============================================================================
# Coefficient paths and guards
# ============================================================================

def coefficient_path(disc: Discretization, coeff) -> AgeField:
    """Broadcast a scalar, a spatial profile or an AgeField to shape (n_a + 1, n_x)."""
    coeff = np.asarray(coeff, dtype=float)
    shape = (disc.n_a + 1, disc.n_x)
    try:
        return np.broadcast_to(coeff, shape)
    except ValueError as exc:
        raise ShapeMismatchError(f"coefficient of shape {coeff.shape} does not fit {shape}") from exc


def check_positivity_guard(disc: Discretization, coeff: AgeField, name: str = 'h'):
    """da * max(0, -min h) < 1 over the levels actually used (1..n_a)."""
    worst = max(0.0, -float(np.min(coeff[1:])))
    bound = disc.da * worst
    if bound >= 1.0:
        needed = int(np.ceil(disc.ages.a_m * worst)) + 1
        raise PositivityGuardError(
            f"da*max(0,-min {name}) = {bound:.6g} violates the bound < 1; "
            f"refine the age grid to n_a >= {needed}",
            {'da': disc.da, 'min_coefficient': -worst, 'bound': bound, 'n_a_required': needed},
        )


def check_diffusion_floor(disc: Discretization, d: AgeField, floor: float):
    lowest = float(np.min(d[1:]))
    if lowest < floor:
        raise CoefficientFloorError(
            f"diffusion multiplier dropped to {lowest:.6g}, below the floor {floor}",
            {'min_multiplier': lowest, 'floor': floor},
        )


def _batched(phi: np.ndarray, n_x: int) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if phi.shape[0] != n_x or phi.ndim > 2:
        raise ShapeMismatchError(f"trace of shape {phi.shape} does not fit n_x = {n_x}")
    return phi


# ============================================================================
# Linear steppers
# ============================================================================

def _step_matrix(disc: Discretization, c_row: np.ndarray, d_row: Optional[np.ndarray] = None):
    lap = disc.laplacian.matrix
    if d_row is not None and not np.all(d_row == 1.0):
        lap = lap @ sp.diags(d_row)
    eye = sp.identity(disc.n_x, format='csr')
    return (eye - disc.da * lap + disc.da * sp.diags(c_row)).tocsc()


def _march(disc: Discretization, phi: np.ndarray, c: AgeField,
           d: Optional[AgeField] = None, forcing: Optional[np.ndarray] = None) -> np.ndarray:
    out = np.empty((disc.n_a + 1,) + phi.shape)
    out[0] = phi
    for k in range(disc.n_a):
        lu = splu(_step_matrix(disc, c[k + 1], None if d is None else d[k + 1]),
                  permc_spec='NATURAL')
        rhs = out[k]
        if forcing is not None:
            f_next = forcing[k + 1]
            if f_next.ndim < rhs.ndim:
                f_next = f_next[:, None]
            rhs = rhs + disc.da * f_next
        out[k + 1] = lu.solve(np.ascontiguousarray(rhs))
    return out


def evolve_linear(disc: Discretization, h, phi: SpatialField) -> AgeField:
    """
    Linear propagator: z_0 = phi, (I - da L + da diag(h_{k+1})) z_{k+1} = z_k.

    Nonnegative phi gives nonnegative output (M-matrix steps).

    Raises:
        PositivityGuardError: da * max(0, -min h) >= 1
    """
    h = coefficient_path(disc, h)
    check_positivity_guard(disc, h)
    return _march(disc, _batched(phi, disc.n_x), h)


def evolve_conservative(disc: Discretization, d, c, phi: SpatialField,
                        floor: float = DEFAULT_STEPPER.diffusion_floor) -> AgeField:
    """
    Divergence-form propagator:
    (I - da L diag(d_{k+1}) + da diag(c_{k+1})) z_{k+1} = z_k.
    """
    d = coefficient_path(disc, d)
    c = coefficient_path(disc, c)
    check_diffusion_floor(disc, d, floor)
    check_positivity_guard(disc, c, 'c')
    return _march(disc, _batched(phi, disc.n_x), c, d=d)


def evolve_duhamel(disc: Discretization, h, f: np.ndarray, phi=0.0) -> AgeField:
    """
    Forced propagator: (I - da L + da diag(h_{k+1})) z_{k+1} = z_k + da f_{k+1}.

    With phi = 0 this is the discrete variation-of-constants integral of f.
    """
    h = coefficient_path(disc, h)
    check_positivity_guard(disc, h)
    f = np.asarray(f, dtype=float)
    if f.shape[0] != disc.n_a + 1 or f.shape[1] != disc.n_x:
        raise ShapeMismatchError(f"forcing of shape {f.shape} does not fit the grid")
    phi = np.array(np.broadcast_to(np.asarray(phi, dtype=float), f.shape[1:]))
    return _march(disc, _batched(phi, disc.n_x), h, forcing=f)


# ============================================================================
# Nonlinear steppers
# ============================================================================

def _stack(z: np.ndarray) -> Tuple[np.ndarray, int]:
    """(n_x,) or (n_x, m) -> trajectory-major flat vector and m."""
    if z.ndim == 1:
        return z.copy(), 1
    return z.T.ravel(), z.shape[1]


def _unstack(flat: np.ndarray, like: np.ndarray) -> np.ndarray:
    if like.ndim == 1:
        return flat
    return flat.reshape(like.shape[1], like.shape[0]).T


def _column_max(flat: np.ndarray, m: int) -> np.ndarray:
    """Largest magnitude of each trajectory in a stacked vector."""
    return np.abs(flat).reshape(m, -1).max(axis=1, initial=0.0)


def semitrivial_step(disc: Discretization, prev: np.ndarray, coeff: float,
                     cfg: StepperConfig = DEFAULT_STEPPER, step: int = 0) -> Tuple[np.ndarray, int]:
    """
    One implicit step z - da L z + da*coeff*z*z = prev, solved by Newton.

    Every column of a batch converges on its own scale 1 + max|prev| and is
    frozen once it has, so its result does not depend on its neighbours.
    coeff < 0 is the sign-flipped prey problem; its Jacobian must stay an
    M-matrix, which is checked on every iterate.
    """
    target, m = _stack(np.asarray(prev, dtype=float))
    da = disc.da
    eye = sp.identity(target.size, format='csr')
    a_lin = (eye - da * disc.laplacian.tiled(m)).tocsr()
    scale = 1.0 + _column_max(target, m)
    z = target.copy()
    residual = np.inf
    for iteration in range(cfg.max_iter + 1):
        residual_vec = a_lin @ z + da * coeff * z * z - target
        column_residual = _column_max(residual_vec, m)
        residual = float(column_residual.max(initial=0.0))
        done = column_residual <= cfg.tol * scale
        if done.all():
            return _unstack(z, prev), iteration
        if iteration == cfg.max_iter or not np.isfinite(residual):
            break
        if coeff < 0 and 2.0 * da * (-coeff) * float(z.max(initial=0.0)) >= 1.0:
            raise PositivityGuardError(
                "sign-flipped step lost its M-matrix structure; refine the age grid",
                {'step': step, 'da': da, 'max_value': float(z.max())},
            )
        jac = (a_lin + sp.diags(2.0 * da * coeff * z)).tocsc()
        delta = spsolve(jac, residual_vec)
        delta[np.repeat(done, target.size // m)] = 0.0
        z = z - delta
    raise StepperDivergenceError(
        f"per-step Newton failed at age step {step}", step=step, residual=residual,
    )


def _semitrivial_march(disc: Discretization, phi: np.ndarray, coeff: float,
                       cfg: StepperConfig) -> np.ndarray:
    out = np.empty((disc.n_a + 1,) + phi.shape)
    out[0] = phi
    iterations = 0
    for k in range(disc.n_a):
        out[k + 1], used = semitrivial_step(disc, out[k], coeff, cfg, step=k + 1)
        iterations += used
    MetricsCollector.track_newton('semitrivial_step', iterations)
    return out


def evolve_semitrivial(disc: Discretization, phi: SpatialField, alpha: float,
                       cfg: StepperConfig = DEFAULT_STEPPER) -> AgeField:
    """
    Single-species logistic evolution:
    u_{k+1} - da L u_{k+1} + da*alpha*u_{k+1}^2 = u_k.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    return _semitrivial_march(disc, _batched(phi, disc.n_x), alpha, cfg)


def evolve_semitrivial_flipped(disc: Discretization, phi: SpatialField, alpha: float,
                               cfg: StepperConfig = DEFAULT_STEPPER) -> AgeField:
    """w_{k+1} - da L w_{k+1} - da*alpha*w_{k+1}^2 = w_k (w = -u below eta = 1)."""
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    return _semitrivial_march(disc, _batched(phi, disc.n_x), -alpha, cfg)


def coupled_step(disc: Discretization, u_prev: np.ndarray, v_prev: np.ndarray,
                 params: ModelParams, cfg: StepperConfig = DEFAULT_STEPPER,
                 step: int = 0) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    One fully implicit step of the cross-diffusion system, joint Newton on
    (u, v):

        u - da L((1 + gamma v) u) + da (alpha1 u^2 + alpha2 u v) = u_prev
        v - da L v + da (beta1 v^2 - beta2 v u) = v_prev

    A column with v = 0 (or u = 0) keeps that component exactly zero, so the
    same path covers the semi-trivial columns. Columns converge one by one as
    in `semitrivial_step`.
    """
    u_prev = np.asarray(u_prev, dtype=float)
    v_prev = np.asarray(v_prev, dtype=float)
    target_u, m = _stack(u_prev)
    target_v, _ = _stack(v_prev)
    n = target_u.size
    da = disc.da
    lap = disc.laplacian.tiled(m)
    eye = sp.identity(n, format='csr')
    a_v = (eye - da * lap).tocsr()
    scale = 1.0 + np.maximum(_column_max(target_u, m), _column_max(target_v, m))
    a1, a2, b1, b2, g = params.alpha1, params.alpha2, params.beta1, params.beta2, params.gamma

    width = n // m
    # a species absent from a column stays absent
    u_absent = np.repeat(_column_max(target_u, m) == 0.0, width)
    v_absent = np.repeat(_column_max(target_v, m) == 0.0, width)
    u, v = target_u.copy(), target_v.copy()
    residual = np.inf
    for iteration in range(cfg.max_iter + 1):
        f_u = u - da * (lap @ ((1.0 + g * v) * u)) + da * (a1 * u * u + a2 * u * v) - target_u
        f_v = a_v @ v + da * (b1 * v * v - b2 * v * u) - target_v
        column_residual = np.maximum(_column_max(f_u, m), _column_max(f_v, m))
        residual = float(column_residual.max(initial=0.0))
        done = column_residual <= cfg.tol * scale
        if done.all():
            u_next, v_next = _unstack(u, u_prev), _unstack(v, v_prev)
            _check_floor_values(v_next, params, cfg, step)
            return u_next, v_next, iteration
        if iteration == cfg.max_iter or not np.isfinite(residual):
            break
        j_uu = eye - da * (lap @ sp.diags(1.0 + g * v)) + da * sp.diags(2.0 * a1 * u + a2 * v)
        j_uv = -da * (lap @ sp.diags(g * u)) + da * sp.diags(a2 * u)
        j_vu = sp.diags(-da * b2 * v)
        j_vv = a_v + da * sp.diags(2.0 * b1 * v - b2 * u)
        jac = sp.bmat([[j_uu, j_uv], [j_vu, j_vv]], format='csc')
        delta = spsolve(jac, np.concatenate([f_u, f_v]))
        frozen = np.repeat(done, width)
        delta[:n][frozen | u_absent] = 0.0
        delta[n:][frozen | v_absent] = 0.0
        u = u - delta[:n]
        v = v - delta[n:]
    raise StepperDivergenceError(
        f"coupled Newton failed at age step {step}", step=step, residual=float(residual),
    )


def _check_floor_values(v: np.ndarray, params: ModelParams, cfg: StepperConfig, step: int):
    if params.gamma > 0 and v.size:
        lowest = 1.0 + params.gamma * float(np.min(v))
        if lowest < cfg.diffusion_floor:
            raise CoefficientFloorError(
                f"1 + gamma*v = {lowest:.6g} below the floor {cfg.diffusion_floor} at age step {step}",
                {'step': step, 'min_multiplier': lowest, 'floor': cfg.diffusion_floor},
            )


def evolve_coupled(disc: Discretization, phi_u: SpatialField, phi_v: SpatialField,
                   params: ModelParams, cfg: StepperConfig = DEFAULT_STEPPER) -> Tuple[AgeField, AgeField]:
    """
    Coupled nonlinear evolution from the traces (phi_u, phi_v).

    Returns the prey and predator AgeFields; batched traces give batched
    fields.
    """
    phi_u = _batched(phi_u, disc.n_x)
    phi_v = _batched(phi_v, disc.n_x)
    if phi_u.shape != phi_v.shape:
        raise ShapeMismatchError(f"trace shapes differ: {phi_u.shape} vs {phi_v.shape}")
    _check_floor_values(phi_v, params, cfg, 0)
    u_out = np.empty((disc.n_a + 1,) + phi_u.shape)
    v_out = np.empty_like(u_out)
    u_out[0], v_out[0] = phi_u, phi_v
    iterations = 0
    for k in range(disc.n_a):
        u_out[k + 1], v_out[k + 1], used = coupled_step(disc, u_out[k], v_out[k], params, cfg, step=k + 1)
        iterations += used
    MetricsCollector.track_newton('coupled_step', iterations)
    return u_out, v_out
