"""
Coexistence states and pseudo-arclength continuation.

Unknowns are the two initial-age traces and the active parameter mu (eta
with xi fixed, or xi with eta fixed):

    X = (u0, v0, mu),   F(X) = (u0 - eta AI(u), v0 - xi AI(v))

with (u, v) = evolve_coupled(u0, v0). Every Newton system is F bordered by
one linear constraint c . X = target: a pinned component of the vanishing
species for the launch, the arclength condition afterwards.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import structlog
from scipy.optimize import brentq

from apps.branches.points import BifurcationProblem, TangentData
from apps.branches.shooting import fd_jacobian
from apps.common.exceptions import CoefficientFloorError, ContinuationFailure, SolverError
from apps.common.monitoring import MetricsCollector
from apps.evolve.steppers import evolve_coupled
from apps.grid.meshes import AgeField, SpatialField

logger = structlog.get_logger(__name__)


class StopReason(str, Enum):
    NORM_CAP = 'NormCapReached'
    HIT_SEMITRIVIAL_U = 'HitSemitrivialU'
    HIT_SEMITRIVIAL_V = 'HitSemitrivialV'
    PARAM_EXITED_RANGE = 'ParamExitedRange'
    COEFFICIENT_FLOOR = 'CoefficientFloor'
    STEP_FAILURE = 'StepFailure'
    MAX_STEPS = 'MaxStepsReached'


@dataclass(frozen=True)
class ContinuationConfig:
    """
    Step control and stopping thresholds for branch continuation.

    The corrector accepts an iterate X = (u0, v0, mu) when
    ||F(X)||_inf <= tol * (1 + max|(u0, v0)|) and the arclength constraint
    holds to tol * (1 + |target|); the trace tolerance is relative to the
    size of the state, not absolute. `s0` overrides the launch amplitude
    (default 1e-2 * ||base trace||_inf, at least 1e-4).
    """

    s0: Optional[float] = None
    h_min: float = 1e-4
    h_max: float = 0.25
    norm_cap: float = 1e3
    pos_tol: float = 1e-8
    max_steps: int = 400
    mu_min: Optional[float] = None
    mu_max: Optional[float] = None
    tol: float = 1e-9
    max_corrector_iter: int = 8
    fast_iterations: int = 3
    growth: float = 1.3
    fd_step: float = 1e-7
    launch_halvings: int = 6

    def __post_init__(self):
        if not 0 < self.h_min <= self.h_max:
            raise ValueError(f"need 0 < h_min <= h_max, got {self.h_min}, {self.h_max}")
        if self.s0 is not None and not self.s0 > 0:
            raise ValueError(f"s0 must be > 0, got {self.s0}")
        if self.mu_min is not None and self.mu_max is not None and not self.mu_min < self.mu_max:
            raise ValueError(f"need mu_min < mu_max, got {self.mu_min}, {self.mu_max}")

    def launch_amplitude(self, base_trace: SpatialField) -> float:
        if self.s0 is not None:
            return self.s0
        return max(1e-2 * float(np.abs(base_trace).max()), 1e-4)


@dataclass(frozen=True, eq=False)
class CoexistenceState:
    u0: SpatialField
    v0: SpatialField
    mu: float
    mode: str
    fixed: float
    u: AgeField = field(repr=False)
    v: AgeField = field(repr=False)
    iterations: int = 0
    residual: float = 0.0
    anchor: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def eta(self) -> float:
        return self.mu if self.mode == 'eta' else self.fixed

    @property
    def xi(self) -> float:
        return self.fixed if self.mode == 'eta' else self.mu

    def vector(self) -> np.ndarray:
        return np.concatenate([self.u0, self.v0, [self.mu]])


@dataclass(frozen=True)
class BranchRecord:
    index: int
    s: float
    mu: float
    norm_u: float
    norm_v: float
    min_u0: float
    min_v0: float
    step: float
    newton_iters: int
    residual: float = 0.0

    CSV_COLUMNS = ('index', 's', 'mu', 'norm_u', 'norm_v', 'min_u0', 'min_v0', 'step', 'newton_iters')

    def as_row(self) -> Tuple:
        return tuple(getattr(self, name) for name in self.CSV_COLUMNS)


@dataclass(frozen=True, eq=False)
class BranchResult:
    records: List[BranchRecord]
    reason: StopReason
    terminal: CoexistenceState
    mode: str
    diagnostics: Dict = field(default_factory=dict)


# ============================================================================
# Residual and Jacobian
# ============================================================================

def trace_residual(problem: BifurcationProblem, eta: float, xi: float) -> Callable[[np.ndarray], np.ndarray]:
    """Batched F on blocks of stacked traces (u0; v0) of shape (2 n_x, m)."""
    disc, b = problem.disc, problem.b
    n = disc.n_x

    def evaluate(batch: np.ndarray) -> np.ndarray:
        u, v = evolve_coupled(disc, batch[:n], batch[n:], problem.params, problem.shooting.stepper)
        return np.concatenate([
            batch[:n] - eta * disc.age_integral(u, b),
            batch[n:] - xi * disc.age_integral(v, b),
        ])
    return evaluate


def residual(problem: BifurcationProblem, u0: SpatialField, v0: SpatialField,
             eta: float, xi: float) -> np.ndarray:
    """(u0 - eta AI(u), v0 - xi AI(v)) for the coupled evolution of (u0, v0)."""
    x = np.concatenate([u0, v0])
    return trace_residual(problem, eta, xi)(x[:, None])[:, 0]


def jacobian(problem: BifurcationProblem, u0: SpatialField, v0: SpatialField,
             eta: float, xi: float, fd_step: float = 1e-7) -> np.ndarray:
    """Dense forward-difference Jacobian of `residual` in the traces."""
    jac, _ = fd_jacobian(trace_residual(problem, eta, xi), np.concatenate([u0, v0]), fd_step)
    return jac


# ============================================================================
# Bordered Newton corrector
# ============================================================================

class BranchTracer:
    """
    Continuation of coexistence states in one parameter.

    mode 'eta' varies eta with xi = fixed; mode 'xi' varies xi with eta = fixed.
    """

    def __init__(self, problem: BifurcationProblem, mode: str, fixed: float,
                 cfg: ContinuationConfig = ContinuationConfig()):
        if mode not in ('eta', 'xi'):
            raise ValueError(f"mode must be 'eta' or 'xi', got {mode!r}")
        self.problem = problem
        self.mode = mode
        self.fixed = fixed
        self.cfg = cfg
        self.n = problem.disc.n_x
        h_x = problem.disc.space.h_x
        self.weights = np.concatenate([np.full(2 * self.n, h_x), [1.0]])

    def parameters(self, mu: float) -> Tuple[float, float]:
        return (mu, self.fixed) if self.mode == 'eta' else (self.fixed, mu)

    def wnorm(self, x: np.ndarray) -> float:
        return float(np.sqrt(np.sum(self.weights * x * x)))

    def _residual(self, x: np.ndarray) -> np.ndarray:
        eta, xi = self.parameters(x[-1])
        return trace_residual(self.problem, eta, xi)(x[:-1, None])[:, 0]

    def _jacobian(self, x: np.ndarray) -> np.ndarray:
        """[dF/d(u0, v0) | dF/dmu]; the mu column is exact since F is affine in mu."""
        mu = x[-1]
        eta, xi = self.parameters(mu)
        jac, f = fd_jacobian(trace_residual(self.problem, eta, xi), x[:-1], self.cfg.fd_step)
        dmu = np.zeros(2 * self.n)
        if self.mode == 'eta':
            dmu[:self.n] = (f[:self.n] - x[:self.n]) / mu
        else:
            dmu[self.n:] = (f[self.n:] - x[self.n:2 * self.n]) / mu
        return np.column_stack([jac, dmu])

    def correct(self, guess: np.ndarray, row: np.ndarray, target: float) -> Tuple[np.ndarray, int, float]:
        """Newton on F(X) = 0, row . X = target. Returns (X, iterations, ||F||_inf)."""
        x = np.array(guess, dtype=float)
        norm = np.inf
        for iteration in range(self.cfg.max_corrector_iter + 1):
            if not x[-1] > 0:
                raise ContinuationFailure("corrector drove the parameter to a nonpositive value",
                                          {'mu': float(x[-1])})
            f = self._residual(x)
            g = float(row @ x) - target
            norm = float(np.abs(f).max())
            scale = 1.0 + float(np.abs(x[:-1]).max())
            if norm <= self.cfg.tol * scale and abs(g) <= self.cfg.tol * (1.0 + abs(target)):
                MetricsCollector.track_newton('continuation', iteration)
                return x, iteration, norm
            if iteration == self.cfg.max_corrector_iter or not np.isfinite(norm):
                break
            system = np.vstack([self._jacobian(x), row])
            try:
                delta = np.linalg.solve(system, -np.append(f, g))
            except np.linalg.LinAlgError as exc:
                raise ContinuationFailure("singular bordered system", {'mu': float(x[-1])}) from exc
            x = x + delta
        raise ContinuationFailure(
            "corrector did not converge",
            {'mu': float(x[-1]), 'residual': norm, 'iterations': self.cfg.max_corrector_iter},
        )

    def state(self, x: np.ndarray, iterations: int, residual_norm: float,
              anchor: Optional[np.ndarray] = None) -> CoexistenceState:
        u0, v0 = x[:self.n].copy(), x[self.n:2 * self.n].copy()
        u, v = evolve_coupled(self.problem.disc, u0, v0, self.problem.params,
                              self.problem.shooting.stepper)
        return CoexistenceState(u0, v0, float(x[-1]), self.mode, self.fixed, u, v,
                                iterations, residual_norm, anchor)

    # ------------------------------------------------------------------
    # launch
    # ------------------------------------------------------------------

    def first_step_off_bifurcation(self, tangent: TangentData, s0: Optional[float] = None) -> CoexistenceState:
        """
        Amplitude-pinned Newton off the bifurcation point.

        The vanishing component is pinned at the node where the tangent
        peaks: its trace value there is fixed to s0 times the tangent peak,
        rather than constraining ||u0||_inf (or ||v0||_inf) to equal s0. The
        guess is base + s0 * tangent direction at mu = tangent value. On
        failure s0 is halved up to `launch_halvings` times.
        """
        if tangent.mu != self.mode:
            raise ValueError(f"tangent varies {tangent.mu!r}, tracer varies {self.mode!r}")
        base_u, base_v = tangent.base_traces()
        du, dv = tangent.direction()
        anchor = np.concatenate([base_u, base_v, [tangent.value]])
        node = int(np.argmax(tangent.eigen_trace))
        pinned = node if tangent.vanishing == 'u' else self.n + node
        row = np.zeros(2 * self.n + 1)
        row[pinned] = 1.0
        amplitude = s0 if s0 is not None else self.cfg.launch_amplitude(tangent.base.trace)
        last_error: Optional[SolverError] = None
        for attempt in range(self.cfg.launch_halvings + 1):
            guess = np.concatenate([base_u + amplitude * du, base_v + amplitude * dv, [tangent.value]])
            target = amplitude * float(tangent.eigen_trace[node])
            try:
                x, iterations, norm = self.correct(guess, row, target)
            except SolverError as exc:
                last_error = exc
            else:
                if np.all(x[:2 * self.n] > 0):
                    logger.info("branch_launched", kind=tangent.kind, amplitude=amplitude,
                                mu=float(x[-1]), iterations=iterations)
                    return self.state(x, iterations, norm, anchor=anchor)
                last_error = ContinuationFailure("launch state is not positive",
                                                 {'min_trace': float(x[:2 * self.n].min())})
            logger.warning("launch_retry", kind=tangent.kind, attempt=attempt, amplitude=amplitude,
                           error=last_error.message)
            amplitude *= 0.5
        raise ContinuationFailure(
            f"could not leave the bifurcation point {tangent.kind} = {tangent.value}",
            {'reason': StopReason.STEP_FAILURE.value, 'last_amplitude': 2.0 * amplitude,
             'cause': last_error.message if last_error else None},
        )

    # ------------------------------------------------------------------
    # continuation
    # ------------------------------------------------------------------

    def record(self, index: int, s: float, state: CoexistenceState, step: float) -> BranchRecord:
        disc = self.problem.disc
        return BranchRecord(
            index=index, s=s, mu=state.mu,
            norm_u=disc.age_space_norm(state.u), norm_v=disc.age_space_norm(state.v),
            min_u0=float(state.u0.min()), min_v0=float(state.v0.min()),
            step=step, newton_iters=state.iterations, residual=state.residual,
        )

    def _vanished(self, state: CoexistenceState) -> Optional[StopReason]:
        scale = 1.0 + max(float(np.abs(state.u0).max()), float(np.abs(state.v0).max()))
        threshold = self.cfg.pos_tol * scale
        if state.u0.min() < threshold:
            return StopReason.HIT_SEMITRIVIAL_U
        if state.v0.min() < threshold:
            return StopReason.HIT_SEMITRIVIAL_V
        return None

    def _outside_window(self, mu: float) -> bool:
        if self.cfg.mu_min is not None and mu < self.cfg.mu_min:
            return True
        return self.cfg.mu_max is not None and mu > self.cfg.mu_max

    def _refine_crossing(self, current: np.ndarray, tangent: np.ndarray, h: float,
                         reason: StopReason, fallback: CoexistenceState,
                         solution: Tuple[np.ndarray, int, float]) -> CoexistenceState:
        """Step length at which the mean of the vanishing component is zero."""
        part = slice(0, self.n) if reason == StopReason.HIT_SEMITRIVIAL_U else slice(self.n, 2 * self.n)
        row = self.weights * tangent
        solved: Dict[float, Tuple[np.ndarray, int, float]] = {h: solution}

        def corrected(length: float):
            if length not in solved:
                solved[length] = self.correct(current + length * tangent, row, float(row @ current) + length)
            return solved[length]

        def mean_component(length: float) -> float:
            return float(corrected(length)[0][part].mean())

        try:
            if mean_component(h) >= 0.0:
                return fallback
            root = brentq(mean_component, 0.0, h, xtol=1e-10 * h, rtol=1e-12)
            x, iterations, norm = corrected(root)
        except (SolverError, ValueError) as exc:
            logger.warning("crossing_refinement_failed", reason=reason.value, error=str(exc))
            return fallback
        return self.state(x, iterations, norm)

    def continue_branch(self, start: CoexistenceState, previous: Optional[np.ndarray] = None) -> BranchResult:
        """
        Secant predictor, pseudo-arclength corrector, adaptive step.

        The secant of the first step runs from `previous` (default: the
        launch anchor) to the start state.
        """
        cfg = self.cfg
        prev = start.anchor if previous is None else previous
        if prev is None:
            raise ValueError("continuation needs a previous point or a launch anchor")
        cur = start.vector()
        current = start
        s = self.wnorm(cur - prev)
        h = min(max(s, cfg.h_min), cfg.h_max)
        records = [self.record(0, s, start, h)]
        reason = StopReason.MAX_STEPS
        last_error: Optional[SolverError] = None
        while len(records) < cfg.max_steps:
            secant = cur - prev
            tangent = secant / self.wnorm(secant)
            row = self.weights * tangent
            try:
                x, iterations, norm = self.correct(cur + h * tangent, row, float(row @ cur) + h)
                candidate = self.state(x, iterations, norm)
            except SolverError as exc:
                MetricsCollector.track_step(False)
                last_error = exc
                h *= 0.5
                logger.warning("continuation_step_halved", mu=float(cur[-1]), step=h, error=exc.message)
                if h < cfg.h_min:
                    reason = (StopReason.COEFFICIENT_FLOOR if isinstance(exc, CoefficientFloorError)
                              else StopReason.STEP_FAILURE)
                    break
                continue
            MetricsCollector.track_step(True)
            vanished = self._vanished(candidate)
            if vanished is not None:
                current = self._refine_crossing(cur, tangent, h, vanished, candidate,
                                                (x, iterations, norm))
                s += self.wnorm(current.vector() - cur)
                records.append(self.record(len(records), s, current, h))
                reason = vanished
                break
            s += h
            records.append(self.record(len(records), s, candidate, h))
            prev, cur, current = cur, x, candidate
            norm_uv = float(np.hypot(records[-1].norm_u, records[-1].norm_v))
            if norm_uv > cfg.norm_cap:
                reason = StopReason.NORM_CAP
                break
            if self._outside_window(candidate.mu):
                reason = StopReason.PARAM_EXITED_RANGE
                break
            if iterations <= cfg.fast_iterations:
                h = min(h * cfg.growth, cfg.h_max)
        diagnostics = {
            'steps': len(records),
            'final_step': h,
            'norm_cap': cfg.norm_cap,
            'pos_tol': cfg.pos_tol,
            'mu_window': [cfg.mu_min, cfg.mu_max],
        }
        if last_error is not None and reason in (StopReason.STEP_FAILURE, StopReason.COEFFICIENT_FLOOR):
            diagnostics['cause'] = last_error.to_dict()
        logger.info("branch_terminated", mode=self.mode, fixed=self.fixed, reason=reason.value,
                    steps=len(records), mu=current.mu)
        return BranchResult(records, reason, current, self.mode, diagnostics)


def first_step_off_bifurcation(problem: BifurcationProblem, tangent: TangentData,
                               cfg: ContinuationConfig = ContinuationConfig(),
                               s0: Optional[float] = None) -> CoexistenceState:
    """Launch state s0 away from the bifurcation point; see `BranchTracer.first_step_off_bifurcation`."""
    fixed = tangent.xi if tangent.mu == 'eta' else tangent.eta
    return BranchTracer(problem, tangent.mu, fixed, cfg).first_step_off_bifurcation(tangent, s0)


def continue_branch(problem: BifurcationProblem, start: CoexistenceState,
                    cfg: ContinuationConfig = ContinuationConfig(),
                    previous: Optional[np.ndarray] = None) -> BranchResult:
    return BranchTracer(problem, start.mode, start.fixed, cfg).continue_branch(start, previous)
