"""
Semi-trivial branches: one species at a positive steady state, the other absent.

The trace Phi = u(0, .) solves Phi = param * AI(evolve_semitrivial(Phi, alpha)).
Below param = 1 the prey branch continues as a sign-flipped solution
w = -u >= 0 of the logistic equation with reversed self-interaction.
"""
from bisect import bisect_left
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np
import structlog
from scipy.optimize import brentq

from apps.common.exceptions import (
    BranchExtensionError,
    NoPositiveSolution,
    ShootingDivergenceError,
    SolverError,
)
from apps.evolve.steppers import evolve_semitrivial, evolve_semitrivial_flipped
from apps.grid.meshes import AgeField, BirthProfile, SpatialField
from apps.grid.operators import Discretization
from apps.spectral.radius import assemble_H, spectral_radius

from .shooting import DEFAULT_SHOOTING, ShootingConfig, newton_shooting

logger = structlog.get_logger(__name__)

# relative size below which a converged trace counts as the trivial root
TRIVIAL_TRACE = 1e-8


@dataclass(frozen=True, eq=False)
class SemiTrivialSolution:
    """
    One member of a semi-trivial branch.

    `field` is the computed nonnegative AgeField. For the sign-flipped prey
    branch (`flipped=True`) it holds w = -u, and `physical_field` returns u.
    """

    param: float
    alpha: float
    trace: SpatialField
    field: AgeField
    flipped: bool = False
    iterations: int = 0
    residual: float = 0.0

    @property
    def physical_field(self) -> AgeField:
        return -self.field if self.flipped else self.field

    @property
    def physical_trace(self) -> SpatialField:
        return -self.trace if self.flipped else self.trace

    def self_coefficient(self) -> AgeField:
        """alpha * field, with the sign that makes field the linear evolution of its own trace."""
        return (-self.alpha if self.flipped else self.alpha) * self.field

    def to_dict(self, disc: Discretization) -> Dict:
        return {
            'param': self.param,
            'alpha': self.alpha,
            'flipped': self.flipped,
            'norm': disc.age_space_norm(self.field),
            'trace_min': float(self.trace.min()),
            'trace_max': float(self.trace.max()),
            'iterations': self.iterations,
            'residual': self.residual,
        }


def identity_residual(disc: Discretization, b: BirthProfile, solution: SemiTrivialSolution,
                      cfg: ShootingConfig = DEFAULT_SHOOTING) -> float:
    """param * r(H_[alpha u]) - 1; vanishes on the branch at every resolution."""
    operator = assemble_H(disc, solution.self_coefficient(), b, label='alpha*u')
    radius = spectral_radius(operator, tol=cfg.power_tol, max_iter=cfg.power_max_iter).radius
    return solution.param * radius - 1.0


class SemitrivialBranch:
    """
    Converged solutions of one species' semi-trivial problem, keyed by parameter.

    New solves warm-start from the nearest cached parameter below; the first
    solve climbs a geometric ladder 1 + ladder_start * 2**j.
    """

    def __init__(self, disc: Discretization, b: BirthProfile, alpha: float,
                 cfg: ShootingConfig = DEFAULT_SHOOTING, species: str = 'u'):
        if not alpha > 0:
            raise ValueError(f"alpha must be > 0, got {alpha}")
        self.disc = disc
        self.b = b
        self.alpha = alpha
        self.cfg = cfg
        self.species = species
        self._params: List[float] = []
        self._solutions: Dict[float, SemiTrivialSolution] = {}
        self._flipped: Dict[float, SemiTrivialSolution] = {}

    # ------------------------------------------------------------------
    # shooting primitives
    # ------------------------------------------------------------------

    def _evolve(self, phi: np.ndarray, flipped: bool) -> np.ndarray:
        if flipped:
            return evolve_semitrivial_flipped(self.disc, phi, self.alpha, self.cfg.stepper)
        return evolve_semitrivial(self.disc, phi, self.alpha, self.cfg.stepper)

    def residual_function(self, param: float, flipped: bool = False) -> Callable[[np.ndarray], np.ndarray]:
        """Batched R(Phi) = Phi - param * AI(evolve(Phi))."""
        def residual(batch: np.ndarray) -> np.ndarray:
            return batch - param * self.disc.age_integral(self._evolve(batch, flipped), self.b)
        return residual

    def _radius_gap(self, param: float, amplitude: float, flipped: bool) -> float:
        """param * r(H_[+-alpha z]) - 1 for the trajectory z started from amplitude * e_1."""
        _, e1 = self.disc.principal
        z = self._evolve(amplitude * e1, flipped)
        h = (-self.alpha if flipped else self.alpha) * z
        radius = spectral_radius(assemble_H(self.disc, h, self.b), tol=self.cfg.power_tol,
                                 max_iter=self.cfg.power_max_iter).radius
        return param * radius - 1.0

    def initial_guess(self, param: float, flipped: bool = False) -> SpatialField:
        """
        s * e_1 with s the root of the scalar radius gap.

        The gap has the sign of param - 1 at s = 0 and changes sign once s
        is large enough; the bracket starts at 0.1 * |param - 1| and doubles.
        """
        _, e1 = self.disc.principal
        sign_at_zero = np.sign(param - 1.0)
        lo, hi = 0.0, 0.1 * abs(param - 1.0)
        for _ in range(60):
            try:
                gap = self._radius_gap(param, hi, flipped)
            except SolverError as exc:
                raise ShootingDivergenceError(
                    "amplitude bracket ran into a stepper failure",
                    {'param': param, 'amplitude': hi, 'cause': exc.message},
                ) from exc
            if np.sign(gap) != sign_at_zero:
                break
            lo, hi = hi, 2.0 * hi
        else:
            raise ShootingDivergenceError("could not bracket the initial amplitude", {'param': param})
        amplitude = brentq(lambda s: self._radius_gap(param, s, flipped), lo, hi,
                           xtol=1e-8 * hi, rtol=1e-8)
        logger.debug("initial_amplitude_bracketed", param=param, amplitude=amplitude, flipped=flipped)
        return amplitude * e1

    def shoot(self, param: float, guess: SpatialField, flipped: bool = False) -> SemiTrivialSolution:
        """Newton shooting from an explicit guess (no ladder, no cache)."""
        label = 'semitrivial_flipped' if flipped else 'semitrivial'
        trace, iterations, residual = newton_shooting(
            self.residual_function(param, flipped), guess, self.cfg, label=label,
        )
        if float(trace.max()) <= TRIVIAL_TRACE * (1.0 + float(np.abs(guess).max())):
            raise ShootingDivergenceError(
                "shooting collapsed onto the trivial solution",
                {'param': param, 'trace_max': float(trace.max())},
            )
        field_ = self._evolve(trace, flipped)
        return SemiTrivialSolution(param, self.alpha, trace, field_, flipped, iterations, residual)

    # ------------------------------------------------------------------
    # branch following
    # ------------------------------------------------------------------

    def ladder(self, param: float) -> List[float]:
        """Geometric rungs in param - 1 from 1 + ladder_start up to param."""
        rungs = []
        step = self.cfg.ladder_start
        while 1.0 + step < param:
            rungs.append(1.0 + step)
            step *= 2.0
        rungs.append(param)
        return rungs

    def _nearest_below(self, param: float) -> Optional[SemiTrivialSolution]:
        idx = bisect_left(self._params, param)
        if idx < len(self._params) and self._params[idx] == param:
            return self._solutions[param]
        return self._solutions[self._params[idx - 1]] if idx > 0 else None

    def _store(self, solution: SemiTrivialSolution):
        if solution.param not in self._solutions:
            self._params.insert(bisect_left(self._params, solution.param), solution.param)
        self._solutions[solution.param] = solution

    def solve(self, param: float) -> SemiTrivialSolution:
        """
        Positive solution at param > 1.

        Raises:
            NoPositiveSolution: param <= 1
            ShootingDivergenceError: Newton failed from both the warm start and the bracketed guess
        """
        if not param > 1.0:
            raise NoPositiveSolution(
                f"no positive semi-trivial solution for parameter {param} <= 1",
                {'param': param, 'species': self.species},
            )
        cached = self._nearest_below(param)
        if cached is not None and cached.param == param:
            return cached
        start = cached.param if cached is not None else 1.0
        rungs = [p for p in self.ladder(param) if p > start]
        previous = cached
        for rung in rungs:
            previous = self._solve_rung(rung, previous)
            self._store(previous)
        logger.info("semitrivial_converged", species=self.species, param=param,
                    iterations=previous.iterations, residual=previous.residual)
        return previous

    def _solve_rung(self, param: float, previous: Optional[SemiTrivialSolution]) -> SemiTrivialSolution:
        if previous is not None:
            try:
                return self.shoot(param, previous.trace)
            except ShootingDivergenceError as exc:
                logger.warning("warm_start_failed", species=self.species, param=param, error=exc.message)
        return self.shoot(param, self.initial_guess(param))

    def extend_below_one(self, eta: float) -> SemiTrivialSolution:
        """
        Sign-flipped member w = -u_eta >= 0 for eta slightly below 1.

        Walks down the ladder 1 - 0.005 * 2**j; when a rung fails the
        smallest eta reached is reported as the empirical end of the branch.
        """
        if not eta < 1.0:
            raise ValueError(f"extension below one needs eta < 1, got {eta}")
        if eta in self._flipped:
            return self._flipped[eta]
        rungs = []
        step = 0.005
        while 1.0 - step > eta:
            rungs.append(1.0 - step)
            step *= 2.0
        rungs.append(eta)
        previous: Optional[SemiTrivialSolution] = None
        smallest = None
        for rung in rungs:
            if rung in self._flipped:
                previous = self._flipped[rung]
                smallest = rung
                continue
            try:
                guess = previous.trace if previous is not None else self.initial_guess(rung, flipped=True)
                try:
                    previous = self.shoot(rung, guess, flipped=True)
                except ShootingDivergenceError:
                    if previous is None:
                        raise
                    previous = self.shoot(rung, self.initial_guess(rung, flipped=True), flipped=True)
            except SolverError as exc:
                logger.warning("branch_extension_stopped", eta=rung, smallest_reached=smallest,
                               error=exc.message)
                raise BranchExtensionError(
                    f"sign-flipped branch could not be continued to eta = {rung}",
                    smallest_reached=smallest, target=eta, cause=exc.message,
                ) from exc
            self._flipped[rung] = previous
            smallest = rung
        logger.info("branch_extended", eta=eta, norm=self.disc.age_space_norm(previous.field))
        return previous


def solve_semitrivial(disc: Discretization, b: BirthProfile, param: float, alpha: float,
                      cfg: ShootingConfig = DEFAULT_SHOOTING) -> SemiTrivialSolution:
    """Positive semi-trivial steady state for `param` (u_eta with alpha1, v_xi with beta1)."""
    return SemitrivialBranch(disc, b, alpha, cfg).solve(param)


def extend_semitrivial_below_one(disc: Discretization, b: BirthProfile, eta: float, alpha: float,
                                 cfg: ShootingConfig = DEFAULT_SHOOTING) -> SemiTrivialSolution:
    return SemitrivialBranch(disc, b, alpha, cfg).extend_below_one(eta)
