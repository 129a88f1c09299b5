"""
Single rows of the parameter sweeps.

Each function solves one parameter value and always returns a JSON-ready
dict; solver failures become marked rows instead of propagating, so one bad
value never sinks a table.
"""
import math
from typing import Any, Dict

import numpy as np
import structlog

from apps.branches.points import (
    BifurcationProblem,
    delta_estimate,
    eta0,
    eta1,
    find_xi1,
    scan_xi1,
    xi0,
)
from apps.branches.semitrivial import identity_residual
from apps.common.exceptions import SolverError
from apps.common.monitoring import MetricsCollector

from .config import RunConfig

logger = structlog.get_logger(__name__)

SEMITRIVIAL_COLUMNS = ('param', 'norm', 'trace_min', 'trace_max', 'identity_residual', 'iterations',
                       'restart_spread', 'status')
BIFPOINT_KINDS = ('eta0', 'eta1', 'xi0', 'xi1-scan', 'delta')
OK = 'ok'
# random restarts per semi-trivial row
UNIQUENESS_RESTARTS = 3


def restart_spread(problem: BifurcationProblem, species: str, param: float, seed: int,
                   restarts: int = UNIQUENESS_RESTARTS) -> float:
    """
    Largest sup-norm distance between the branch trace and Newton solutions
    started from seeded random positive multiples of it.
    """
    branch = problem.prey if species == 'u' else problem.predator
    reference = branch.solve(param).trace
    rng = np.random.default_rng(seed)
    spread = 0.0
    for _ in range(restarts):
        guess = reference * (0.7 + 0.6 * rng.random(reference.size))
        spread = max(spread, float(np.abs(branch.shoot(param, guess).trace - reference).max()))
    return spread


def semitrivial_row(problem: BifurcationProblem, species: str, param: float, seed: int = 0) -> Dict[str, Any]:
    """
    One row of the semi-trivial table: norms, trace range, |param r(H_[alpha z]) - 1|
    and the spread of solutions restarted from `seed`-drawn guesses.
    """
    branch = problem.prey if species == 'u' else problem.predator
    try:
        solution = branch.solve(param)
        residual = identity_residual(problem.disc, problem.b, solution, problem.shooting)
    except SolverError as exc:
        MetricsCollector.track_failure(exc)
        logger.warning("semitrivial_row_failed", species=species, param=param,
                       error=exc.__class__.__name__, message=exc.message)
        return {
            'param': param, 'norm': math.nan, 'trace_min': math.nan, 'trace_max': math.nan,
            'identity_residual': math.nan, 'iterations': 0, 'restart_spread': math.nan,
            'status': exc.__class__.__name__,
        }
    try:
        spread = restart_spread(problem, species, param, seed)
    except SolverError as exc:
        logger.warning("restart_failed", species=species, param=param, seed=seed, message=exc.message)
        spread = math.inf
    summary = solution.to_dict(problem.disc)
    return {
        'param': param,
        'norm': summary['norm'],
        'trace_min': summary['trace_min'],
        'trace_max': summary['trace_max'],
        'identity_residual': abs(residual),
        'iterations': solution.iterations,
        'restart_spread': spread,
        'status': OK,
    }


def _eta0_row(problem: BifurcationProblem, run: RunConfig, xi: float) -> Dict[str, Any]:
    value, tangent = eta0(problem, xi)
    return {'value': value, 'diagnostics': tangent.to_dict()}


def _eta1_row(problem: BifurcationProblem, run: RunConfig, xi: float) -> Dict[str, Any]:
    value, tangent = eta1(problem, xi, run.ranges.eta_max)
    back = xi0(problem, value)
    return {'value': value, 'diagnostics': {**tangent.to_dict(), 'xi0_of_eta1': back,
                                            'xi0_consistency': abs(back - xi)}}


def _xi0_row(problem: BifurcationProblem, run: RunConfig, eta: float) -> Dict[str, Any]:
    value = xi0(problem, eta)
    return {'value': value, 'diagnostics': {'in_unit_interval': 0.0 < value < 1.0,
                                            'predation_radius': 1.0 / value}}


def _xi1_scan_row(problem: BifurcationProblem, run: RunConfig, eta: float) -> Dict[str, Any]:
    scan = scan_xi1(problem, eta, run.ranges.xi_scan.grid)
    roots = [find_xi1(problem, eta, lower, upper) for lower, upper in scan.sign_changes]
    return {'value': roots[0] if roots else None, 'diagnostics': {**scan.to_dict(), 'roots': roots}}


def _delta_row(problem: BifurcationProblem, run: RunConfig, eta_max: float) -> Dict[str, Any]:
    estimate = delta_estimate(problem, eta_max)
    return {'value': estimate.value, 'diagnostics': estimate.to_dict()}


LOCATORS = {
    'eta0': _eta0_row,
    'eta1': _eta1_row,
    'xi0': _xi0_row,
    'xi1-scan': _xi1_scan_row,
    'delta': _delta_row,
}


def bifurcation_row(problem: BifurcationProblem, run: RunConfig, which: str, value: float) -> Dict[str, Any]:
    """Locate one bifurcation quantity; `value` is the fixed parameter it depends on."""
    if which not in LOCATORS:
        raise ValueError(f"unknown bifurcation quantity {which!r}; expected one of {BIFPOINT_KINDS}")
    try:
        located = LOCATORS[which](problem, run, value)
    except SolverError as exc:
        MetricsCollector.track_failure(exc)
        logger.warning("bifurcation_row_failed", which=which, input=value,
                       error=exc.__class__.__name__, message=exc.message)
        return {'which': which, 'input': value, 'value': None, 'status': exc.__class__.__name__,
                'diagnostics': exc.to_dict()}
    return {'which': which, 'input': value, 'status': OK, **located}
