"""
Study services behind the management commands.

Each service takes a validated RunConfig, runs one study and returns a
ServiceResponse; solver errors are caught here, logged and turned into
error responses with diagnostics. Writing files is left to the commands.
"""
from dataclasses import replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import structlog
from celery import group

from apps.branches.points import BifurcationProblem
from apps.common.exceptions import AgebifError, SolverError
from apps.common.monitoring import MetricsCollector
from apps.common.services import ServiceResponse
from apps.continuation.scenarios import Scenario, ScenarioResult, run_scenario
from apps.dynamics.simulation import (
    PopulationState,
    simulate,
    small_state,
    steady_state_distance,
)
from apps.spectral.radius import (
    assemble_H,
    continuum_normalization_constant,
    normalize_birth,
    spectral_radius,
)

from .config import RunConfig, build_discretization, build_problem, raw_birth_profile
from .rows import BIFPOINT_KINDS, OK, SEMITRIVIAL_COLUMNS
from .tasks import bifurcation_point, semitrivial_table_row

logger = structlog.get_logger(__name__)

OVERLAY_SAMPLES = 6
TRAJECTORY_COLUMNS = ('t', 'norm_u', 'norm_v', 'distance')


def _fan_out(signatures) -> List[Dict[str, Any]]:
    """Run a group of task signatures and return results in submission order."""
    return group(signatures).apply_async().get()


class NormalizationService:
    """Birth normalization report: lambda_1, c, r(H_[0]) and the continuum comparison"""

    @classmethod
    def report(cls, run: RunConfig) -> ServiceResponse:
        try:
            disc = build_discretization(run)
            b_raw = raw_birth_profile(run, disc)
            b, constant = normalize_birth(disc, b_raw, tol=run.shooting.power_tol)
            check = spectral_radius(assemble_H(disc, 0.0, b, label='0'),
                                    tol=run.shooting.power_tol, max_iter=run.shooting.power_max_iter)
        except AgebifError as exc:
            MetricsCollector.track_failure(exc)
            logger.error("normalization_failed", error=exc.__class__.__name__, message=exc.message)
            return ServiceResponse.from_exception(exc)

        lambda_1 = disc.principal[0]
        data = {
            'n_x': disc.n_x,
            'n_a': disc.n_a,
            'a_m': disc.ages.a_m,
            'birth_shape': run.birth.shape,
            'lambda_1': lambda_1,
            'lambda_1_closed_form': disc.laplacian.closed_form_eigenvalue(),
            'lambda_1_continuum': float(np.pi ** 2),
            'constant': constant,
            'normalized_radius': check.radius,
            'normalized_radius_error': abs(check.radius - 1.0),
        }
        warnings = []
        if run.birth.shape == 'constant':
            continuum = continuum_normalization_constant(np.pi ** 2, disc.ages.a_m) / run.birth.scale
            data['constant_continuum'] = continuum
            data['constant_relative_error'] = abs(constant - continuum) / continuum
        else:
            warnings.append("the continuum constant has a closed form for a constant birth profile only")
        logger.info("normalization_reported", constant=constant, radius=check.radius)
        return ServiceResponse.success_response(data, warnings)


class SemitrivialService:
    """Semi-trivial table over the configured parameter range"""

    COLUMNS = SEMITRIVIAL_COLUMNS

    @classmethod
    def table(cls, run: RunConfig, species: str = 'u', params: Optional[Sequence[float]] = None) -> ServiceResponse:
        if params is None:
            params = run.ranges.eta if species == 'u' else run.ranges.xi
        logger.info("semitrivial_table_started", species=species, params=list(params))
        try:
            rows = _fan_out(semitrivial_table_row.s(run.source, species, float(p)) for p in params)
        except AgebifError as exc:
            logger.error("semitrivial_table_failed", species=species, error=exc.__class__.__name__,
                         message=exc.message)
            return ServiceResponse.from_exception(exc)
        failed = [row['param'] for row in rows if row['status'] != OK]
        warnings = [f"no solution for {species} at param = {p}" for p in failed]
        return ServiceResponse.success_response({'species': species, 'rows': rows}, warnings)


class BifurcationPointService:
    """Bifurcation parameters with convergence diagnostics"""

    KINDS = BIFPOINT_KINDS

    @classmethod
    def default_values(cls, run: RunConfig, which: str) -> List[float]:
        if which in ('eta0', 'eta1'):
            return list(run.ranges.xi)
        if which == 'xi0':
            return list(run.ranges.eta)
        if which == 'xi1-scan':
            return [run.study.eta]
        return [run.ranges.eta_max]

    @classmethod
    def locate(cls, run: RunConfig, which: str, values: Optional[Sequence[float]] = None) -> ServiceResponse:
        if which not in cls.KINDS:
            return ServiceResponse.error_response(f"unknown bifurcation quantity {which!r}", exit_code=2)
        values = cls.default_values(run, which) if values is None else list(values)
        logger.info("bifurcation_points_started", which=which, values=values)
        try:
            rows = _fan_out(bifurcation_point.s(run.source, which, float(value)) for value in values)
        except AgebifError as exc:
            logger.error("bifurcation_points_failed", which=which, error=exc.__class__.__name__,
                         message=exc.message)
            return ServiceResponse.from_exception(exc)
        warnings = [f"{which} at {row['input']}: {row['status']}" for row in rows if row['status'] != OK]
        return ServiceResponse.success_response({'which': which, 'results': rows}, warnings)


class BranchService:
    """Branch continuation from a bifurcation point, with endpoint classification"""

    @classmethod
    def trace(cls, run: RunConfig, scenario: Scenario) -> ServiceResponse:
        try:
            problem, _ = build_problem(run)
            result = run_scenario(problem, scenario, run.study.eta, run.study.xi, run.continuation,
                                  eta_max=run.ranges.eta_max, xi_grid=run.ranges.xi_scan.grid)
        except AgebifError as exc:
            MetricsCollector.track_failure(exc)
            logger.error("branch_failed", scenario=scenario.value, error=exc.__class__.__name__,
                         message=exc.message)
            return ServiceResponse.from_exception(exc)

        summary = result.summary()
        warnings = []
        if not result.report.classified:
            warnings.append(f"endpoint unclassified: {result.report.label}")
        return ServiceResponse.success_response({
            'records': result.branch.records,
            'summary': summary,
            'mu_label': result.branch.mode,
            'overlays': cls.overlays(problem, result),
        }, warnings)

    @classmethod
    def overlays(cls, problem: BifurcationProblem, result: ScenarioResult) -> List[Dict[str, Any]]:
        """Semi-trivial norms over the traced parameter window."""
        records = result.branch.records
        if not records:
            return []
        disc = problem.disc
        mus = [record.mu for record in records]
        lo, hi = min(mus), max(mus)
        mode = result.branch.mode
        fixed = result.branch.terminal.fixed
        overlays = []

        fixed_branch = problem.v_xi if mode == 'eta' else problem.u_eta
        if fixed > 1.0:
            try:
                norm = disc.age_space_norm(fixed_branch(fixed).field)
                name = f"||v|| predator-only (xi={fixed:g})" if mode == 'eta' else f"||u|| prey-only (eta={fixed:g})"
                overlays.append({'label': name, 'mu': [lo, hi], 'norm': [norm, norm]})
            except SolverError as exc:
                logger.warning("overlay_skipped", branch='fixed', error=exc.message)

        varying_branch = problem.u_eta if mode == 'eta' else problem.v_xi
        start = max(lo, 1.0 + 1e-3)
        if hi > start:
            mu_grid, norms = [], []
            for mu in np.linspace(start, hi, OVERLAY_SAMPLES):
                try:
                    norms.append(disc.age_space_norm(varying_branch(float(mu)).field))
                except SolverError as exc:
                    logger.warning("overlay_point_skipped", mu=float(mu), error=exc.message)
                    continue
                mu_grid.append(float(mu))
            if mu_grid:
                name = '||u|| prey-only' if mode == 'eta' else '||v|| predator-only'
                overlays.append({'label': name, 'mu': mu_grid, 'norm': norms})
        return overlays


class SimulationService:
    """Time integration from a selected initial state and the distance to its steady target"""

    @classmethod
    def initial_state(cls, run: RunConfig, problem: BifurcationProblem, init: str):
        """Initial state, steady target and the (eta, xi) the simulation runs at."""
        disc = problem.disc
        eta, xi = run.study.eta, run.study.xi
        if init in ('coexistence', 'perturbed'):
            cfg = replace(run.continuation, max_steps=run.simulate.branch_steps)
            branch = run_scenario(problem, Scenario.T1, eta, xi, cfg).branch
            terminal = branch.terminal
            target = PopulationState.at_rest(terminal.u, terminal.v)
            eta = terminal.eta
            factor = run.simulate.perturbation if init == 'perturbed' else 1.0
            start = PopulationState.at_rest(factor * terminal.u, factor * terminal.v)
            return start, target, eta, xi
        if init == 'semitrivial':
            zero = disc.zeros()
            if eta > 1.0:
                target = PopulationState.at_rest(problem.u_eta(eta).field, zero)
            else:
                target = PopulationState.at_rest(zero, problem.v_xi(xi).field)
            return target, target, eta, xi
        if init == 'small':
            zero = disc.zeros()
            return small_state(disc), PopulationState.at_rest(zero, zero), eta, xi
        raise ValueError(f"unknown initial state selector {init!r}")

    @classmethod
    def run(cls, run: RunConfig, init: Optional[str] = None, t_end: Optional[float] = None) -> ServiceResponse:
        init = init or run.simulate.init
        t_end = run.simulate.t_end if t_end is None else t_end
        if not t_end > 0:
            return ServiceResponse.error_response(f"t_end must be > 0, got {t_end}", exit_code=2)
        try:
            problem, _ = build_problem(run)
            start, target, eta, xi = cls.initial_state(run, problem, init)
            trajectory = simulate(problem.disc, problem.b, problem.params, start, eta, xi, t_end,
                                  run.stepper, run.simulate.sample_every)
        except AgebifError as exc:
            MetricsCollector.track_failure(exc)
            logger.error("simulation_failed", init=init, error=exc.__class__.__name__, message=exc.message)
            return ServiceResponse.from_exception(exc)

        disc = problem.disc
        series = steady_state_distance(disc, trajectory, target)
        rows = [
            {'t': state.t, 'norm_u': disc.age_space_norm(state.u), 'norm_v': disc.age_space_norm(state.v),
             'distance': distance}
            for state, distance in zip(trajectory, series.distances)
        ]
        summary = {
            'init': init,
            'eta': eta,
            'xi': xi,
            't_end': t_end,
            'samples': len(rows),
            'final_distance': series.final,
            'max_distance': max(series.distances),
            'monotone_tail': series.monotone_tail,
            'target_norm_u': disc.age_space_norm(target.u),
            'target_norm_v': disc.age_space_norm(target.v),
            'params': problem.params.to_dict(),
        }
        return ServiceResponse.success_response({'rows': rows, 'summary': summary})
