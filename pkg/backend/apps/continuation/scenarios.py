"""
Branch studies launched from each kind of bifurcation point, and the
classification of where a traced branch ended.

    T1    xi > 1 fixed, eta varies from eta0(xi) off the predator-only branch
    T22   xi in (delta, 1) fixed, eta varies from eta1(xi) off the prey-only branch
    T222  eta > 1 fixed, xi varies from xi0(eta) off the prey-only branch
    xi1   eta fixed, xi varies from a root xi1 of eta r(G_xi) = 1
"""
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Optional

import numpy as np
import structlog

from apps.branches.points import (
    DEFAULT_ETA_MAX,
    BifurcationProblem,
    TangentData,
    eta0,
    eta1,
    find_xi1,
    scan_xi1,
    xi0,
    xi0_tangent,
    xi1_residual,
    xi1_tangent,
)
from apps.common.exceptions import NoBifurcation, SolverError

from .arclength import BranchResult, BranchTracer, ContinuationConfig, StopReason

logger = structlog.get_logger(__name__)

UNCLASSIFIED = 'Unclassified'
SEMITRIVIAL_MATCH_TOL = 1e-6
# |eta r(G_xi) - 1| accepted at a predator-only terminal
XI1_RESIDUAL_TOL = 1e-4


class Scenario(str, Enum):
    T1 = 'T1'
    T22 = 'T22'
    T222 = 'T222'
    XI1 = 'xi1'


# lower end of the eta window in the T22 study when none is configured
T22_ETA_FLOOR = 0.5


@dataclass(frozen=True)
class EndpointReport:
    reason: StopReason
    alternative: str
    label: str
    diagnostics: Dict = field(default_factory=dict)

    @property
    def classified(self) -> bool:
        return self.alternative != UNCLASSIFIED

    def to_dict(self) -> Dict:
        return {
            'stop_reason': self.reason.value,
            'alternative': self.alternative,
            'label': self.label,
            'diagnostics': self.diagnostics,
        }


def _unclassified(reason: StopReason, why: str, **diagnostics) -> EndpointReport:
    return EndpointReport(reason, UNCLASSIFIED, why, diagnostics)


def classify_endpoint(problem: BifurcationProblem, result: BranchResult, scenario: Scenario,
                      cfg: ContinuationConfig = ContinuationConfig()) -> EndpointReport:
    """
    Map a stop reason and the terminal state to the alternative of the
    scenario's global result. Anything that does not fit is Unclassified,
    with diagnostics.
    """
    reason = result.reason
    terminal = result.terminal
    disc = problem.disc
    norm_u, norm_v = disc.age_space_norm(terminal.u), disc.age_space_norm(terminal.v)
    thresholds = {'norm_cap': cfg.norm_cap, 'pos_tol': cfg.pos_tol,
                  'mu': terminal.mu, 'eta': terminal.eta, 'xi': terminal.xi,
                  'norm_u': norm_u, 'norm_v': norm_v, 'gamma': problem.params.gamma}

    if reason in (StopReason.HIT_SEMITRIVIAL_U, StopReason.HIT_SEMITRIVIAL_V):
        scale = cfg.pos_tol * (1.0 + max(float(np.abs(terminal.u0).max()), float(np.abs(terminal.v0).max())))
        if float(np.abs(terminal.u0).max()) <= scale and float(np.abs(terminal.v0).max()) <= scale:
            return _unclassified(reason, "both components vanished", **thresholds)

    if reason == StopReason.NORM_CAP:
        return EndpointReport(reason, '(i)', 'unbounded continuum', thresholds)

    if scenario == Scenario.T22 and reason == StopReason.PARAM_EXITED_RANGE:
        lower = cfg.mu_min if cfg.mu_min is not None else T22_ETA_FLOOR
        if terminal.mu <= lower:
            return EndpointReport(reason, '(ii)', 'connects to a solution (eta*, u, v)',
                                  {**thresholds, 'eta_star': terminal.mu,
                                   'min_u0': float(terminal.u0.min()), 'min_v0': float(terminal.v0.min())})

    if scenario == Scenario.T222 and reason == StopReason.HIT_SEMITRIVIAL_U:
        return _predator_connection(problem, result, reason, thresholds, '(ii)',
                                    'connects to the predator-only branch')

    if scenario == Scenario.XI1 and reason == StopReason.HIT_SEMITRIVIAL_V:
        try:
            expected = xi0(problem, terminal.eta)
        except SolverError as exc:
            return _unclassified(reason, "prey-only check failed", cause=exc.message, **thresholds)
        return EndpointReport(reason, '(ii)', 'connects to the prey-only branch',
                              {**thresholds, 'xi0': expected, 'xi_error': abs(expected - terminal.mu)})

    return _unclassified(reason, f"{reason.value} is not an alternative of {scenario.value}", **thresholds)


def _predator_connection(problem: BifurcationProblem, result: BranchResult, reason: StopReason,
                         thresholds: Dict, alternative: str, label: str) -> EndpointReport:
    terminal = result.terminal
    try:
        v_branch = problem.v_xi(terminal.xi)
        residual = xi1_residual(problem, terminal.eta, terminal.xi)
    except SolverError as exc:
        return _unclassified(reason, "predator-only check failed", cause=exc.message, **thresholds)
    mismatch = float(np.abs(terminal.v0 - v_branch.trace).max()) / (1.0 + float(np.abs(v_branch.trace).max()))
    diagnostics = {**thresholds, 'xi1': terminal.xi, 'v_mismatch': mismatch, 'xi1_residual': residual}
    if mismatch > SEMITRIVIAL_MATCH_TOL:
        return _unclassified(reason, "terminal predator does not match the predator-only branch", **diagnostics)
    if not abs(residual) <= XI1_RESIDUAL_TOL:
        return _unclassified(reason, "terminal does not satisfy eta r(G_xi) = 1", **diagnostics)
    return EndpointReport(reason, alternative, label, diagnostics)


@dataclass(frozen=True, eq=False)
class ScenarioResult:
    scenario: Scenario
    tangent: TangentData
    branch: BranchResult
    report: EndpointReport
    extra: Dict = field(default_factory=dict)

    def summary(self) -> Dict:
        return {
            'scenario': self.scenario.value,
            'mode': self.branch.mode,
            'bifurcation': self.tangent.to_dict(),
            'records': len(self.branch.records),
            'terminal': {'mu': self.branch.terminal.mu, 'eta': self.branch.terminal.eta,
                         'xi': self.branch.terminal.xi},
            'endpoint': self.report.to_dict(),
            'branch_diagnostics': self.branch.diagnostics,
            **self.extra,
        }


def locate_launch(problem: BifurcationProblem, scenario: Scenario, eta: float, xi: float,
                  eta_max: float = DEFAULT_ETA_MAX, xi_grid=None) -> TangentData:
    """Bifurcation point and tangent a scenario launches from."""
    if scenario == Scenario.T1:
        return eta0(problem, xi)[1]
    if scenario == Scenario.T22:
        return eta1(problem, xi, eta_max)[1]
    if scenario == Scenario.T222:
        return xi0_tangent(problem, eta)
    if xi_grid is None:
        raise ValueError("the xi1 scenario needs a xi grid to scan")
    scan = scan_xi1(problem, eta, xi_grid)
    if not scan.sign_changes:
        raise NoBifurcation(f"eta r(G_xi) - 1 has no sign change on the scanned grid for eta = {eta}",
                            scan.to_dict())
    lower, upper = scan.sign_changes[0]
    return xi1_tangent(problem, eta, find_xi1(problem, eta, lower, upper))


def scenario_config(scenario: Scenario, cfg: ContinuationConfig) -> ContinuationConfig:
    """Fill in the parameter window a scenario needs when the config leaves it open."""
    mu_min = cfg.mu_min
    if mu_min is None:
        mu_min = T22_ETA_FLOOR if scenario == Scenario.T22 else 1e-6
    return replace(cfg, mu_min=mu_min)


def run_scenario(problem: BifurcationProblem, scenario: Scenario, eta: float, xi: float,
                 cfg: ContinuationConfig = ContinuationConfig(), eta_max: float = DEFAULT_ETA_MAX,
                 xi_grid=None, s0: Optional[float] = None) -> ScenarioResult:
    """Locate the launch point, leave it, trace the branch and classify the end."""
    tangent = locate_launch(problem, scenario, eta, xi, eta_max, xi_grid)
    cfg = scenario_config(scenario, cfg)
    fixed = tangent.xi if tangent.mu == 'eta' else tangent.eta
    tracer = BranchTracer(problem, tangent.mu, fixed, cfg)
    logger.info("scenario_started", scenario=scenario.value, bifurcation=tangent.kind,
                value=tangent.value, fixed=fixed)
    start = tracer.first_step_off_bifurcation(tangent, s0)
    branch = tracer.continue_branch(start)
    report = classify_endpoint(problem, branch, scenario, cfg)
    logger.info("scenario_finished", scenario=scenario.value, stop_reason=branch.reason.value,
                alternative=report.alternative)
    return ScenarioResult(scenario, tangent, branch, report, {'gamma': problem.params.gamma})
