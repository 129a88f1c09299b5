"""
Tests for the bordered corrector, branch continuation and endpoint classification
"""
from dataclasses import replace

import numpy as np
import pytest
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from apps.branches.points import Xi1Scan, eta0, xi0, xi1_residual
from apps.common.exceptions import NoBifurcation
from apps.continuation.arclength import (
    BranchRecord,
    BranchResult,
    BranchTracer,
    CoexistenceState,
    ContinuationConfig,
    StopReason,
    first_step_off_bifurcation,
    residual,
)
from apps.continuation.scenarios import (
    T22_ETA_FLOOR,
    UNCLASSIFIED,
    Scenario,
    classify_endpoint,
    locate_launch,
    run_scenario,
    scenario_config,
)
from apps.dynamics.simulation import constant_in_age

from .factories import ContinuationConfigFactory


def _terminal(problem, mode, mu, fixed, u0, v0):
    disc = problem.disc
    return CoexistenceState(np.asarray(u0, float), np.asarray(v0, float), mu, mode, fixed,
                            constant_in_age(disc, u0), constant_in_age(disc, v0))


def _ended(problem, reason, terminal):
    return BranchResult([], reason, terminal, terminal.mode)


@pytest.fixture(scope='module')
def t1_result(problem):
    return run_scenario(problem, Scenario.T1, 2.0, 2.0, ContinuationConfigFactory(max_steps=6))


class TestContinuationConfig:

    @pytest.mark.parametrize('changes', [
        {'h_min': 0.5, 'h_max': 0.25},
        {'h_min': 0.0},
        {'s0': 0.0},
        {'mu_min': 2.0, 'mu_max': 1.0},
    ])
    def test_rejects_inconsistent_values(self, changes):
        with pytest.raises(ValueError):
            ContinuationConfig(**changes)

    def test_launch_amplitude(self):
        trace = np.array([0.5, 2.0, 1.0])
        assert ContinuationConfig(s0=0.3).launch_amplitude(trace) == 0.3
        assert ContinuationConfig().launch_amplitude(trace) == pytest.approx(0.02)
        assert ContinuationConfig().launch_amplitude(np.zeros(3)) == 1e-4

    def test_record_row_matches_columns(self):
        record = BranchRecord(0, 0.0, 2.0, 1.0, 1.0, 0.1, 0.2, 0.05, 3)
        assert len(record.as_row()) == len(BranchRecord.CSV_COLUMNS)


class TestLaunch:

    def test_leaves_eta0_with_positive_traces(self, problem):
        value, tangent = eta0(problem, 2.0)
        start = first_step_off_bifurcation(problem, tangent, ContinuationConfigFactory())
        assert np.all(start.u0 > 0)
        assert np.all(start.v0 > 0)
        assert start.mode == 'eta'
        assert start.xi == 2.0
        assert abs(start.eta - value) < 0.1 * value
        f = residual(problem, start.u0, start.v0, start.eta, start.xi)
        assert np.abs(f).max() <= 1e-8 * (1.0 + max(start.u0.max(), start.v0.max()))

    def test_mode_must_match_tangent(self, problem):
        _, tangent = eta0(problem, 2.0)
        with pytest.raises(ValueError):
            BranchTracer(problem, 'xi', 2.0).first_step_off_bifurcation(tangent)

    def test_unknown_mode(self, problem):
        with pytest.raises(ValueError):
            BranchTracer(problem, 'gamma', 2.0)

    def test_continuation_needs_a_secant(self, problem):
        _, tangent = eta0(problem, 2.0)
        start = first_step_off_bifurcation(problem, tangent, ContinuationConfigFactory())
        with pytest.raises(ValueError):
            BranchTracer(problem, 'eta', 2.0).continue_branch(replace(start, anchor=None))


class TestPredatorOnlyLaunch:

    def test_records_are_consistent(self, t1_result):
        records = t1_result.branch.records
        assert 1 <= len(records) <= 6
        assert [r.index for r in records] == list(range(len(records)))
        assert all(later.s > earlier.s for earlier, later in zip(records, records[1:]))
        assert records[0].min_u0 > 0
        assert records[0].min_v0 > 0

    def test_terminal_state_solves_the_system(self, problem, t1_result):
        terminal = t1_result.branch.terminal
        f = residual(problem, terminal.u0, terminal.v0, terminal.eta, terminal.xi)
        assert np.abs(f).max() <= 1e-8 * (1.0 + max(terminal.u0.max(), terminal.v0.max()))

    def test_only_an_unbounded_continuum_is_classified(self, t1_result):
        assert isinstance(t1_result.branch.reason, StopReason)
        assert t1_result.report.classified == (t1_result.branch.reason == StopReason.NORM_CAP)

    def test_summary(self, t1_result):
        summary = t1_result.summary()
        assert summary['scenario'] == 'T1'
        assert summary['mode'] == 'eta'
        assert summary['bifurcation']['kind'] == 'eta0'
        assert summary['records'] == len(t1_result.branch.records)
        assert summary['endpoint']['stop_reason'] == t1_result.branch.reason.value
        assert summary['gamma'] == 0.5


@pytest.mark.slow
class TestPreyOnlyLaunch:

    def test_t222_varies_xi(self, problem):
        result = run_scenario(problem, Scenario.T222, 2.0, 2.0, ContinuationConfigFactory(max_steps=5))
        assert result.branch.mode == 'xi'
        assert result.tangent.value == pytest.approx(xi0(problem, 2.0))
        assert result.branch.terminal.eta == 2.0
        assert result.branch.records[0].min_v0 > 0

    def test_t22_launches_from_eta1(self, problem):
        xi = xi0(problem, 2.0)
        result = run_scenario(problem, Scenario.T22, 2.0, xi, ContinuationConfigFactory(max_steps=5),
                              eta_max=10.0)
        assert result.tangent.kind == 'eta1'
        assert result.tangent.value == pytest.approx(2.0, abs=1e-6)
        assert result.branch.terminal.xi == xi


class TestClassification:

    def test_norm_cap_is_unbounded_continuum(self, problem):
        ones = np.ones(problem.disc.n_x)
        terminal = _terminal(problem, 'eta', 3.0, 2.0, ones, ones)
        report = classify_endpoint(problem, _ended(problem, StopReason.NORM_CAP, terminal), Scenario.T1)
        assert report.alternative == '(i)'
        assert report.diagnostics['norm_cap'] == ContinuationConfig().norm_cap

    def test_t22_leaving_below_the_floor(self, problem):
        ones = np.ones(problem.disc.n_x)
        terminal = _terminal(problem, 'eta', 0.4, 0.8, ones, ones)
        report = classify_endpoint(problem, _ended(problem, StopReason.PARAM_EXITED_RANGE, terminal),
                                   Scenario.T22)
        assert report.alternative == '(ii)'
        assert report.diagnostics['eta_star'] == 0.4

    def test_t222_hitting_the_predator_branch(self, problem):
        zero = np.zeros(problem.disc.n_x)
        eta, _ = eta0(problem, 2.0)
        terminal = _terminal(problem, 'xi', 2.0, eta, zero, problem.v_xi(2.0).trace)
        report = classify_endpoint(problem, _ended(problem, StopReason.HIT_SEMITRIVIAL_U, terminal),
                                   Scenario.T222)
        assert report.classified
        assert report.diagnostics['v_mismatch'] == pytest.approx(0.0, abs=1e-12)
        assert abs(report.diagnostics['xi1_residual']) <= 1e-8

    def test_t222_terminal_off_the_xi1_relation_is_unclassified(self, problem, mocker):
        mocker.patch('apps.continuation.scenarios.xi1_residual', return_value=1e-3)
        zero = np.zeros(problem.disc.n_x)
        terminal = _terminal(problem, 'xi', 2.0, 2.0, zero, problem.v_xi(2.0).trace)
        report = classify_endpoint(problem, _ended(problem, StopReason.HIT_SEMITRIVIAL_U, terminal),
                                   Scenario.T222)
        assert report.alternative == UNCLASSIFIED
        assert report.diagnostics['xi1_residual'] == 1e-3
        assert report.diagnostics['v_mismatch'] == pytest.approx(0.0, abs=1e-12)

    def test_t222_mismatched_predator_is_unclassified(self, problem):
        zero = np.zeros(problem.disc.n_x)
        terminal = _terminal(problem, 'xi', 2.0, 2.0, zero, 2.0 * problem.v_xi(2.0).trace)
        report = classify_endpoint(problem, _ended(problem, StopReason.HIT_SEMITRIVIAL_U, terminal),
                                   Scenario.T222)
        assert report.alternative == UNCLASSIFIED

    def test_xi1_hitting_the_prey_branch(self, problem):
        zero = np.zeros(problem.disc.n_x)
        terminal = _terminal(problem, 'xi', 0.5, 2.0, problem.u_eta(2.0).trace, zero)
        report = classify_endpoint(problem, _ended(problem, StopReason.HIT_SEMITRIVIAL_V, terminal),
                                   Scenario.XI1)
        assert report.classified
        assert report.diagnostics['xi0'] == pytest.approx(xi0(problem, 2.0))

    def test_both_components_vanished(self, problem):
        zero = np.zeros(problem.disc.n_x)
        terminal = _terminal(problem, 'xi', 2.0, 2.0, zero, zero)
        report = classify_endpoint(problem, _ended(problem, StopReason.HIT_SEMITRIVIAL_U, terminal),
                                   Scenario.T222)
        assert not report.classified
        assert report.label == "both components vanished"

    @pytest.mark.parametrize('reason', [StopReason.MAX_STEPS, StopReason.STEP_FAILURE,
                                        StopReason.COEFFICIENT_FLOOR])
    def test_other_stops_are_unclassified(self, problem, reason):
        ones = np.ones(problem.disc.n_x)
        terminal = _terminal(problem, 'eta', 3.0, 2.0, ones, ones)
        report = classify_endpoint(problem, _ended(problem, reason, terminal), Scenario.T1)
        assert report.alternative == UNCLASSIFIED
        assert report.to_dict()['stop_reason'] == reason.value


class TestScenarioSetup:

    def test_t22_gets_an_eta_floor(self):
        assert scenario_config(Scenario.T22, ContinuationConfig()).mu_min == T22_ETA_FLOOR
        assert scenario_config(Scenario.T1, ContinuationConfig()).mu_min == 1e-6
        assert scenario_config(Scenario.T22, ContinuationConfig(mu_min=0.8)).mu_min == 0.8

    def test_xi1_needs_a_grid(self, problem):
        with pytest.raises(ValueError):
            locate_launch(problem, Scenario.XI1, 2.0, 2.0)

    def test_xi1_without_sign_change(self, problem, mocker):
        mocker.patch('apps.continuation.scenarios.scan_xi1', return_value=Xi1Scan(2.0, [], []))
        with pytest.raises(NoBifurcation):
            locate_launch(problem, Scenario.XI1, 2.0, 2.0, xi_grid=[1.1, 1.5])


@pytest.mark.slow
class TestLaunchGeometry:

    @pytest.fixture(params=['problem', 'problem_no_cross_diffusion'])
    def any_problem(self, request):
        return request.getfixturevalue(request.param)

    def _launch(self, problem, tangent, s0):
        start = first_step_off_bifurcation(problem, tangent, ContinuationConfigFactory(), s0=s0)
        base_u, base_v = tangent.base_traces()
        return start, np.concatenate([start.u0 - base_u, start.v0 - base_v]) / s0

    def test_first_step_follows_the_kernel(self, any_problem):
        _, tangent = eta0(any_problem, 2.0)
        direction = np.concatenate(tangent.direction())
        _, coarse = self._launch(any_problem, tangent, 2e-3)
        _, fine = self._launch(any_problem, tangent, 1e-3)
        scale = np.abs(direction).max()
        fine_error = np.abs(fine - direction).max() / scale
        coarse_error = np.abs(coarse - direction).max() / scale
        assert fine_error <= 1e-2
        assert fine_error <= 0.7 * coarse_error + 1e-6

    def test_parameter_returns_to_eta0(self, any_problem):
        value, tangent = eta0(any_problem, 2.0)
        gaps = [abs(self._launch(any_problem, tangent, s0)[0].eta - value) for s0 in (2e-3, 1e-3, 5e-4)]
        assert gaps[1] <= 0.7 * gaps[0] + 1e-8
        assert gaps[2] <= 0.7 * gaps[1] + 1e-8


def _diagram(records):
    return np.array([[r.s, r.mu, r.norm_u, r.norm_v] for r in records])


@pytest.mark.slow
class TestLongBranches:

    @pytest.fixture(params=['problem', 'problem_no_cross_diffusion'])
    def any_problem(self, request):
        return request.getfixturevalue(request.param)

    def test_t1_trace_stays_positive_and_converged(self, any_problem):
        result = run_scenario(any_problem, Scenario.T1, 2.0, 2.0, ContinuationConfigFactory(max_steps=200))
        branch = result.branch
        assert branch.reason in (StopReason.MAX_STEPS, StopReason.NORM_CAP)
        if branch.reason == StopReason.MAX_STEPS:
            assert len(branch.records) == 200
        assert all(r.min_u0 > 0 and r.min_v0 > 0 for r in branch.records)
        terminal = branch.terminal
        f = residual(any_problem, terminal.u0, terminal.v0, terminal.eta, terminal.xi)
        assert np.abs(f).max() <= 1e-9 * (1.0 + max(terminal.u0.max(), terminal.v0.max()))

    def test_halving_the_step_cap_reproduces_the_diagram(self, problem):
        coarse = run_scenario(problem, Scenario.T1, 2.0, 2.0,
                              ContinuationConfigFactory(h_max=0.25, max_steps=30))
        fine = run_scenario(problem, Scenario.T1, 2.0, 2.0,
                            ContinuationConfigFactory(h_max=0.125, max_steps=60))
        fine_points = _diagram(fine.branch.records)
        curve = CubicSpline(fine_points[:, 0], fine_points[:, 1:3])
        grid = np.linspace(fine_points[0, 0], fine_points[-1, 0], 4001)
        sampled = curve(grid)
        coarse_points = _diagram(coarse.branch.records)
        inside = coarse_points[coarse_points[:, 0] <= 0.9 * fine_points[-1, 0]]
        assert len(inside) >= 5
        for _, mu, norm_u, _ in inside:
            def squared_gap(s):
                point = curve(s)
                return (point[0] - mu) ** 2 + (point[1] - norm_u) ** 2

            nearest = int(np.argmin((sampled[:, 0] - mu) ** 2 + (sampled[:, 1] - norm_u) ** 2))
            bounds = (grid[max(nearest - 1, 0)], grid[min(nearest + 1, len(grid) - 1)])
            best = minimize_scalar(squared_gap, bounds=bounds, method='bounded', options={'xatol': 1e-12})
            assert np.sqrt(best.fun) <= 1e-4 * max(1.0, norm_u)

    def test_t222_reaches_the_predator_branch_at_xi1(self, problem):
        eta, _ = eta0(problem, 1.5)
        result = run_scenario(problem, Scenario.T222, eta, 1.5,
                              ContinuationConfigFactory(mu_max=4.0, max_steps=200))
        assert result.branch.reason == StopReason.HIT_SEMITRIVIAL_U
        assert result.report.alternative == '(ii)'
        terminal = result.branch.terminal
        assert abs(xi1_residual(problem, terminal.eta, terminal.xi)) <= 1e-4
        assert terminal.xi == pytest.approx(1.5, abs=1e-3)
