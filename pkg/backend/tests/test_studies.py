"""
Tests for the run configuration, the sweep rows, the writers and the study services
"""
import json
import math
import os

import numpy as np
import pytest

from apps.branches.params import ModelParams
from apps.common.exceptions import ConfigurationError, NoBifurcation
from apps.continuation.scenarios import Scenario
from apps.studies.config import (
    build_problem,
    load_run_config,
    parse_run_config,
    read_birth_samples,
)
from apps.studies.rows import OK, UNIQUENESS_RESTARTS, bifurcation_row, restart_spread, semitrivial_row
from apps.studies.services import (
    BifurcationPointService,
    BranchService,
    NormalizationService,
    SemitrivialService,
    SimulationService,
)
from apps.studies.writers import (
    bifurcation_diagram,
    dumps,
    format_cell,
    write_csv,
    write_json,
    write_svg,
)

from .factories import RunDocumentFactory


def _errors(document):
    with pytest.raises(ConfigurationError) as info:
        parse_run_config(document)
    assert info.value.exit_code == 2
    return info.value.diagnostics['errors']


@pytest.fixture
def run(run_document):
    return parse_run_config(run_document)


class TestRunConfigValidation:

    def test_empty_document_takes_defaults(self):
        run = parse_run_config({})
        assert (run.grid.n_x, run.grid.n_a, run.grid.a_m) == (64, 128, 1.0)
        assert run.model == ModelParams()
        assert run.birth.shape == 'constant'
        assert run.ranges.xi_scan.num == 30
        assert run.continuation.max_steps == 400
        assert run.output_dir is None

    def test_unknown_top_level_key(self):
        errors = _errors({'grdi': {'n_x': 8}})
        assert errors == {'grdi': ['Unknown field.']}

    def test_unknown_nested_key(self):
        errors = _errors({'grid': {'nx': 8}})
        assert errors == {'grid.nx': ['Unknown field.']}

    def test_grid_bound(self):
        errors = _errors({'grid': {'n_x': 2}})
        assert errors['grid.n_x'] == ['Ensure this value is greater than or equal to 3.']

    def test_self_limitation_must_be_positive(self):
        errors = _errors({'model': {'beta1': 0.0}})
        assert errors['model.beta1'] == ['Ensure this value is greater than 0.']

    def test_interaction_terms_reject_negatives(self):
        errors = _errors({'model': {'gamma': -0.1}})
        assert 'model.gamma' in errors

    def test_custom_birth_needs_a_path(self):
        errors = _errors({'birth': {'shape': 'custom'}})
        assert 'birth.path' in errors

    def test_xi_scan_must_increase(self):
        errors = _errors({'ranges': {'xi_scan': {'start': 2.0, 'stop': 1.5}}})
        assert errors['ranges.xi_scan.stop'] == ['Ensure stop is greater than start.']

    def test_continuation_steps_ordered(self):
        errors = _errors({'continuation': {'h_min': 0.5, 'h_max': 0.1}})
        assert 'continuation.h_min' in errors

    def test_eta_max_above_one(self):
        errors = _errors({'ranges': {'eta_max': 1.0}})
        assert errors['ranges.eta_max'] == ['Ensure this value is greater than 1.']

    def test_message_lists_every_problem(self):
        with pytest.raises(ConfigurationError) as info:
            parse_run_config({'grid': {'n_x': 2, 'n_a': 0}})
        assert 'grid.n_a' in info.value.message
        assert 'grid.n_x' in info.value.message

    def test_source_rebuilds_the_same_config(self, run):
        assert parse_run_config(run.source) == run
        assert json.loads(json.dumps(run.source)) == run.source

    def test_solver_section_reaches_the_stepper(self):
        run = parse_run_config({'solver': {'step_tol': 1e-11, 'diffusion_floor': 0.25, 'power_tol': 1e-10}})
        assert run.stepper.tol == 1e-11
        assert run.stepper.diffusion_floor == 0.25
        assert run.shooting.power_tol == 1e-10


class TestConfigFiles:

    def test_load(self, config_file):
        run = load_run_config(config_file)
        assert run.grid.n_x == 12
        assert run.ranges.eta == (1.2, 2.0)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_run_config(tmp_path / 'absent.json')

    def test_malformed_json(self, tmp_path):
        path = tmp_path / 'run.json'
        path.write_text('{"grid": ', encoding='utf-8')
        with pytest.raises(ConfigurationError) as info:
            load_run_config(path)
        assert 'not valid JSON' in info.value.message

    def test_custom_birth_samples(self, tmp_path, run_document):
        (tmp_path / 'birth.csv').write_text('age,value\n0.0,1.0\n0.5,1.0\n1.0,1.0\n', encoding='utf-8')
        constant_run = parse_run_config(run_document)
        run_document['birth'] = {'shape': 'custom', 'path': 'birth.csv'}
        path = tmp_path / 'run.json'
        path.write_text(json.dumps(run_document), encoding='utf-8')
        run = load_run_config(path)
        assert os.path.isabs(run.birth.path)
        _, c_custom = build_problem(run)
        _, c_constant = build_problem(constant_run)
        assert c_custom == pytest.approx(c_constant, rel=1e-12)

    def test_birth_samples_need_a_header(self, tmp_path):
        path = tmp_path / 'birth.csv'
        path.write_text('0.0,1.0\n1.0,1.0\n', encoding='utf-8')
        with pytest.raises(ConfigurationError):
            read_birth_samples(path)

    def test_birth_samples_must_be_numeric(self, tmp_path):
        path = tmp_path / 'birth.csv'
        path.write_text('age,value\n0.0,high\n', encoding='utf-8')
        with pytest.raises(ConfigurationError):
            read_birth_samples(path)


class TestWriters:

    @pytest.mark.parametrize('value,expected', [
        (True, 'true'),
        (np.bool_(False), 'false'),
        (7, '7'),
        (np.int64(3), '3'),
        (0.1, '0.10000000000000001'),
        (np.float64(2.5), '2.5'),
        (math.nan, 'nan'),
        (None, ''),
        ('ok', 'ok'),
    ])
    def test_format_cell(self, value, expected):
        assert format_cell(value) == expected

    def test_csv_text(self, tmp_path):
        path = write_csv(tmp_path / 'table.csv', ('param', 'status'), [(1.5, 'ok'), (2, 'ok')])
        assert path.read_text(encoding='utf-8') == 'param,status\n1.5,ok\n2,ok\n'
        assert sorted(p.name for p in tmp_path.iterdir()) == ['table.csv']

    def test_json_is_sorted_and_numpy_aware(self, tmp_path):
        path = write_json(tmp_path / 'out' / 'report.json', {'b': np.arange(2), 'a': np.float64(0.5)})
        text = path.read_text(encoding='utf-8')
        assert text.index('"a"') < text.index('"b"')
        assert json.loads(text) == {'a': 0.5, 'b': [0, 1]}

    def test_dumps_rejects_unknown_types(self):
        with pytest.raises(TypeError):
            dumps({'x': object()})

    def test_failed_write_leaves_nothing(self, tmp_path, mocker):
        mocker.patch('apps.studies.writers.os.replace', side_effect=OSError('disk full'))
        with pytest.raises(OSError):
            write_csv(tmp_path / 'table.csv', ('a',), [(1,)])
        assert list(tmp_path.iterdir()) == []

    def test_svg_is_reproducible(self, tmp_path):
        overlays = [{'label': '||v|| predator-only', 'mu': [1.0, 2.0], 'norm': [0.5, 0.5]}]
        first = write_svg(tmp_path / 'a.svg', bifurcation_diagram([], 'eta', overlays, title='T1'))
        second = write_svg(tmp_path / 'b.svg', bifurcation_diagram([], 'eta', overlays, title='T1'))
        assert first.read_bytes() == second.read_bytes()
        assert first.read_bytes().lstrip().startswith(b'<?xml')


class TestRows:

    def test_semitrivial_row(self, problem):
        row = semitrivial_row(problem, 'u', 2.0)
        assert row['status'] == OK
        assert row['identity_residual'] <= 1e-8
        assert 0 < row['trace_min'] <= row['trace_max']

    def test_semitrivial_row_below_threshold(self, problem):
        row = semitrivial_row(problem, 'v', 0.9)
        assert row['status'] == 'NoPositiveSolution'
        assert math.isnan(row['norm'])

    def test_semitrivial_restarts_agree(self, problem):
        row = semitrivial_row(problem, 'u', 2.0, seed=3)
        assert 0.0 <= row['restart_spread'] <= 1e-7

    def test_restart_guesses_follow_the_seed(self, problem, mocker):
        problem.u_eta(2.0)
        shoot = mocker.spy(problem.prey, 'shoot')
        for seed in (0, 0, 1):
            restart_spread(problem, 'u', 2.0, seed)
        guesses = [call.args[-1] for call in shoot.call_args_list]
        assert len(guesses) == 3 * UNIQUENESS_RESTARTS
        np.testing.assert_array_equal(guesses[0], guesses[UNIQUENESS_RESTARTS])
        assert not np.allclose(guesses[0], guesses[2 * UNIQUENESS_RESTARTS])

    def test_bifurcation_row(self, problem, run):
        row = bifurcation_row(problem, run, 'xi0', 2.0)
        assert row['status'] == OK
        assert row['diagnostics']['in_unit_interval']
        assert row['diagnostics']['predation_radius'] == pytest.approx(1.0 / row['value'])

    def test_failed_bifurcation_row(self, problem, run):
        row = bifurcation_row(problem, run, 'eta1', 1.5)
        assert row['status'] == 'NoBifurcation'
        assert row['value'] is None
        assert row['diagnostics']['error'] == 'NoBifurcation'

    def test_unknown_quantity(self, problem, run):
        with pytest.raises(ValueError):
            bifurcation_row(problem, run, 'eta2', 1.5)


class TestServices:

    def test_normalization_report(self, run):
        response = NormalizationService.report(run)
        assert response.success
        data = response.data
        assert data['normalized_radius_error'] <= 1e-12
        assert data['lambda_1'] == pytest.approx(data['lambda_1_closed_form'], rel=1e-10)
        # backward Euler in age is first order; at n_a = 32 the gap is about 13%
        assert 0.0 < data['constant_relative_error'] < 0.2

    def test_normalization_ramp_has_no_continuum_constant(self, run_document):
        run_document['birth'] = {'shape': 'ramp'}
        response = NormalizationService.report(parse_run_config(run_document))
        assert response.success
        assert 'constant_continuum' not in response.data
        assert response.warnings

    def test_semitrivial_table_keeps_order(self, run):
        response = SemitrivialService.table(run, 'u', [2.0, 0.9, 1.5])
        assert response.success
        rows = response.data['rows']
        assert [row['param'] for row in rows] == [2.0, 0.9, 1.5]
        assert [row['status'] for row in rows] == [OK, 'NoPositiveSolution', OK]
        assert response.warnings == ['no solution for u at param = 0.9']

    def test_semitrivial_table_passes_the_seed(self, run_document, mocker):
        row = mocker.patch('apps.studies.tasks.semitrivial_row', return_value={'param': 2.0, 'status': OK})
        run = parse_run_config({**run_document, 'seed': 7})
        assert SemitrivialService.table(run, 'u', [2.0]).success
        assert row.call_args.args[-1] == 7

    def test_semitrivial_defaults_to_configured_range(self, run):
        response = SemitrivialService.table(run, 'v')
        assert [row['param'] for row in response.data['rows']] == [1.5, 2.0]

    def test_unknown_bifurcation_quantity(self, run):
        response = BifurcationPointService.locate(run, 'eta2')
        assert not response.success
        assert response.exit_code == 2

    def test_default_values(self, run):
        assert BifurcationPointService.default_values(run, 'xi0') == [1.2, 2.0]
        assert BifurcationPointService.default_values(run, 'xi1-scan') == [2.0]
        assert BifurcationPointService.default_values(run, 'delta') == [50.0]

    def test_locate_eta0(self, run):
        response = BifurcationPointService.locate(run, 'eta0', [2.0])
        assert response.success
        (row,) = response.data['results']
        assert row['value'] > 1.0
        assert row['diagnostics']['kind'] == 'eta0'

    def test_branch_failure_is_a_solver_error(self, run, mocker):
        mocker.patch('apps.studies.services.run_scenario', side_effect=NoBifurcation('no root', {'xi': 2.0}))
        response = BranchService.trace(run, Scenario.T22)
        assert not response.success
        assert response.exit_code == 3
        assert response.diagnostics == {'xi': 2.0}
        assert response.error.startswith('NoBifurcation')

    def test_simulation_needs_positive_t_end(self, run):
        response = SimulationService.run(run, 'small', 0.0)
        assert not response.success
        assert response.exit_code == 2

    def test_simulation_from_small_state(self, run):
        response = SimulationService.run(run, 'small', 0.25)
        assert response.success
        rows = response.data['rows']
        assert rows[0]['t'] == 0.0
        assert rows[-1]['t'] == pytest.approx(0.25)
        summary = response.data['summary']
        assert summary['samples'] == len(rows)
        assert summary['target_norm_u'] == 0.0
        assert summary['final_distance'] == rows[-1]['distance']

    def test_simulation_from_semitrivial_state_stays_put(self, run):
        response = SimulationService.run(run, 'semitrivial', 0.25)
        assert response.success
        summary = response.data['summary']
        assert summary['max_distance'] <= 1e-7 * summary['target_norm_u']

    def test_unknown_initial_state(self, run):
        problem, _ = build_problem(run)
        with pytest.raises(ValueError):
            SimulationService.initial_state(run, problem, 'random')


@pytest.mark.slow
def test_simulation_from_coexistence_state_stays_put(run):
    response = SimulationService.run(run, 'coexistence', 0.5)
    assert response.success
    summary = response.data['summary']
    assert summary['target_norm_u'] > 0
    assert summary['target_norm_v'] > 0
    scale = summary['target_norm_u'] + summary['target_norm_v']
    assert summary['max_distance'] <= 1e-6 * scale
