"""
Tests for the holoweld command line: exit codes and artifacts
"""
import json

import pytest
from typer.testing import CliRunner

from cli import EXIT_CHECK, EXIT_CONFIG, EXIT_INTERNAL, EXIT_OK, app
from commands import COMMANDS
from errors import DbarSolverError

runner = CliRunner()


def _ledger_args(out, *extra):
    return ['ledger', '--mmax', '100000', '--points-per-decade', '5', '--out', str(out), '--timestamp', 'T0',
            *extra]


def test_ledger_writes_report_and_curve(tmp_path):
    """Test that a small ledger run passes and writes its JSON and CSVs"""
    result = runner.invoke(app, _ledger_args(tmp_path))
    assert result.exit_code == EXIT_OK, result.output
    report = json.loads((tmp_path / 'ledger-0-T0.json').read_text())
    assert report['passed']
    assert report['command'] == 'ledger'
    assert report['rng'] == 'numpy.PCG64'
    assert report['ledger']['mmax'] == 100000
    assert (tmp_path / 'ledger-0-T0-ledger.csv').exists()
    header = (tmp_path / 'ledger-0-T0-curve.csv').read_text().splitlines()[0]
    assert header == 'm,ratio'


def test_fixed_timestamp_reruns_are_identical(tmp_path):
    """Test that two runs with the same seed and timestamp write identical JSON"""
    assert runner.invoke(app, _ledger_args(tmp_path)).exit_code == EXIT_OK
    first = (tmp_path / 'ledger-0-T0.json').read_bytes()
    assert runner.invoke(app, _ledger_args(tmp_path)).exit_code == EXIT_OK
    assert (tmp_path / 'ledger-0-T0.json').read_bytes() == first


def test_windows_with_empty_points_file(tmp_path):
    """Test that an empty configuration passes every window check"""
    points = tmp_path / 'empty.json'
    points.write_text('[]')
    result = runner.invoke(app, ['windows', '--points', f'file:{points}', '--out', str(tmp_path),
                                 '--timestamp', 'T0', '--seed', '3'])
    assert result.exit_code == EXIT_OK, result.output
    report = json.loads((tmp_path / 'windows-3-T0.json').read_text())
    assert report['points'] == []
    assert report['checks']['P1']['passed']
    assert (tmp_path / 'windows-3-T0-log_v.pgm').exists()


def test_malformed_config_is_a_configuration_error(tmp_path):
    """Test that a config file that is not JSON exits with the configuration code"""
    config = tmp_path / 'bad.json'
    config.write_text('{"ledger": {"mmax": 100')
    result = runner.invoke(app, ['ledger', '--config', str(config), '--out', str(tmp_path)])
    assert result.exit_code == EXIT_CONFIG


@pytest.mark.parametrize('args', [
    ['ledger', '--mmax', '2'],
    ['towers', '--levels', '1'],
    ['windows', '--points', 'hexagon:3'],
])
def test_out_of_range_parameters(tmp_path, args):
    """Test that invalid parameter values exit with the configuration code"""
    result = runner.invoke(app, [*args, '--out', str(tmp_path)])
    assert result.exit_code == EXIT_CONFIG


def test_config_file_values_are_used(tmp_path):
    """Test that a config file supplies seed and parameters under the flags"""
    config = tmp_path / 'run.json'
    config.write_text(json.dumps({'seed': 9, 'ledger': {'mmax': 5000, 'points_per_decade': 4}}))
    result = runner.invoke(app, ['ledger', '--config', str(config), '--out', str(tmp_path), '--timestamp', 'T1'])
    assert result.exit_code == EXIT_OK, result.output
    report = json.loads((tmp_path / 'ledger-9-T1.json').read_text())
    assert report['seed'] == 9
    assert report['params']['mmax'] == 5000


def _origin_points(tmp_path):
    points = tmp_path / 'origin.json'
    points.write_text('[[0, 0]]')
    return f'file:{points}'


def _report(tmp_path, command, seed=0, timestamp='T0'):
    return json.loads((tmp_path / f'{command}-{seed}-{timestamp}.json').read_text())


def test_shglue_single_patch(tmp_path):
    """Test a subharmonic weld of one patch at C = 8"""
    result = runner.invoke(app, ['shglue', '--C', '8', '--points', _origin_points(tmp_path), '--out', str(tmp_path),
                                 '--timestamp', 'T0'])
    assert result.exit_code == EXIT_OK, result.output
    report = _report(tmp_path, 'shglue')
    assert report['passed']
    assert report['checks']['SH1']['passed']
    assert (tmp_path / 'shglue-0-T0-log_u.pgm').exists()


def test_glue_single_patch(tmp_path):
    """Test an entire weld of one patch and the artifacts it leaves"""
    result = runner.invoke(app, ['glue', '--C', '8', '--points', _origin_points(tmp_path), '--out', str(tmp_path),
                                 '--timestamp', 'T0'])
    assert result.exit_code in (EXIT_OK, EXIT_CHECK), result.output
    report = _report(tmp_path, 'glue')
    assert report['passed'] == (result.exit_code == EXIT_OK)
    assert report['checks']['hypotheses']['passed']
    assert {'E1', 'E2'} <= set(report['checks'])
    assert (tmp_path / 'glue-0-T0-f.bin').exists()


def test_glue_with_small_M_reports_the_hypothesis(tmp_path):
    """Test that M <= 40 log C writes a failing hypothesis report and exits with the check code"""
    result = runner.invoke(app, ['glue', '--C', '8', '--M', '50', '--points', 'random:1', '--out', str(tmp_path),
                                 '--timestamp', 'T0'])
    assert result.exit_code == EXIT_CHECK, result.output
    report = _report(tmp_path, 'glue')
    assert not report['passed']
    failed = [e for e in report['checks']['hypotheses']['entries'] if not e['passed']]
    assert failed[0]['hypothesis'] == 'M > 40 log C'
    assert not (tmp_path / 'glue-0-T0-f.bin').exists()


def test_shglue_at_C_seven_is_a_check_failure(tmp_path):
    """Test that a construction hypothesis raised inside a command still leaves a report"""
    result = runner.invoke(app, ['shglue', '--C', '7', '--points', _origin_points(tmp_path), '--out', str(tmp_path),
                                 '--timestamp', 'T0'])
    assert result.exit_code == EXIT_CHECK, result.output
    report = _report(tmp_path, 'shglue')
    assert not report['passed']
    assert report['checks']['hypotheses']['entries'][0]['hypothesis'] == 'HypothesisError'


def test_towers_two_levels(tmp_path):
    """Test the tower command end to end"""
    result = runner.invoke(app, ['towers', '--levels', '2', '--placements', '200', '--out', str(tmp_path),
                                 '--timestamp', 'T0'])
    assert result.exit_code == EXIT_OK, result.output
    report = _report(tmp_path, 'towers')
    assert report['checks']['four_corner']['passed']
    assert report['checks']['refinement']['passed']
    assert (tmp_path / 'towers-0-T0-refinement.csv').exists()


def test_towers_output_does_not_depend_on_threads(tmp_path):
    """Test that single- and multi-threaded runs write identical JSON and CSV"""
    args = ['towers', '--levels', '3', '--placements', '200', '--timestamp', 'T0', '--seed', '4']
    single, multi = tmp_path / 'single', tmp_path / 'multi'
    assert runner.invoke(app, [*args, '--threads', '1', '--out', str(single)]).exit_code == EXIT_OK
    assert runner.invoke(app, [*args, '--threads', '4', '--out', str(multi)]).exit_code == EXIT_OK
    names = sorted(p.name for p in single.iterdir() if p.suffix in ('.json', '.csv'))
    assert names == sorted(p.name for p in multi.iterdir() if p.suffix in ('.json', '.csv'))
    for name in names:
        assert (single / name).read_bytes() == (multi / name).read_bytes(), name


def test_construct_two_levels(tmp_path):
    """Test the construction command writes its property report and level table"""
    result = runner.invoke(app, ['construct', '--levels', '2', '--out', str(tmp_path), '--timestamp', 'T0'])
    assert result.exit_code in (EXIT_OK, EXIT_CHECK), result.output
    report = _report(tmp_path, 'construct')
    assert report['passed'] == (result.exit_code == EXIT_OK)
    assert report['checks']['f1_facts']['passed']
    assert report['checks']['B5']['passed']
    assert (tmp_path / 'construct-0-T0-levels.csv').exists()


def test_solver_error_exits_with_internal_code(tmp_path, monkeypatch):
    """Test that a d-bar solver failure maps to the internal error code"""
    def fail(cfg, manager, charts=None):
        raise DbarSolverError("no convergence", [1e-2, 1e-3])
    monkeypatch.setattr(COMMANDS['glue'], 'run', fail)
    result = runner.invoke(app, ['glue', '--out', str(tmp_path)])
    assert result.exit_code == EXIT_INTERNAL


def test_unexpected_error_exits_with_internal_code(tmp_path, monkeypatch):
    """Test that any other exception maps to the internal error code"""
    def fail(cfg, manager, charts=None):
        raise RuntimeError("boom")
    monkeypatch.setattr(COMMANDS['ledger'], 'run', fail)
    result = runner.invoke(app, ['ledger', '--out', str(tmp_path)])
    assert result.exit_code == EXIT_INTERNAL
