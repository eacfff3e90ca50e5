import yaml
import pytest
from click.testing import CliRunner

from lib.helpers.exceptions import ConfigError
from lib.helpers.serializers import read_record, read_table
from lib.config import parse_config

SPECTRAL = {
    'name': 'spectral',
    'domain': {'dim': 1, 'half_width': 10.0, 'points_per_axis': 401},
    'eigen': {'lambda_max': 60.0},
    'sensor': {'kind': 'thick_periodic', 'delta': 0.5},
    'sweep': {'variable': 'lambda', 'values': [4.0, 8.0, 16.0, 32.0, 55.0]},
    'stages': ['eig', 'specineq', 'sweep'],
}

HEAT = {
    'name': 'heat',
    'domain': {'dim': 1, 'half_width': 10.0, 'points_per_axis': 401},
    'eigen': {'count': 20},
    'sensor': {'kind': 'thick_periodic', 'delta': 0.5},
    'lift': {'samples': 5},
    'heat': {'T': 1.0, 'J_intervals': [[0.0, 1.0]], 'deltas': [0.5, 0.3, 0.2, 0.1]},
    'control': {'modes': 20, 'tol': 1.0e-8},
    'stages': ['eig', 'observability', 'control'],
}

LIFT = {
    'name': 'lift',
    'domain': {'dim': 1, 'half_width': 6.0, 'points_per_axis': 121},
    'eigen': {'lambda_max': 30.0},
    'lift': {'rho': 0.1, 's_max': 0.4, 's_points': 11, 'samples': 3, 'validation': 3, 'radius': 1.0},
    'stages': ['eig', 'lift'],
}


def _runner(raw: dict, output_dir, **overrides):
    from experiments.run import ExperimentRunner

    return ExperimentRunner(config=parse_config(raw), output_dir=str(output_dir), **overrides)


def _snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.name != 'timings.json'}


def test_spectral_stages_write_outputs_and_rerun_identically(tmp_path):
    report = _runner(SPECTRAL, tmp_path, no_cache=True).run()
    out = tmp_path / 'spectral'

    for name in ('eigenvalues.csv', 'assumption.json', 'decay_radius.csv', 'density.json', 'specineq.json',
                 'worst_case_element.csv', 'sweep_lambda.csv', 'fit_lambda.json', 'report.json', 'timings.json'):
        assert (out / name).is_file(), name
    assert set(report.checks) == {'eig', 'specineq'}
    assert 'lambda' in report.fits
    assert len(read_table(out / 'eigenvalues.csv')) == report.checks['eig']['modes'] == 30
    record = read_record(out / 'report.json')
    assert 'cache_hits' not in record and record['name'] == 'spectral'
    assert record['tables']['sweep_lambda'] == 'sweep_lambda.csv'

    first = _snapshot(out)
    _runner(SPECTRAL, tmp_path, no_cache=True).run()
    assert _snapshot(out) == first


def test_eigenbasis_cache_is_reused(tmp_path, monkeypatch):
    monkeypatch.setenv('SPECLAB_CACHE_DIR', str(tmp_path / 'cache'))
    raw = dict(SPECTRAL, stages=['eig'])
    _runner(raw, tmp_path / 'first').run()
    _runner(raw, tmp_path / 'second').run()

    assert read_record(tmp_path / 'first' / 'spectral' / 'timings.json')['cache_misses'] == 1
    timings = read_record(tmp_path / 'second' / 'spectral' / 'timings.json')
    assert timings['cache_hits'] == 1 and timings['cache_misses'] == 0
    assert (tmp_path / 'first' / 'spectral' / 'eigenvalues.csv').read_bytes() == \
           (tmp_path / 'second' / 'spectral' / 'eigenvalues.csv').read_bytes()


def test_heat_stages(tmp_path):
    report = _runner(HEAT, tmp_path, no_cache=True).run()
    out = tmp_path / 'heat'

    control = read_record(out / 'control.json')
    assert control['terminal_residual'] <= 1e-3
    assert report.checks['control']['support_inside_sensor']
    assert report.checks['observability']['C_obs'] > 0
    assert set(read_table(out / 'control_samples.csv').columns) == {'t', 'grid_index', 'value'}
    assert read_table(out / 'observability_sweep.csv')['delta'].tolist() == [0.5, 0.3, 0.2, 0.1]
    for name in ('interpolation.json', 'density_sequence.csv', 'telescoping.csv', 'residual_history.csv'):
        assert (out / name).is_file(), name


def test_lift_stage(tmp_path):
    report = _runner(LIFT, tmp_path, no_cache=True).run()
    out = tmp_path / 'lift'

    summary = report.checks['lift']
    assert summary['samples'] == 3 and 0 <= summary['sandwich_passed'] <= 3
    assert summary['three_ball_validation'] == 3
    assert 0 < summary['three_ball_gamma'] <= 0.5
    for name in ('sandwich.csv', 'doubling.csv', 'three_ball_calibration.json', 'three_ball_validation.csv'):
        assert (out / name).is_file(), name


def test_rle_output_only_when_requested(tmp_path):
    raw = dict(SPECTRAL, stages=['eig', 'specineq'], output={'formats': ['csv', 'json', 'rle']})
    _runner(raw, tmp_path, no_cache=True).run()
    assert (tmp_path / 'spectral' / 'sensor.rle').is_file()


def test_invalid_configuration_file_is_rejected(tmp_path):
    from experiments.run import ExperimentRunner

    path = tmp_path / 'bad.yaml'
    path.write_text(yaml.safe_dump({'sensor': {'sigma': 1.2}}), encoding='utf-8')
    with pytest.raises(ConfigError) as err:
        ExperimentRunner(str(path), output_dir=str(tmp_path))
    assert 'sensor.sigma' in err.value.errors


def test_runner_lists_and_dispatches_commands(tmp_path):
    from speclabrunner import main_module

    runner = CliRunner()
    listing = runner.invoke(main_module, ['--help'])
    assert listing.exit_code == 0
    for command in ('eig', 'specineq', 'sweep', 'lift-check', 'observability', 'control', 'run'):
        assert command in listing.output

    script_help = runner.invoke(main_module, ['sweep', '-h'])
    assert script_help.exit_code == 0
    assert 'SPECTRAL SWEEP' in script_help.output

    path = tmp_path / 'spectral.yaml'
    path.write_text(yaml.safe_dump(dict(SPECTRAL, stages=['eig'])), encoding='utf-8')
    result = runner.invoke(main_module, ['eig', '-c', str(path), '-o', str(tmp_path), '--no-cache'])
    assert result.exit_code == 0
    assert (tmp_path / 'spectral' / 'eigenvalues.csv').is_file()


def test_parse_floats_accepts_spaced_lists():
    from lib.helpers.lab_helpers import parse_floats

    assert parse_floats('4, 8,16 ,') == [4.0, 8.0, 16.0]
    assert parse_floats('0.5;0.25', delimiter=';') == [0.5, 0.25]


def test_misspelled_section_key_is_rejected(tmp_path):
    from experiments.run import ExperimentRunner

    path = tmp_path / 'typo.yaml'
    path.write_text(yaml.safe_dump({'sensor': {'sigm': 1.2}}), encoding='utf-8')
    with pytest.raises(ConfigError) as err:
        ExperimentRunner(str(path), output_dir=str(tmp_path))
    assert 'sensor.sigm' in err.value.errors


def test_failed_command_exits_nonzero(tmp_path):
    from speclabrunner import main_module

    path = tmp_path / 'typo.yaml'
    path.write_text(yaml.safe_dump({'sensor': {'sigm': 1.2}}), encoding='utf-8')
    result = CliRunner().invoke(main_module, ['eig', '-c', str(path), '-o', str(tmp_path), '--no-cache'])
    assert result.exit_code == 1
    assert not (tmp_path / 'spectral' / 'eigenvalues.csv').exists()
