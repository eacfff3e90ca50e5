from pathlib import Path

import pytest

from lib.config import apply_overrides, dump_config, flatten_errors, load_config, parse_config
from lib.helpers.exceptions import ConfigError

CONFIGS = Path(__file__).parent.parent / "configs" / "experiments"


def _errors(raw: dict) -> dict:
    with pytest.raises(ConfigError) as err:
        parse_config(raw)
    return err.value.errors


def test_defaults():
    config = parse_config({})
    assert config.name == 'experiment'
    assert config.domain.dim == 1
    assert config.eigen.lambda_max == 220.0 and config.eigen.count is None
    assert config.sensor.kind == 'thick_periodic' and config.sensor.delta == 0.5
    assert config.heat.J_intervals == ((0.0, 1.0),)
    assert config.output.formats == ('csv', 'json')
    assert config.stages == ('eig', 'sweep')
    assert config.cache


def test_sections_merge_with_defaults():
    config = parse_config({'sensor': {'kind': 'density_random', 'sigma': 0.5}, 'eigen': {'count': 12}})
    assert config.sensor.sigma == 0.5
    assert config.sensor.delta == 0.5
    assert config.eigen.count == 12 and config.eigen.lambda_max is None


def test_sigma_out_of_range_names_the_field():
    errors = _errors({'sensor': {'sigma': 1.2}})
    assert list(errors) == ['sensor.sigma']
    assert 'σ ∈ [0,1) required' in errors['sensor.sigma'][0]


@pytest.mark.parametrize("raw, path", [
    ({'sensor': {'delta': 1.0}}, 'sensor.delta'),
    ({'domain': {'dim': 3}}, 'domain.dim'),
    ({'eigen': {'lambda_max': 10.0, 'count': 5}}, 'eigen.count'),
    ({'potential': {'beta1': 2.0, 'beta2': 1.0}}, 'potential.beta2'),
    ({'lift': {'s_points': 40}}, 'lift.s_points'),
    ({'heat': {'T': 1.0, 'J_intervals': [[0.5, 1.5]]}}, 'heat.J_intervals'),
    ({'heat': {'alpha': 1.0}}, 'heat.alpha'),
    ({'sweep': {'values': [1.0, 2.0]}}, 'sweep.values'),
    ({'stages': ['eig', 'plot']}, 'stages.1'),
    ({'bogus': 1}, 'bogus'),
    ({'sensor': {'sigm': 1.2}}, 'sensor.sigm'),
    ({'control': {'modes': 20, 'tolerance': 1e-8}}, 'control.tolerance'),
])
def test_invalid_fields_are_reported_by_path(raw, path):
    assert path in _errors(raw)


def test_top_level_must_be_mapping():
    assert '_schema' in _errors(['eig'])


def test_flatten_errors():
    nested = {'sensor': {'sigma': ['bad']}, 'stages': {1: ['unknown']}, '_schema': ['top']}
    assert flatten_errors(nested) == {'sensor.sigma': ['bad'], 'stages.1': ['unknown'], '_schema': ['top']}


def test_load_config_reports_file_problems(tmp_path):
    with pytest.raises(ConfigError) as err:
        load_config(tmp_path / "missing.yaml")
    assert '_file' in err.value.errors

    broken = tmp_path / "broken.yaml"
    broken.write_text("sensor: [delta: 0.5\n", encoding='utf-8')
    with pytest.raises(ConfigError) as err:
        load_config(broken)
    assert '_file' in err.value.errors

    empty = tmp_path / "empty.yaml"
    empty.write_text("", encoding='utf-8')
    assert load_config(empty) == parse_config({})


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_sample_configurations_validate(path):
    config = load_config(path)
    assert config.name == path.stem


def test_overrides():
    config = parse_config({'seed': 3, 'threads': 2})
    changed = apply_overrides(config, output_dir='/tmp/out', threads=4, seed=9, no_cache=True)
    assert (changed.output.dir, changed.threads, changed.seed, changed.cache) == ('/tmp/out', 4, 9, False)
    assert apply_overrides(config) is config
    with pytest.raises(ConfigError):
        apply_overrides(config, threads=0)


def test_seed_flag_also_reseeds_an_explicit_sensor_seed():
    config = parse_config({'seed': 3, 'sensor': {'kind': 'density_random', 'seed': 7}})
    changed = apply_overrides(config, seed=11)
    assert (changed.seed, changed.sensor.seed) == (11, 11)
    assert apply_overrides(parse_config({}), seed=11).sensor.seed is None


def test_dump_config_is_plain():
    dumped = dump_config(parse_config({'heat': {'J_intervals': [[0.0, 0.5]]}}))
    assert dumped['heat']['J_intervals'] == [[0.0, 0.5]]
    assert dumped['stages'] == ['eig', 'sweep']


def test_dumped_config_parses_back_unchanged():
    config = parse_config({'eigen': {'count': 12}, 'heat': {'deltas': [0.5, 0.25]}, 'output': {'formats': ['csv']}})
    assert parse_config(dump_config(config)) == config
