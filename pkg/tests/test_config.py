import json

import pytest

from runner.config import BLOCK_DEFAULTS, EXPERIMENTS, load_config, parse_config
from src.errors import ConfigurationError

ZERO = {
    'potentials': {'A': {'scalar': []}, 'V': {'scalar': []}},
    'grid': {'n': 16, 'L': 4.0},
    'profile': 'quick',
}


def text_of(data):
    return json.dumps(data, indent=2)


def test_defaults_are_merged():
    config = parse_config(text_of(dict(ZERO, decay={'n_times': 5})))
    assert config.is_free
    assert config.grid.n == 16 and config.grid.L == 4.0
    decay = config.block('decay')
    assert decay['n_times'] == 5
    assert decay['window'] == BLOCK_DEFAULTS['decay']['window']
    assert set(config.to_dict()) >= set(EXPERIMENTS)


def test_block_defaults_are_not_shared():
    config = parse_config(text_of(ZERO))
    config.block('wave')['distance'].append(9.0)
    assert config.block('wave')['distance'] == BLOCK_DEFAULTS['wave']['distance']


def test_digest_follows_the_resolved_config():
    first = parse_config(text_of(ZERO))
    assert first.digest == parse_config(json.dumps(ZERO)).digest
    assert first.digest != parse_config(text_of(dict(ZERO, seed=3))).digest
    # spelling out a default does not change the resolved config
    explicit = dict(ZERO, norms={'chain': True})
    assert first.digest == parse_config(text_of(explicit)).digest


def test_malformed_json_reports_position():
    text = '{\n  "grid": {"n": 16, "L": 4.0},\n  "seed": ,\n}'
    with pytest.raises(ConfigurationError, match=r'bad\.json:3:'):
        parse_config(text, 'bad.json')


def test_unknown_keys_report_their_line():
    text = text_of(dict(ZERO, decay={'windw': [1, 2]}))
    line = text.splitlines().index('    "windw": [') + 1
    with pytest.raises(ConfigurationError, match=rf'cfg:{line}: unknown key \'windw\''):
        parse_config(text, 'cfg')
    with pytest.raises(ConfigurationError, match='unknown key'):
        parse_config(text_of(dict(ZERO, colour='red')))


@pytest.mark.parametrize('patch', [
    {'profile': 'sloppy'},
    {'numerics': {'gl_order': 'many'}},
    {'numerics': {'mesh': 3}},
    {'seed': 1.5},
    {'grid': {'n': 16}},
    {'spectrum': []},
    {'potentials': {'A': {'scalar': [{'kind': 'gaussian'}]}}},
    {'potentials': {'V': {'vector': [[{'kind': 'gaussian'}], [], []]}}},
    {'potentials': {'V': {'scalar': [{'kind': 'cube'}]}}},
])
def test_invalid_configs(patch):
    with pytest.raises(ConfigurationError):
        parse_config(text_of(dict(ZERO, **patch)))


def test_settings_and_grid_overrides():
    config = parse_config(text_of(dict(ZERO, numerics={'gl_order': 10, 'phi_nodes': 1000})))
    settings = config.settings()
    assert settings.gl_order == 10
    assert settings.phi_nodes == 256
    assert settings.profile == 'custom'
    assert config.with_grid(n=32).grid.n == 32
    assert config.with_grid(L=6.0).grid.L == 6.0
    assert config.with_grid() is config
    with pytest.raises(ConfigurationError):
        config.with_grid(n=12)


def test_load_config(tmp_path):
    path = tmp_path / 'zero.json'
    path.write_text(text_of(ZERO))
    assert load_config(path).source == str(path)
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / 'missing.json')


@pytest.mark.parametrize('block, value', [
    ({'quadrature': {'rho_max': 'far'}}, 'rho_max'),
    ({'decay': {'n_times': 4.5}}, 'n_times'),
    ({'spectrum': {'trend': 'yes'}}, 'trend'),
    ({'wave': {'distance': [4.0, 'x']}}, 'distance'),
    ({'algebra': {'foci': [[0, 0, 0], 'z']}}, 'foci'),
    ({'decay': {'tolerance': 'loose'}}, 'tolerance'),
    ({'norms': {'quantities': [1, 2]}}, 'quantities'),
    ({'decay': {'initial': {'scalar': [{'kind': 'cube'}]}}}, 'initial'),
])
def test_block_value_types_report_their_line(block, value):
    text = text_of(dict(ZERO, **block))
    line = next(i for i, row in enumerate(text.splitlines(), 1) if f'"{value}":' in row)
    with pytest.raises(ConfigurationError, match=rf'^cfg:{line}: '):
        parse_config(text, 'cfg')


def test_null_defaults_accept_null_and_values():
    config = parse_config(text_of(dict(ZERO, decay={'tolerance': None}, spectrum={'window': [0, 2.5]},
                                       wave={'pairs': [[[0, 0, 0], [1.0, 0, 0]]]})))
    assert config.block('decay')['tolerance'] is None
    assert config.block('spectrum')['window'] == [0, 2.5]
    assert config.block('wave')['pairs'] == [[[0, 0, 0], [1.0, 0, 0]]]
