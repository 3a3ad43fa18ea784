"""
Experiment configuration: JSON files validated before anything is written.

A config names the potentials, the grid, the numerics profile and one block
per experiment. Blocks are merged over ``BLOCK_DEFAULTS``; unknown keys are
rejected with the JSON line they appear on.
"""

import copy
import hashlib
import json
import logging
import re
from dataclasses import dataclass, field, replace

from src.errors import ConfigurationError, MagdecayError
from src.fields import Grid3D, PotentialSpec
from src.settings import NumericsSettings

logger = logging.getLogger(__name__)

EXPERIMENTS = ('norms', 'spectrum', 'decay', 'wave', 'quadrature', 'algebra')
TOP_LEVEL_KEYS = ('potentials', 'grid', 'seed', 'profile', 'numerics', 'output') + EXPERIMENTS

BLOCK_DEFAULTS = {
    'norms': {
        'quantities': None,
        'chain': True,
    },
    'spectrum': {
        'k': 4,
        'window': None,
        'agmon_window': [1.5, 4.0],
        'regularity': True,
        'trend': False,
        'count': True,
    },
    'decay': {
        'window': [1.5, 2.25],
        'n_times': 9,
        'k': 4,
        'initial': {'scalar': [{'kind': 'gaussian', 'center': [0, 0, 0], 'amplitude': 1.0, 'width': 1.0}]},
        'tolerance': None,
        'amplitude_tolerance': 0.05,
    },
    'wave': {
        'pairs': None,
        'n_pairs': 4,
        'distance': [4.0, 5.5],
        't_max': 10.0,
        'dt': 0.05,
        'smoothing': 0.9,
        'method': 'auto',
        'k': 4,
        'free_tolerance': 0.02,
        'finite_speed_tolerance': 1e-3,
        'perturbed_factor': 10.0,
    },
    'quadrature': {
        'foci': [[-0.5, 0.0, 0.0], [0.5, 0.0, 0.0]],
        'rho_max': 14.0,
        'rho': [1.5, 2.5, 4.0],
        'lemmas': ['L1', 'L2', 'L3', 'L2LOG', 'L3LOG'],
        'dilation': 2.0,
        'integral_tolerance': 1e-6,
        'dif_tolerance': 1e-4,
        'identity_tolerance': 1e-12,
        'dilation_tolerance': 0.01,
    },
    'algebra': {
        'part': 'T4',
        'foci': [[-0.5, 0.0, 0.0], [0.5, 0.0, 0.0]],
        'rho_max': 4.0,
        'lams': [0.0, 1.0, 2.0],
        'assembly_tolerance': 1e-3,
        'n_random': 50,
        'n_points': 5,
        'n_rho': 64,
        'neumann_tolerance': 1e-8,
    },
}

# value shapes of the keys whose default is null
NULL_DEFAULT_SHAPES = {
    ('norms', 'quantities'): ['K'],
    ('spectrum', 'window'): [0.0],
    ('decay', 'tolerance'): 0.0,
    ('wave', 'pairs'): [[[0.0]]],
}

# experiments whose decay tolerance defaults differ between free and perturbed H
FREE_DECAY_TOLERANCE = 0.05
PERTURBED_DECAY_TOLERANCE = 0.15


def _line_of(text, key):
    """First line (1-based) on which ``"key"`` appears, or None."""
    match = re.search(r'"%s"\s*:' % re.escape(key), text)
    if match is None:
        return None
    return text.count('\n', 0, match.start()) + 1


@dataclass(frozen=True)
class ExperimentConfig:
    A: PotentialSpec
    V: PotentialSpec
    grid: Grid3D
    seed: int = 0
    profile: str = 'balanced'
    numerics: dict = field(default_factory=dict)
    output: str = 'out'
    blocks: dict = field(default_factory=dict)
    source: str = '<config>'

    @property
    def is_free(self):
        return self.A.is_zero and self.V.is_zero

    def block(self, name):
        """Block ``name`` merged over its defaults."""
        merged = copy.deepcopy(BLOCK_DEFAULTS[name])
        merged.update(copy.deepcopy(self.blocks.get(name, {})))
        return merged

    def settings(self):
        settings = NumericsSettings(self.profile)
        if self.numerics:
            settings.set_custom(**self.numerics)
        return settings

    def with_grid(self, n=None, L=None):
        """Copy with the grid overridden from the command line."""
        if n is None and L is None:
            return self
        try:
            grid = Grid3D(self.grid.n if n is None else n, self.grid.L if L is None else L)
        except MagdecayError as exc:
            raise ConfigurationError(f"{self.source}: {exc}") from exc
        return replace(self, grid=grid)

    def to_dict(self):
        return {
            'potentials': {'A': self.A.to_dict(), 'V': self.V.to_dict()},
            'grid': {'n': self.grid.n, 'L': self.grid.L},
            'seed': self.seed,
            'profile': self.profile,
            'numerics': dict(self.numerics),
            'output': self.output,
            **{name: self.block(name) for name in EXPERIMENTS},
        }

    @property
    def digest(self):
        """sha256 of the canonical JSON of the resolved config."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def _matches(value, shape):
    """Whether ``value`` has the JSON type of ``shape`` (lists element-wise against shape[0])."""
    if isinstance(shape, bool):
        return isinstance(value, bool)
    if isinstance(shape, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(shape, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(shape, str):
        return isinstance(value, str)
    if isinstance(shape, list):
        return isinstance(value, list) and (not shape or all(_matches(v, shape[0]) for v in value))
    if isinstance(shape, dict):
        return isinstance(value, dict)
    return True


def _describe(shape):
    if isinstance(shape, bool):
        return 'a boolean'
    if isinstance(shape, int):
        return 'an integer'
    if isinstance(shape, float):
        return 'a number'
    if isinstance(shape, str):
        return 'a string'
    if isinstance(shape, list):
        return f"a list whose items are {_describe(shape[0])}" if shape else 'a list'
    return 'an object'


def _fail(source, text, key, message):
    line = _line_of(text, key) if key else None
    where = f"{source}:{line}" if line else source
    raise ConfigurationError(f"{where}: {message}")


def parse_config(text, source='<config>'):
    """Validate JSON ``text`` into an ExperimentConfig."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"{source}: the config must be a JSON object")

    for key in data:
        if key not in TOP_LEVEL_KEYS:
            _fail(source, text, key, f"unknown key {key!r}; allowed keys: {list(TOP_LEVEL_KEYS)}")

    potentials = data.get('potentials', {})
    if not isinstance(potentials, dict):
        _fail(source, text, 'potentials', "'potentials' must be an object with keys 'A' and 'V'")
    specs = {}
    for name in ('A', 'V'):
        try:
            specs[name] = PotentialSpec.from_dict(potentials.get(name, {}))
        except MagdecayError as exc:
            _fail(source, text, name, f"potential {name}: {exc}")
    if specs['A'].scalar_terms:
        _fail(source, text, 'A', "the magnetic potential A takes 'vector' terms only")
    if specs['V'].has_vector:
        _fail(source, text, 'V', "the electric potential V takes 'scalar' terms only")

    grid_data = data.get('grid', {'n': 32, 'L': 12.0})
    try:
        grid = Grid3D(int(grid_data['n']), float(grid_data['L']))
    except (KeyError, TypeError, ValueError) as exc:
        _fail(source, text, 'grid', f"grid needs integer 'n' and positive 'L': {exc}")

    profile = data.get('profile', 'balanced')
    if profile not in NumericsSettings.PROFILES:
        _fail(source, text, 'profile',
              f"unknown profile {profile!r}; available profiles: {list(NumericsSettings.PROFILES)}")
    numerics = data.get('numerics', {})
    if not isinstance(numerics, dict):
        _fail(source, text, 'numerics', "'numerics' must be an object")
    for key, value in numerics.items():
        if key not in NumericsSettings.LIMITS:
            _fail(source, text, key, f"unknown numerics parameter {key!r}")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            _fail(source, text, key, f"numerics parameter {key!r} must be a number, got {value!r}")

    seed = data.get('seed', 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        _fail(source, text, 'seed', f"seed must be an integer, got {seed!r}")

    blocks = {}
    for name in EXPERIMENTS:
        block = data.get(name, {})
        if not isinstance(block, dict):
            _fail(source, text, name, f"block {name!r} must be an object")
        for key in block:
            if key not in BLOCK_DEFAULTS[name]:
                _fail(source, text, key,
                      f"unknown key {key!r} in block {name!r}; allowed keys: {sorted(BLOCK_DEFAULTS[name])}")
        for key, value in block.items():
            default = BLOCK_DEFAULTS[name][key]
            shape = NULL_DEFAULT_SHAPES.get((name, key), default)
            if value is None and default is None:
                continue
            if not _matches(value, shape):
                _fail(source, text, key, f"{name}.{key} must be {_describe(shape)}, got {value!r}")
        if 'initial' in block:
            try:
                PotentialSpec.from_dict(block['initial'])
            except MagdecayError as exc:
                _fail(source, text, 'initial', f"{name}.initial: {exc}")
        blocks[name] = block

    config = ExperimentConfig(specs['A'], specs['V'], grid, seed, profile, dict(numerics),
                              str(data.get('output', 'out')), blocks, source)
    logger.debug("loaded %s (sha256 %s)", source, config.digest[:12])
    return config


def load_config(path):
    """Read and validate the JSON config at ``path``."""
    try:
        with open(path, encoding='utf-8') as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))
