"""
Run configuration: JSON files with model / train / scenario / solver sections, presets and key=value overrides
"""

import copy
import dataclasses
import json
import logging
import os

from .exceptions import ConfigError
from .model import GnnConfig
from .powerflow import SolverOptions
from .scenario import DEFAULT_DAILY_PROFILE, DEFAULT_SEASONAL_PROFILE, DailyBand, LoadShapeConfig, Season
from .training import TrainConfig


SECTIONS = ('model', 'train', 'scenario', 'solver')

PRESETS = {
    # long patience, plateau reduction
    'standard': {'train': {'patience': 100, 'scheduler': 'plateau'}},
    # short patience, exponential decay
    'exp-decay': {'train': {'patience': 20, 'scheduler': 'exp_decay'}},
    'desk': {'train': {'lr': 1e-3, 'max_epochs': 300, 'patience': 40, 'scheduler': 'plateau'}},
}


def _field_names(cls, exclude=()):
    return {f.name for f in dataclasses.fields(cls)} - set(exclude)


ALLOWED_KEYS = {
    'model': _field_names(GnnConfig, exclude=('n_bus',)),
    'train': _field_names(TrainConfig),
    'scenario': _field_names(LoadShapeConfig),
    'solver': _field_names(SolverOptions),
}


@dataclasses.dataclass
class RunConfig:
    model: dict = dataclasses.field(default_factory=dict)
    train: dict = dataclasses.field(default_factory=dict)
    scenario: dict = dataclasses.field(default_factory=dict)
    solver: dict = dataclasses.field(default_factory=dict)

    def section(self, name):
        return getattr(self, name)

    def to_dict(self):
        return {name: copy.deepcopy(self.section(name)) for name in SECTIONS}

    def model_config(self, n_bus, arch=None):
        data = dict(self.model)
        if arch is not None:
            data['arch'] = arch
        if 'dropout' not in data and 'dropout' in self.train:
            data['dropout'] = self.train['dropout']
        return GnnConfig(n_bus=n_bus, **data)

    def train_config(self, seed=None):
        data = dict(self.train)
        if seed is not None:
            data['seed'] = seed
        return TrainConfig(**data)

    def solver_options(self):
        return SolverOptions(**self.solver)

    def scenario_config(self, seed=None):
        data = dict(self.scenario)
        if seed is not None:
            data['seed'] = seed
        if 'daily_profile' in data:
            data['daily_profile'] = _daily_profile(data['daily_profile'])
        if 'seasonal_profile' in data:
            data['seasonal_profile'] = _seasonal_profile(data['seasonal_profile'])
        return LoadShapeConfig(**data)

    def validate(self):
        """
        Build every section once so bad values fail before any work starts
        """
        builders = [('model', lambda: self.model_config(n_bus=1)), ('train', self.train_config),
                    ('solver', self.solver_options), ('scenario', self.scenario_config)]
        for section, build in builders:
            try:
                build()
            except (TypeError, ValueError) as e:
                if isinstance(e, ConfigError):
                    raise
                raise ConfigError(section, 'invalid value: {0}'.format(e))
        return self


def _daily_profile(data):
    defaults = {band.name: band for band in DEFAULT_DAILY_PROFILE}
    bands = dict(defaults)
    if not isinstance(data, dict):
        raise ConfigError('scenario.daily_profile', 'must map band names to ranges')
    for name, value in data.items():
        field = 'scenario.daily_profile.' + name
        if isinstance(value, dict):
            hours = value.get('hours', defaults[name].hours if name in defaults else None)
            bounds = value.get('range')
        else:
            hours = defaults[name].hours if name in defaults else None
            bounds = value
        if hours is None:
            raise ConfigError(field, 'new bands need an explicit "hours" list')
        if not isinstance(bounds, (list, tuple)) or len(bounds) != 2:
            raise ConfigError(field, 'range must be [low, high]')
        bands[name] = DailyBand(name, tuple(int(h) for h in hours), float(bounds[0]), float(bounds[1]))
    return tuple(bands.values())


def _seasonal_profile(data):
    if not isinstance(data, dict):
        raise ConfigError('scenario.seasonal_profile', 'must map seasons to ranges')
    profile = dict(DEFAULT_SEASONAL_PROFILE)
    for name, bounds in data.items():
        try:
            season = Season(name)
        except ValueError:
            raise ConfigError('scenario.seasonal_profile.' + str(name), 'unknown season')
        if not isinstance(bounds, (list, tuple)) or len(bounds) != 2:
            raise ConfigError('scenario.seasonal_profile.' + name, 'range must be [low, high]')
        profile[season] = (float(bounds[0]), float(bounds[1]))
    return profile


def _merge(config, data, source):
    if not isinstance(data, dict):
        raise ConfigError(source, 'top level must be a JSON object')
    for section, values in data.items():
        if section not in SECTIONS:
            raise ConfigError(section, 'unknown section in {0} (expected {1})'.format(source, ', '.join(SECTIONS)))
        if not isinstance(values, dict):
            raise ConfigError(section, 'must be a JSON object')
        for key, value in values.items():
            if key not in ALLOWED_KEYS[section]:
                raise ConfigError('{0}.{1}'.format(section, key), 'unknown field')
            config.section(section)[key] = value
    return config


def apply_override(config, override):
    """
    :param config: RunConfig, updated in place
    :param override: 'section.key=value', value parsed as JSON when possible
    """
    if '=' not in override:
        raise ConfigError(override, 'override must look like section.key=value')
    key, raw = override.split('=', 1)
    if '.' not in key:
        raise ConfigError(key, 'override key must look like section.key')
    section, field = key.strip().split('.', 1)
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw
    return _merge(config, {section: {field: value}}, 'override')


def load_config(source=None, overrides=()):
    """
    :param source: None, a preset name or a JSON file path
    :param overrides: iterable of 'section.key=value'
    :return: validated RunConfig
    """
    logger = logging.getLogger('gridflow.config')
    config = RunConfig()
    if source:
        if source in PRESETS:
            _merge(config, copy.deepcopy(PRESETS[source]), 'preset ' + source)
            logger.debug('Using preset %s', source)
        elif os.path.isfile(source):
            with open(source, encoding='utf-8') as f:
                try:
                    data = json.load(f)
                except ValueError as e:
                    raise ConfigError(source, 'invalid JSON: {0}'.format(e))
            _merge(config, data, source)
        else:
            raise ConfigError('--config', 'no preset or file named {0!r} (presets: {1})'.format(
                source, ', '.join(sorted(PRESETS))))
    for override in overrides or ():
        apply_override(config, override)
    return config.validate()
