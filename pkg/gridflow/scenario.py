"""
Load scenario generation and dataset files
"""

import concurrent.futures
import dataclasses
import enum
import json
import logging
import os

import numpy as np
import pandas as pd

from .exceptions import ConfigError, ContractError, DatasetError
from .grid import BusType, build_ybus, load_case, scheduled_injection, with_loads
from .powerflow import SolverOptions, solve_newton_raphson
from .utils import atomic_write, staging_dir, worker_count


FEATURE_COLUMNS = ['p', 'q', 'v_in', 'delta_in', 'is_pv', 'is_pq', 'is_slack']
TARGET_COLUMNS = ['v_target', 'delta_target']
DATASET_COLUMNS = ['sample_id', 'bus_id'] + FEATURE_COLUMNS + TARGET_COLUMNS
CONDITION_COLUMNS = ['sample_id', 'hour', 'season', 'multiplier', 'attempts']
N_CONTINUOUS = 4

MAX_REDRAWS = 20
MAX_FAILURE_RATE = 0.05
MANIFEST_NAME = 'manifest.json'


class Season(enum.Enum):
    WINTER = 'winter'
    SUMMER = 'summer'
    SPRING_FALL = 'spring_fall'


@dataclasses.dataclass(frozen=True)
class DailyBand:
    name: str
    hours: tuple
    low: float
    high: float

    @property
    def midpoint(self):
        return 0.5 * (self.low + self.high)


DEFAULT_DAILY_PROFILE = (
    DailyBand('morning_ramp', (6, 7, 8, 9), 0.60, 0.70),
    DailyBand('midday_peak', (10, 11, 12, 13, 14, 15), 1.10, 1.20),
    DailyBand('evening_peak', (17, 18, 19, 20, 21), 1.10, 1.20),
    DailyBand('night', (23, 0, 1, 2, 3, 4, 5), 0.60, 0.70),
)

DEFAULT_SEASONAL_PROFILE = {
    Season.WINTER: (1.2, 1.4),
    Season.SUMMER: (1.1, 1.3),
    Season.SPRING_FALL: (0.9, 1.1),
}


@dataclasses.dataclass(frozen=True)
class LoadShapeConfig:
    variation_fraction: float = 0.40
    daily_profile: tuple = DEFAULT_DAILY_PROFILE
    seasonal_profile: dict = dataclasses.field(default_factory=lambda: dict(DEFAULT_SEASONAL_PROFILE))
    seed: int = 0
    use_daily: bool = True
    use_seasonal: bool = True

    def __post_init__(self):
        if not 0 <= self.variation_fraction < 1:
            raise ConfigError('scenario.variation_fraction', 'must lie in [0, 1), got {0!r}'.format(self.variation_fraction))
        covered = set()
        for band in self.daily_profile:
            if not 0 < band.low <= band.high:
                raise ConfigError('scenario.daily_profile.{0}'.format(band.name), 'needs 0 < low <= high')
            for hour in band.hours:
                if not 0 <= hour <= 23:
                    raise ConfigError('scenario.daily_profile.{0}'.format(band.name), 'hour {0} out of range'.format(hour))
                if hour in covered:
                    raise ConfigError('scenario.daily_profile.{0}'.format(band.name), 'hour {0} in two bands'.format(hour))
                covered.add(hour)
        if not self.daily_profile:
            raise ConfigError('scenario.daily_profile', 'needs at least one band')
        for season in Season:
            if season not in self.seasonal_profile:
                raise ConfigError('scenario.seasonal_profile', 'missing season {0}'.format(season.value))
            low, high = self.seasonal_profile[season]
            if not 0 < low <= high:
                raise ConfigError('scenario.seasonal_profile.{0}'.format(season.value), 'needs 0 < low <= high')

    def to_dict(self):
        return {
            'variation_fraction': self.variation_fraction,
            'daily_profile': {band.name: {'hours': list(band.hours), 'range': [band.low, band.high]}
                              for band in self.daily_profile},
            'seasonal_profile': {season.value: list(self.seasonal_profile[season]) for season in Season},
            'seed': self.seed,
            'use_daily': self.use_daily,
            'use_seasonal': self.use_seasonal,
            'composition': 'base * daily * seasonal * (1 + u), u ~ U(-variation_fraction, variation_fraction)',
        }


@dataclasses.dataclass(frozen=True)
class SampleRecord:
    sample_id: int
    features: np.ndarray
    targets: np.ndarray

    def frame(self, bus_numbers):
        frame = pd.DataFrame(self.features, columns=FEATURE_COLUMNS)
        for column in TARGET_COLUMNS:
            frame[column] = self.targets[:, TARGET_COLUMNS.index(column)]
        frame.insert(0, 'bus_id', list(bus_numbers))
        frame.insert(0, 'sample_id', self.sample_id)
        for column in ('is_pv', 'is_pq', 'is_slack'):
            frame[column] = frame[column].astype(np.int64)
        return frame


@dataclasses.dataclass(frozen=True)
class Dataset:
    """
    Samples of one dataset file, stacked
    """
    features: np.ndarray
    targets: np.ndarray
    sample_ids: np.ndarray
    bus_ids: tuple
    name: str = ''

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_bus(self):
        return self.features.shape[1]

    def take(self, indices, name=None):
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(features=self.features[indices], targets=self.targets[indices],
                       sample_ids=self.sample_ids[indices], bus_ids=self.bus_ids, name=name or self.name)


@dataclasses.dataclass(frozen=True)
class DatasetManifest:
    case: str
    scenarios: int
    samples_per_scenario: int
    seed: int
    n_bus: int
    config: dict
    solver: dict
    files: tuple
    condition_files: tuple
    attempts: int = 0
    failures: int = 0

    def to_dict(self):
        return {
            'case': self.case,
            'scenarios': self.scenarios,
            'samples_per_scenario': self.samples_per_scenario,
            'total_samples': self.scenarios * self.samples_per_scenario,
            'seed': self.seed,
            'n_bus': self.n_bus,
            'config': self.config,
            'solver': self.solver,
            'files': list(self.files),
            'condition_files': list(self.condition_files),
            'attempts': self.attempts,
            'failures': self.failures,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(case=data['case'], scenarios=int(data['scenarios']),
                       samples_per_scenario=int(data['samples_per_scenario']), seed=int(data['seed']),
                       n_bus=int(data['n_bus']), config=data['config'], solver=data['solver'],
                       files=tuple(data['files']), condition_files=tuple(data.get('condition_files', ())),
                       attempts=int(data.get('attempts', 0)), failures=int(data.get('failures', 0)))
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetError('Malformed manifest: {0}'.format(e))


def _band_for_hour(profile, hour):
    for band in profile:
        if hour in band.hours:
            return band
    return None


def _interpolated_midpoint(profile, hour):
    """
    Linear interpolation between the midpoints of the nearest covered hours on each side (wrapping at midnight)
    """
    before = after = None
    for step in range(1, 24):
        if before is None and _band_for_hour(profile, (hour - step) % 24) is not None:
            before = (step, _band_for_hour(profile, (hour - step) % 24))
        if after is None and _band_for_hour(profile, (hour + step) % 24) is not None:
            after = (step, _band_for_hour(profile, (hour + step) % 24))
    (d_before, band_before), (d_after, band_after) = before, after
    t = d_before / float(d_before + d_after)
    return band_before.midpoint + t * (band_after.midpoint - band_before.midpoint)


def daily_multiplier(hour, rng, profile=DEFAULT_DAILY_PROFILE):
    """
    Time-of-day load factor
    :param hour: 0..23
    :param rng: numpy Generator
    :param profile: tuple of DailyBand
    :return: uniform draw from the hour's band, or the interpolated midpoint for uncovered hours
    """
    if int(hour) != hour or not 0 <= hour <= 23:
        raise ContractError('hour must be an integer in 0..23, got {0!r}'.format(hour))
    band = _band_for_hour(profile, hour)
    if band is None:
        return _interpolated_midpoint(profile, hour)
    return float(rng.uniform(band.low, band.high))


def seasonal_multiplier(season, rng, profile=None):
    """
    Seasonal load factor
    :param season: Season
    :param rng: numpy Generator
    :param profile: season -> (low, high), default ranges when omitted
    :return: uniform draw from the season's range
    """
    profile = profile or DEFAULT_SEASONAL_PROFILE
    low, high = profile[Season(season)]
    return float(rng.uniform(low, high))


def draw_conditions(cfg, rng):
    """
    Draw hour and season uniformly and compose their multipliers
    :param cfg: LoadShapeConfig
    :param rng: numpy Generator
    :return: (hour, season, multiplier)
    """
    hour = int(rng.integers(0, 24))
    season = list(Season)[int(rng.integers(0, len(Season)))]
    multiplier = 1.0
    if cfg.use_daily:
        multiplier *= daily_multiplier(hour, rng, cfg.daily_profile)
    if cfg.use_seasonal:
        multiplier *= seasonal_multiplier(season, rng, cfg.seasonal_profile)
    return hour, season, multiplier


def perturb_loads(net, cfg, rng, multiplier=None):
    """
    Scale and randomly perturb every load; generator dispatch follows the total load
    :param net: base Network
    :param cfg: LoadShapeConfig
    :param rng: numpy Generator
    :param multiplier: shared daily x seasonal factor (drawn from rng when None)
    :return: perturbed Network
    """
    if multiplier is None:
        _, _, multiplier = draw_conditions(cfg, rng)

    p_load = np.array([bus.p_load for bus in net.buses])
    q_load = np.array([bus.q_load for bus in net.buses])
    is_load = (p_load != 0.0) | (q_load != 0.0)

    u = np.zeros(net.n_bus)
    u[is_load] = rng.uniform(-cfg.variation_fraction, cfg.variation_fraction, size=int(is_load.sum()))
    factor = np.where(is_load, multiplier * (1.0 + u), 1.0)
    new_p = p_load * factor
    new_q = q_load * factor

    base_total = p_load.sum()
    ratio = new_p.sum() / base_total if base_total != 0.0 else 1.0
    p_gen = [gen.p_gen * ratio for gen in net.generators]
    return with_loads(net, new_p, new_q, p_gen)


def encode_features(net, sol, sample_id=0):
    """
    Build the per-bus input features and targets of one sample
    :param net: Network the solution belongs to
    :param sol: converged PowerFlowSolution
    :param sample_id: identifier written to the dataset
    :return: SampleRecord
    """
    if not sol.converged:
        raise ContractError('Sample {0} is not a converged solution.'.format(sample_id))
    p, q = scheduled_injection(net)
    features = np.zeros((net.n_bus, len(FEATURE_COLUMNS)))
    features[:, 0] = p
    features[:, 1] = q
    features[:, 2] = 1.0
    for bus in net.buses:
        if bus.bus_type == BusType.SLACK:
            features[bus.id, 2] = bus.v_setpoint
            features[bus.id, 3] = bus.angle_setpoint
            features[bus.id, 6] = 1.0
        elif bus.bus_type == BusType.PV:
            features[bus.id, 2] = bus.v_setpoint
            features[bus.id, 4] = 1.0
        else:
            features[bus.id, 5] = 1.0
    targets = np.stack([sol.state.v, sol.state.delta], axis=1)
    return SampleRecord(sample_id=int(sample_id), features=features, targets=targets)


def _generate_sample(net, ybus_cache, cfg, opts, scenario, sample_id):
    logger = logging.getLogger('gridflow.scenario')
    failures = 0
    for attempt in range(MAX_REDRAWS + 1):
        rng = np.random.default_rng([cfg.seed, scenario, sample_id, attempt])
        hour, season, multiplier = draw_conditions(cfg, rng)
        perturbed = perturb_loads(net, cfg, rng, multiplier)
        sol = solve_newton_raphson(perturbed, opts, y=ybus_cache)
        if sol.converged:
            record = encode_features(perturbed, sol, sample_id)
            conditions = (sample_id, hour, season.value, multiplier, attempt + 1)
            return record, conditions, failures
        failures += 1
        logger.warning('Sample %d of scenario %d did not converge (hour %d, %s, x%.3f), re-drawing.',
                       sample_id, scenario + 1, hour, season.value, multiplier)
    raise DatasetError('Sample {0} of scenario {1} failed to converge after {2} re-draws.'.format(
        sample_id, scenario + 1, MAX_REDRAWS))


def scenario_file_name(scenario):
    return 'scenario_{0:02d}.csv'.format(scenario + 1)


def generate_dataset(case, cfg, scenarios, samples_per, out_dir, opts=None, workers=None):
    """
    Generate load scenarios, solve them and write one CSV per scenario plus a manifest
    :param case: Network or case name / path
    :param cfg: LoadShapeConfig (cfg.seed is the master seed)
    :param scenarios: number of dataset files
    :param samples_per: samples per file
    :param out_dir: directory receiving the files
    :param opts: SolverOptions
    :param workers: worker threads (capped by GRIDFLOW_THREADS)
    :return: DatasetManifest
    """
    logger = logging.getLogger('gridflow.scenario')
    net = load_case(case) if isinstance(case, str) else case
    opts = opts or SolverOptions()
    if scenarios < 1 or samples_per < 1:
        raise ConfigError('scenario.counts', 'scenarios and samples per scenario must be >= 1')

    # loads do not enter Ybus, one matrix serves every sample
    ybus = build_ybus(net)
    files = []
    condition_files = []
    attempts = 0
    failures = 0
    n_workers = worker_count(workers)
    logger.info('Generating %d x %d samples for %s on %d worker(s).', scenarios, samples_per, net.name, n_workers)
    logger.info('Load composition: base x daily x seasonal x (1 + u), u ~ U(-%.2f, %.2f).',
                cfg.variation_fraction, cfg.variation_fraction)

    with staging_dir(out_dir) as stage:
        with concurrent.futures.ThreadPoolExecutor(max_workers=n_workers) as pool:
            for scenario in range(scenarios):
                ids = range(scenario * samples_per, (scenario + 1) * samples_per)
                results = list(pool.map(
                    lambda sample_id: _generate_sample(net, ybus, cfg, opts, scenario, sample_id), ids))

                frames = [record.frame(net.bus_numbers) for record, _, _ in results]
                conditions = pd.DataFrame([c for _, c, _ in results], columns=CONDITION_COLUMNS)
                failures += sum(f for _, _, f in results)
                attempts += sum(c[-1] for _, c, _ in results)

                name = scenario_file_name(scenario)
                cond_name = name.replace('.csv', '.conditions.csv')
                frame = pd.concat(frames, ignore_index=True)[DATASET_COLUMNS]
                frame.to_csv(os.path.join(stage, name), index=False, float_format='%.17g', lineterminator='\n')
                conditions.to_csv(os.path.join(stage, cond_name), index=False, float_format='%.17g',
                                  lineterminator='\n')
                files.append(name)
                condition_files.append(cond_name)
                logger.info('Scenario %d/%d written (%d samples).', scenario + 1, scenarios, samples_per)

        rate = failures / float(attempts)
        if rate > MAX_FAILURE_RATE:
            raise DatasetError('Convergence failure rate {0:.1%} over {1} attempts exceeds {2:.0%}; '
                               'reduce variation_fraction or the multiplier ranges.'.format(
                                   rate, attempts, MAX_FAILURE_RATE))

        manifest = DatasetManifest(case=net.name, scenarios=scenarios, samples_per_scenario=samples_per,
                                   seed=cfg.seed, n_bus=net.n_bus, config=cfg.to_dict(),
                                   solver=dataclasses.asdict(opts), files=tuple(files),
                                   condition_files=tuple(condition_files), attempts=attempts, failures=failures)
        with atomic_write(os.path.join(stage, MANIFEST_NAME)) as f:
            json.dump(manifest.to_dict(), f, indent=2, sort_keys=True)
            f.write('\n')
    if failures:
        logger.warning('%d of %d attempts did not converge and were re-drawn.', failures, attempts)
    return manifest


def read_manifest(path):
    """
    :param path: manifest file or the directory containing it
    :return: DatasetManifest
    """
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    with open(path, encoding='utf-8') as f:
        return DatasetManifest.from_dict(json.load(f))


def read_dataset(path):
    """
    Read a dataset CSV into stacked arrays
    :param path: dataset CSV
    :return: Dataset with features (samples, n_bus, 7) and targets (samples, n_bus, 2)
    """
    frame = pd.read_csv(path)
    missing = [column for column in DATASET_COLUMNS if column not in frame.columns]
    if missing:
        raise DatasetError('{0}: missing columns {1}.'.format(path, missing))
    if frame.empty:
        raise DatasetError('{0}: no samples.'.format(path))

    sample_ids = pd.unique(frame['sample_id'])
    n_bus = len(frame) // len(sample_ids)
    if n_bus * len(sample_ids) != len(frame) or any(frame.groupby('sample_id', sort=False).size() != n_bus):
        raise DatasetError('{0}: samples do not all have the same number of bus rows.'.format(path))

    bus_ids = tuple(int(b) for b in frame['bus_id'].iloc[:n_bus])
    features = frame[FEATURE_COLUMNS].to_numpy(dtype=np.float64).reshape(len(sample_ids), n_bus, len(FEATURE_COLUMNS))
    targets = frame[TARGET_COLUMNS].to_numpy(dtype=np.float64).reshape(len(sample_ids), n_bus, len(TARGET_COLUMNS))
    if np.any(features[:, :, N_CONTINUOUS:].sum(axis=2) != 1.0):
        raise DatasetError('{0}: bus type one-hot columns do not sum to 1.'.format(path))
    name = os.path.splitext(os.path.basename(path))[0]
    return Dataset(features=features, targets=targets, sample_ids=np.asarray(sample_ids, dtype=np.int64),
                   bus_ids=bus_ids, name=name)


def write_dataset(dataset, path):
    """
    Write a Dataset in the dataset CSV format
    :param dataset: Dataset
    :param path: output CSV
    """
    frames = [SampleRecord(sample_id=int(sid), features=features, targets=targets).frame(dataset.bus_ids)
              for sid, features, targets in zip(dataset.sample_ids, dataset.features, dataset.targets)]
    with atomic_write(path) as f:
        pd.concat(frames, ignore_index=True)[DATASET_COLUMNS].to_csv(
            f, index=False, float_format='%.17g', lineterminator='\n')


def dataset_files(path):
    """
    Dataset CSVs listed by a manifest (directory or manifest path), in scenario order
    """
    manifest = read_manifest(path)
    directory = path if os.path.isdir(path) else os.path.dirname(path)
    return [os.path.join(directory, name) for name in manifest.files]
