"""
Normalization, optimizer, learning-rate schedules and the training loop
"""

import dataclasses
import enum
import json
import logging
import math
import os

import numpy as np
import pandas as pd
import tensorflow as tf

from .autodiff import backward
from .exceptions import ConfigError, ContractError, DatasetError, TrainingError
from .model import init_params, model_forward
from .scenario import N_CONTINUOUS
from .utils import atomic_write


STD_FLOOR = 1e-8
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8
EVAL_CHUNK = 1024
HISTORY_COLUMNS = ['epoch', 'train_loss', 'val_loss', 'lr']


def enable_determinism():
    if hasattr(tf.config.experimental, 'enable_op_determinism'):
        tf.config.experimental.enable_op_determinism()


@dataclasses.dataclass(frozen=True)
class NormStats:
    """
    z-score statistics of the continuous features (p, q, v_in, delta_in) and the targets (v, delta)
    """
    feature_mean: np.ndarray
    feature_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray

    def __post_init__(self):
        for name in ('feature_mean', 'feature_std', 'target_mean', 'target_std'):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if np.any(self.feature_std <= 0) or np.any(self.target_std <= 0):
            raise ContractError('Normalization stds must be positive.')

    def normalize_features(self, features):
        out = np.array(features, dtype=np.float64)
        out[..., :N_CONTINUOUS] = (out[..., :N_CONTINUOUS] - self.feature_mean) / self.feature_std
        return out

    def normalize_targets(self, targets):
        return (np.asarray(targets, dtype=np.float64) - self.target_mean) / self.target_std

    def denormalize_targets(self, targets):
        return np.asarray(targets, dtype=np.float64) * self.target_std + self.target_mean

    def to_dict(self):
        return {name: getattr(self, name).tolist()
                for name in ('feature_mean', 'feature_std', 'target_mean', 'target_std')}

    @classmethod
    def from_dict(cls, data):
        return cls(**{name: data[name] for name in ('feature_mean', 'feature_std', 'target_mean', 'target_std')})


def compute_norm_stats(dataset):
    """
    Per-column mean / std over every sample and bus of the training split; bus-type columns are left out
    :param dataset: Dataset
    :return: NormStats
    """
    if dataset is None or len(dataset) == 0:
        raise DatasetError('Cannot compute normalization statistics of an empty split.')
    features = dataset.features[..., :N_CONTINUOUS].reshape(-1, N_CONTINUOUS)
    targets = dataset.targets.reshape(-1, dataset.targets.shape[-1])
    return NormStats(feature_mean=features.mean(axis=0),
                     feature_std=np.maximum(features.std(axis=0), STD_FLOOR),
                     target_mean=targets.mean(axis=0),
                     target_std=np.maximum(targets.std(axis=0), STD_FLOOR))


def targets_to_vector(targets):
    """
    (..., n_bus, 2) -> (..., 2 * n_bus) ordered [v_1..v_n, delta_1..delta_n]
    """
    targets = np.asarray(targets)
    moved = np.swapaxes(targets, -1, -2)
    return moved.reshape(moved.shape[:-2] + (-1,))


def vector_to_targets(vector, n_bus):
    vector = np.asarray(vector)
    return np.swapaxes(vector.reshape(vector.shape[:-1] + (2, n_bus)), -1, -2)


class Scheduler(enum.Enum):
    PLATEAU = 'plateau'
    EXP_DECAY = 'exp_decay'


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-5
    l2_lambda: float = 1e-6
    batch_size: int = 16
    max_epochs: int = 800
    patience: int = 100
    dropout: float = 0.2
    scheduler: Scheduler = Scheduler.PLATEAU
    seed: int = 0
    plateau_factor: float = 0.5
    plateau_patience: int = 10
    plateau_threshold: float = 1e-6
    decay_factor: float = 0.9
    decay_every: int = 10

    def __post_init__(self):
        try:
            object.__setattr__(self, 'scheduler', Scheduler(self.scheduler))
        except ValueError:
            raise ConfigError('train.scheduler', 'must be one of {0}, got {1!r}'.format(
                [s.value for s in Scheduler], self.scheduler))
        for name in ('lr', 'decay_factor', 'plateau_factor'):
            if not getattr(self, name) > 0:
                raise ConfigError('train.' + name, 'must be positive, got {0!r}'.format(getattr(self, name)))
        if self.l2_lambda < 0:
            raise ConfigError('train.l2_lambda', 'must not be negative')
        for name in ('batch_size', 'max_epochs', 'patience', 'plateau_patience', 'decay_every'):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError('train.' + name, 'must be a positive integer, got {0!r}'.format(value))
        if self.patience > self.max_epochs:
            raise ConfigError('train.patience', 'must not exceed max_epochs ({0})'.format(self.max_epochs))
        if not 0 <= self.dropout < 1:
            raise ConfigError('train.dropout', 'must lie in [0, 1), got {0!r}'.format(self.dropout))

    def to_dict(self):
        data = dataclasses.asdict(self)
        data['scheduler'] = self.scheduler.value
        return data


@dataclasses.dataclass
class SchedulerState:
    lr: float
    best: float = math.inf
    bad_epochs: int = 0


def lr_update(scheduler, state, epoch, val_loss, cfg=None):
    """
    Learning rate after a finished epoch
    :param scheduler: Scheduler
    :param state: SchedulerState, updated in place
    :param epoch: 1-based epoch that just finished
    :param val_loss: its validation loss
    :param cfg: TrainConfig holding factors and windows (defaults when None)
    :return: new learning rate
    """
    logger = logging.getLogger('gridflow.training')
    cfg = cfg or TrainConfig()
    scheduler = Scheduler(scheduler)
    if scheduler == Scheduler.EXP_DECAY:
        if epoch > 0 and epoch % cfg.decay_every == 0:
            state.lr *= cfg.decay_factor
        return state.lr

    if val_loss < state.best - cfg.plateau_threshold:
        state.best = val_loss
        state.bad_epochs = 0
    else:
        state.bad_epochs += 1
        if state.bad_epochs >= cfg.plateau_patience:
            state.lr *= cfg.plateau_factor
            state.bad_epochs = 0
            logger.warning('Validation loss stalled for %d epochs, learning rate reduced to %.3e.',
                           cfg.plateau_patience, state.lr)
    return state.lr


class AdamState(object):
    """
    First and second moment estimates for a list of variables
    """
    def __init__(self, params):
        self.m = [tf.Variable(tf.zeros_like(p), trainable=False) for p in params]
        self.v = [tf.Variable(tf.zeros_like(p), trainable=False) for p in params]
        self.t = tf.Variable(0.0, dtype=tf.float64, trainable=False)


def adam_step(params, grads, state, lr, l2_lambda=0.0):
    """
    One bias-corrected Adam update with the L2 term added to the gradients
    :param params: list of tf.Variable, updated in place
    :param grads: gradients matching params
    :param state: AdamState
    :param lr: learning rate (float or scalar tensor)
    :param l2_lambda: L2 coefficient
    """
    if len(params) != len(grads):
        raise ContractError('adam_step got {0} parameters and {1} gradients.'.format(len(params), len(grads)))
    lr = tf.cast(lr, tf.float64)
    state.t.assign_add(1.0)
    correction1 = 1.0 - tf.pow(tf.constant(ADAM_BETA1, tf.float64), state.t)
    correction2 = 1.0 - tf.pow(tf.constant(ADAM_BETA2, tf.float64), state.t)
    for w, g, m, v in zip(params, grads, state.m, state.v):
        g = tf.cast(g, tf.float64) + l2_lambda * w
        m.assign(ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g)
        v.assign(ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * tf.square(g))
        w.assign_sub(lr * (m / correction1) / (tf.sqrt(v / correction2) + ADAM_EPSILON))


class EarlyStopping(object):
    """
    Stop when the validation loss has not improved for patience epochs
    """
    def __init__(self, patience):
        self.patience = patience
        self.best_loss = math.inf
        self.best_epoch = 0
        self.counter = 0

    def __call__(self, epoch, val_loss):
        """
        :return: True when val_loss is a new best
        """
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.counter = 0
            return True
        self.counter += 1
        return False

    @property
    def early_stop(self):
        return self.counter >= self.patience


@dataclasses.dataclass
class TrainHistory:
    train_loss: list = dataclasses.field(default_factory=list)
    val_loss: list = dataclasses.field(default_factory=list)
    lr: list = dataclasses.field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf
    stop_reason: str = ''

    @property
    def epochs(self):
        return len(self.train_loss)

    def frame(self):
        return pd.DataFrame({
            'epoch': np.arange(1, self.epochs + 1),
            'train_loss': self.train_loss,
            'val_loss': self.val_loss,
            'lr': self.lr,
        }, columns=HISTORY_COLUMNS)

    def write_csv(self, path):
        with atomic_write(path) as f:
            self.frame().to_csv(f, index=False, float_format='%.17g', lineterminator='\n')


@dataclasses.dataclass
class TrainResult:
    params: object
    history: TrainHistory
    norm: NormStats
    model_cfg: object
    train_cfg: TrainConfig


def split_datasets(datasets, seed, fraction=0.2):
    """
    Train / validation / test split over scenario files
    train = all of file 1, validation = first fraction of shuffled file 2,
    test = last fraction of every shuffled file. A single file is cut into disjoint
    validation / train / test parts instead.
    :param datasets: list of Dataset in scenario order
    :param seed: shuffle seed
    :param fraction: validation / test share of a file
    :return: (train, validation, list of test datasets)
    """
    logger = logging.getLogger('gridflow.training')
    if not datasets:
        raise DatasetError('No datasets to split.')
    perms = [np.random.default_rng([seed, k]).permutation(len(ds)) for k, ds in enumerate(datasets)]
    cuts = [max(1, int(round(fraction * len(ds)))) for ds in datasets]

    tests = [ds.take(perm[len(ds) - cut:], name=ds.name) for ds, perm, cut in zip(datasets, perms, cuts)]
    if len(datasets) == 1:
        ds, perm, cut = datasets[0], perms[0], cuts[0]
        if len(ds) < 3:
            raise DatasetError('A single dataset file needs at least 3 samples to split.')
        cut = min(cut, (len(ds) - 1) // 2)
        val = ds.take(perm[:cut], name=ds.name + '_val')
        train = ds.take(perm[cut:len(ds) - cut], name=ds.name + '_train')
        tests = [ds.take(perm[len(ds) - cut:], name=ds.name)]
        return train, val, tests

    train = datasets[0]
    val = datasets[1].take(perms[1][:cuts[1]], name=datasets[1].name + '_val')
    logger.warning('Test slice of %s is drawn from the training file.', datasets[0].name)
    return train, val, tests


def _as_tensors(dataset, norm):
    x = tf.constant(norm.normalize_features(dataset.features), dtype=tf.float64)
    y = tf.constant(targets_to_vector(norm.normalize_targets(dataset.targets)), dtype=tf.float64)
    return x, y


def eval_loss(params, edges, x, y):
    """
    Mean squared error in normalized units, eval mode, computed in chunks
    """
    total = 0.0
    count = int(x.shape[0])
    for start in range(0, count, EVAL_CHUNK):
        pred = model_forward(x[start:start + EVAL_CHUNK], edges, params, training=False)
        total += float(tf.reduce_sum(tf.square(pred - y[start:start + EVAL_CHUNK])))
    return total / (count * int(y.shape[1]))


def _parameter_norms(params):
    return {name: float(np.linalg.norm(var.numpy())) for name, var in params.named_trainable()}


def _dump_diagnostics(directory, epoch, batch, lr, loss, params):
    logger = logging.getLogger('gridflow.training')
    if directory is None:
        return None
    path = os.path.join(directory, 'diagnostics.json')
    with atomic_write(path) as f:
        json.dump({
            'epoch': epoch,
            'batch': batch,
            'lr': lr,
            'loss': None if not math.isfinite(loss) else loss,
            'parameter_norms': _parameter_norms(params),
        }, f, indent=2, sort_keys=True)
        f.write('\n')
    logger.error('Diagnostics written to %s', path)
    return path


def train(model_cfg, edges, train_ds, val_ds, cfg, norm=None, diagnostics_dir=None):
    """
    Fit a model with Adam, a learning-rate schedule and early stopping on the validation loss
    :param model_cfg: GnnConfig (its dropout is replaced by cfg.dropout)
    :param edges: topology shared by every sample
    :param train_ds: training Dataset
    :param val_ds: validation Dataset
    :param cfg: TrainConfig
    :param norm: NormStats (computed on train_ds when None)
    :param diagnostics_dir: where diagnostics.json goes on a non-finite loss
    :return: TrainResult holding the best-validation parameters
    """
    logger = logging.getLogger('gridflow.training')
    enable_determinism()
    if model_cfg.dropout != cfg.dropout:
        model_cfg = dataclasses.replace(model_cfg, dropout=cfg.dropout)
    for ds in (train_ds, val_ds):
        if ds.n_bus != model_cfg.n_bus:
            raise ContractError('Dataset {0} has {1} buses, model expects {2}.'.format(ds.name, ds.n_bus, model_cfg.n_bus))
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise DatasetError('Training and validation splits must not be empty.')

    norm = norm or compute_norm_stats(train_ds)
    x_train, y_train = _as_tensors(train_ds, norm)
    x_val, y_val = _as_tensors(val_ds, norm)

    params = init_params(cfg.seed, model_cfg)
    variables = params.trainable_variables()
    adam = AdamState(variables)
    lr_var = tf.Variable(cfg.lr, dtype=tf.float64, trainable=False)
    dropout_rng = tf.random.Generator.from_seed(cfg.seed)
    shuffle_rng = np.random.default_rng(cfg.seed)
    logger.info('Training %s: %d trainable parameters, %d train / %d validation samples.',
                model_cfg.arch, params.parameter_count(), len(train_ds), len(val_ds))

    @tf.function
    def train_step(x, y):
        with tf.GradientTape() as tape:
            pred = model_forward(x, edges, params, training=True, rng=dropout_rng)
            loss = tf.reduce_mean(tf.square(pred - y))
        grads = backward(tape, loss, variables)
        adam_step(variables, grads, adam, lr_var, cfg.l2_lambda)
        return loss

    history = TrainHistory()
    scheduler = SchedulerState(lr=cfg.lr)
    stopper = EarlyStopping(cfg.patience)
    best = params.snapshot()
    n_train = len(train_ds)

    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(n_train)
        total = 0.0
        for batch, start in enumerate(range(0, n_train, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            loss = float(train_step(tf.gather(x_train, idx), tf.gather(y_train, idx)))
            if not math.isfinite(loss):
                _dump_diagnostics(diagnostics_dir, epoch, batch, scheduler.lr, loss, params)
                raise TrainingError('Non-finite training loss at epoch {0}, batch {1}.'.format(epoch, batch))
            total += loss * len(idx)
            logger.debug('epoch %d batch %d loss %.6e', epoch, batch, loss)
        train_loss = total / n_train
        val_loss = eval_loss(params, edges, x_val, y_val)
        if not math.isfinite(val_loss):
            _dump_diagnostics(diagnostics_dir, epoch, None, scheduler.lr, val_loss, params)
            raise TrainingError('Non-finite validation loss at epoch {0}.'.format(epoch))

        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.lr.append(scheduler.lr)
        if stopper(epoch, val_loss):
            best = params.snapshot()
            history.best_epoch = epoch
            history.best_val_loss = val_loss
        logger.info('epoch %d: train %.6e, validation %.6e, lr %.3e', epoch, train_loss, val_loss, scheduler.lr)

        if stopper.early_stop:
            history.stop_reason = 'patience'
            break
        lr_var.assign(lr_update(cfg.scheduler, scheduler, epoch, val_loss, cfg))
    else:
        history.stop_reason = 'max_epochs'

    params.restore(best)
    logger.info('Stopped after %d epochs (%s); best validation loss %.6e at epoch %d.',
                history.epochs, history.stop_reason, history.best_val_loss, history.best_epoch)
    return TrainResult(params=params, history=history, norm=norm, model_cfg=model_cfg, train_cfg=cfg)
