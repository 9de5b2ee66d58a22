"""
Fixed-topology GNN surrogate: two graph convolutions, node flatten and a fully connected head
"""

import dataclasses
import logging

import numpy as np
import tensorflow as tf
from tensorflow import keras

from .autodiff import BatchNormStats, batch_norm, dropout, relu
from .conv_layers import edge_arrays
from .exceptions import ConfigError, ContractError
from .layers import AVAILABLE_CONVS, CONV_PARAM_SHAPES
from .utils import ensure_tf_type


ARCH_ALIASES = {
    'gcn': 'gcn',
    'gat': 'gat', 'gatconv': 'gat',
    'sage': 'sage', 'sageconv': 'sage', 'graphsage': 'sage',
    'graphconv': 'graphconv',
}


def normalize_arch(arch):
    key = str(arch).strip().lower()
    if key not in ARCH_ALIASES:
        raise ConfigError('model.arch', 'unknown architecture {0!r} (choose from {1})'.format(
            arch, ', '.join(sorted(AVAILABLE_CONVS))))
    return ARCH_ALIASES[key]


@dataclasses.dataclass(frozen=True)
class GnnConfig:
    n_bus: int
    arch: str = 'gcn'
    in_features: int = 7
    layer_sizes: tuple = (12, 12)
    fc_hidden: int = 128
    dropout: float = 0.2
    gat_heads: int = 1
    batch_norm: bool = True

    def __post_init__(self):
        object.__setattr__(self, 'arch', normalize_arch(self.arch))
        object.__setattr__(self, 'layer_sizes', tuple(int(s) for s in self.layer_sizes))
        for name in ('n_bus', 'in_features', 'fc_hidden', 'gat_heads'):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError('model.' + name, 'must be a positive integer, got {0!r}'.format(value))
        if not self.layer_sizes or any(s < 1 for s in self.layer_sizes):
            raise ConfigError('model.layer_sizes', 'needs at least one positive size')
        if not 0 <= self.dropout < 1:
            raise ConfigError('model.dropout', 'must lie in [0, 1), got {0!r}'.format(self.dropout))

    @property
    def out_size(self):
        return 2 * self.n_bus

    def layer_width(self, k):
        """Output width of graph layer k (GAT heads are concatenated)."""
        heads = self.gat_heads if self.arch == 'gat' else 1
        return self.layer_sizes[k] * heads

    def to_dict(self):
        data = dataclasses.asdict(self)
        data['layer_sizes'] = list(self.layer_sizes)
        return data

    @classmethod
    def from_dict(cls, data):
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - fields)
        if unknown:
            raise ConfigError('model.' + unknown[0], 'unknown field')
        return cls(**data)


class ModelParams(object):
    """
    Weights of one model; graph layer k holds conv weights, batch-norm scale / shift and running statistics
    """
    def __init__(self, cfg, convs, bn_scale, bn_shift, bn_stats, fc):
        self.cfg = cfg
        self.convs = convs
        self.bn_scale = bn_scale
        self.bn_shift = bn_shift
        self.bn_stats = bn_stats
        self.fc = fc

    @property
    def arch(self):
        return self.cfg.arch

    def named_trainable(self):
        named = []
        for k, conv in enumerate(self.convs):
            named += [('conv{0}.{1}'.format(k, name), var) for name, var in conv]
            if self.cfg.batch_norm:
                named += [('bn{0}.scale'.format(k), self.bn_scale[k]), ('bn{0}.shift'.format(k), self.bn_shift[k])]
        named += [('fc.{0}'.format(name), var) for name, var in self.fc]
        return named

    def named_state(self):
        named = list(self.named_trainable())
        if self.cfg.batch_norm:
            for k, stats in enumerate(self.bn_stats):
                named += [('bn{0}.mean'.format(k), stats.mean), ('bn{0}.var'.format(k), stats.variance)]
        return named

    def trainable_variables(self):
        return [var for _, var in self.named_trainable()]

    def parameter_count(self):
        return int(sum(np.prod(var.shape) for var in self.trainable_variables()))

    def snapshot(self):
        """
        :return: list of (name, numpy copy) over trainable weights and running statistics
        """
        return [(name, var.numpy().copy()) for name, var in self.named_state()]

    def restore(self, snapshot):
        current = dict(self.named_state())
        for name, value in snapshot:
            if name not in current:
                raise ContractError('Unknown parameter {0!r}.'.format(name))
            if tuple(current[name].shape) != tuple(np.shape(value)):
                raise ContractError('Parameter {0!r} has shape {1}, got {2}.'.format(
                    name, tuple(current[name].shape), np.shape(value)))
            current[name].assign(np.asarray(value, dtype=np.float64))


def _seed_from(rng):
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2 ** 31 - 1))
    return int(rng)


def _glorot(shape, seed, name):
    initializer = keras.initializers.GlorotUniform(seed=seed)
    return tf.Variable(tf.cast(initializer(shape, dtype='float64'), tf.float64), name=name)


def _zeros(shape, name):
    return tf.Variable(tf.zeros(shape, dtype=tf.float64), name=name)


def init_params(rng, cfg):
    """
    Glorot-uniform weights, zero biases, unit batch-norm scale
    :param rng: integer seed or numpy Generator
    :param cfg: GnnConfig
    :return: ModelParams
    """
    logger = logging.getLogger('gridflow.model')
    seed = _seed_from(rng)
    counter = [0]

    def next_seed():
        counter[0] += 1
        return seed * 1000 + counter[0]

    convs, bn_scale, bn_shift, bn_stats = [], [], [], []
    d_in = cfg.in_features
    for k, size in enumerate(cfg.layer_sizes):
        shapes = CONV_PARAM_SHAPES[cfg.arch](d_in, size, cfg.gat_heads)
        convs.append([(name, _glorot(shape, next_seed(), 'conv{0}_{1}'.format(k, name))) for name, shape in shapes])
        width = cfg.layer_width(k)
        bn_scale.append(tf.Variable(tf.ones([width], dtype=tf.float64), name='bn{0}_scale'.format(k)))
        bn_shift.append(_zeros([width], 'bn{0}_shift'.format(k)))
        bn_stats.append(BatchNormStats(width, name='bn{0}'.format(k)))
        d_in = width

    flat = cfg.n_bus * d_in
    fc = [
        ('w1', _glorot((flat, cfg.fc_hidden), next_seed(), 'fc_w1')),
        ('b1', _zeros([cfg.fc_hidden], 'fc_b1')),
        ('w2', _glorot((cfg.fc_hidden, cfg.out_size), next_seed(), 'fc_w2')),
        ('b2', _zeros([cfg.out_size], 'fc_b2')),
    ]
    params = ModelParams(cfg, convs, bn_scale, bn_shift, bn_stats, fc)
    logger.debug('Initialized %s with %d trainable parameters (seed %d)', cfg.arch, params.parameter_count(), seed)
    return params


def batch_edges(edges, n_bus, batch_size):
    """
    Disjoint union of batch_size copies of one topology, node blocks of size n_bus
    :return: (src, dst) int64 arrays
    """
    src, dst = edge_arrays(edges)
    offsets = np.repeat(np.arange(batch_size, dtype=np.int64) * n_bus, src.size)
    return np.tile(src, batch_size) + offsets, np.tile(dst, batch_size) + offsets


def model_forward(features, edges, params, training=False, rng=None):
    """
    Predict normalized [v_1..v_n, delta_1..delta_n] per sample
    :param features: (n_bus, in_features) or (batch, n_bus, in_features)
    :param edges: topology shared by every sample
    :param params: ModelParams
    :param training: batch statistics and dropout when True
    :param rng: tf.random.Generator for dropout masks
    :return: (2 * n_bus,) or (batch, 2 * n_bus)
    """
    cfg = params.cfg
    x = ensure_tf_type(features)
    single = len(x.shape) == 2
    if single:
        x = x[None]
    if len(x.shape) != 3 or int(x.shape[1]) != cfg.n_bus or int(x.shape[2]) != cfg.in_features:
        raise ContractError('Model expects samples of shape ({0}, {1}), got {2}.'.format(
            cfg.n_bus, cfg.in_features, tuple(x.shape[-2:])))
    batch = int(x.shape[0])

    h = tf.reshape(x, [batch * cfg.n_bus, cfg.in_features])
    stacked = batch_edges(edges, cfg.n_bus, batch)
    conv = AVAILABLE_CONVS[cfg.arch]
    for k, weights in enumerate(params.convs):
        h = conv(h, stacked, *[var for _, var in weights])
        if cfg.batch_norm:
            h = batch_norm(h, params.bn_stats[k], training, gamma=params.bn_scale[k], beta=params.bn_shift[k])
        h = relu(h)
        h = dropout(h, cfg.dropout, training, rng)

    fc = dict(params.fc)
    flat = tf.reshape(h, [batch, cfg.n_bus * cfg.layer_width(len(params.convs) - 1)])
    hidden = relu(tf.linalg.matmul(flat, fc['w1']) + fc['b1'])
    out = tf.linalg.matmul(hidden, fc['w2']) + fc['b2']
    return out[0] if single else out
