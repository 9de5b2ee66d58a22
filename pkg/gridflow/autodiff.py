"""
Float64 tensor kernels and reverse-mode gradients on top of TensorFlow
"""

import logging

import numpy as np
import tensorflow as tf

from .exceptions import ContractError, DimensionError
from .utils import ensure_numpy_type, ensure_tf_type


DEFAULT_LEAKY_SLOPE = 0.2
BN_EPSILON = 1e-8
BN_MOMENTUM = 0.1


def _shape(x):
    return tuple(int(d) for d in x.shape)


def matmul(a, b):
    """
    :param a: (n, k)
    :param b: (k, m)
    :return: (n, m)
    """
    a, b = ensure_tf_type(a), ensure_tf_type(b)
    if len(a.shape) != 2 or len(b.shape) != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError('matmul: cannot multiply {0} by {1}.'.format(_shape(a), _shape(b)))
    return tf.linalg.matmul(a, b)


def add(a, b):
    """
    Elementwise sum; b may also be a bias row broadcast over the rows of a
    """
    a, b = ensure_tf_type(a), ensure_tf_type(b)
    if a.shape != b.shape and not (len(b.shape) == 1 and len(a.shape) == 2 and a.shape[1] == b.shape[0]):
        raise DimensionError('add: shapes {0} and {1} do not match.'.format(_shape(a), _shape(b)))
    return a + b


def scale(a, factor):
    return ensure_tf_type(a) * tf.constant(float(factor), dtype=tf.float64)


def concat_rows(tensors):
    """
    Stack row blocks with equal column counts
    :param tensors: list of (n_i, d)
    :return: (sum n_i, d)
    """
    tensors = [ensure_tf_type(t) for t in tensors]
    if not tensors:
        raise DimensionError('concat_rows: nothing to concatenate.')
    columns = {_shape(t)[1:] for t in tensors}
    if len(columns) != 1:
        raise DimensionError('concat_rows: column shapes differ: {0}.'.format(sorted(columns)))
    return tf.concat(tensors, axis=0)


def relu(x):
    return tf.nn.relu(ensure_tf_type(x))


def leaky_relu(x, slope=DEFAULT_LEAKY_SLOPE):
    x = ensure_tf_type(x)
    return tf.where(x > 0, x, x * tf.constant(slope, dtype=tf.float64))


def _check_segments(values, segment_ids, num_segments):
    segment_ids = tf.convert_to_tensor(segment_ids, dtype=tf.int64)
    if len(segment_ids.shape) != 1 or segment_ids.shape[0] != values.shape[0]:
        raise DimensionError('segment ids {0} do not match values {1}.'.format(
            _shape(segment_ids), _shape(values)))
    ids = ensure_numpy_type(segment_ids) if tf.executing_eagerly() else None
    if ids is not None and ids.size and (ids.min() < 0 or ids.max() >= num_segments):
        raise DimensionError('segment ids out of range [0, {0}).'.format(num_segments))
    return segment_ids


def segment_sum(values, segment_ids, num_segments):
    """
    Sum rows of values that share a segment id
    :param values: (e, ...) tensor
    :param segment_ids: (e,) ints in [0, num_segments), any order
    :param num_segments: output rows
    :return: (num_segments, ...) tensor, zero rows for empty segments
    """
    values = ensure_tf_type(values)
    segment_ids = _check_segments(values, segment_ids, num_segments)
    return tf.math.unsorted_segment_sum(values, segment_ids, num_segments)


def segment_softmax(logits, segment_ids, num_segments):
    """
    Softmax of logits within each segment
    :param logits: (e,) or (e, h)
    :param segment_ids: (e,) ints in [0, num_segments)
    :param num_segments: number of segments
    :return: same shape as logits, entries of each segment sum to 1
    """
    logits = ensure_tf_type(logits)
    segment_ids = _check_segments(logits, segment_ids, num_segments)
    shift = tf.stop_gradient(tf.math.unsorted_segment_max(logits, segment_ids, num_segments))
    exp = tf.exp(logits - tf.gather(shift, segment_ids))
    total = tf.math.unsorted_segment_sum(exp, segment_ids, num_segments)
    return exp / tf.gather(total, segment_ids)


def dropout(x, rate, training, rng=None):
    """
    Inverted dropout
    :param x: input tensor
    :param rate: drop probability in [0, 1)
    :param training: identity when False
    :param rng: tf.random.Generator used for the mask
    :return: tensor, survivors scaled by 1 / (1 - rate)
    """
    x = ensure_tf_type(x)
    if not 0 <= rate < 1:
        raise ContractError('dropout rate must lie in [0, 1), got {0!r}'.format(rate))
    if not training or rate == 0:
        return x
    if rng is None:
        raise ContractError('dropout in training mode needs a random generator.')
    keep = rng.uniform(tf.shape(x), dtype=tf.float64) >= rate
    return tf.where(keep, x / (1.0 - rate), tf.zeros_like(x))


class BatchNormStats(object):
    """
    Running mean and variance of a batch-norm site
    :param features: number of feature columns
    :param momentum: weight of the newest batch in the running averages
    """
    def __init__(self, features, momentum=BN_MOMENTUM, name='bn'):
        self.momentum = momentum
        self.mean = tf.Variable(tf.zeros([features], dtype=tf.float64), trainable=False, name=name + '_mean')
        self.variance = tf.Variable(tf.ones([features], dtype=tf.float64), trainable=False, name=name + '_var')

    @property
    def features(self):
        return int(self.mean.shape[0])


def batch_norm(x, stats, training, gamma=None, beta=None, epsilon=BN_EPSILON):
    """
    Normalize every feature column over all rows (nodes of the batch)
    :param x: (n, d)
    :param stats: BatchNormStats; updated in training mode
    :param training: batch statistics when True, running statistics otherwise
    :param gamma: optional (d,) scale
    :param beta: optional (d,) shift
    :param epsilon: variance floor
    :return: (n, d)
    """
    x = ensure_tf_type(x)
    if len(x.shape) != 2 or x.shape[1] != stats.features:
        raise DimensionError('batch_norm: input {0} vs {1} features.'.format(_shape(x), stats.features))
    if training:
        mean, variance = tf.nn.moments(x, axes=[0])
        n = tf.cast(tf.shape(x)[0], tf.float64)
        unbiased = variance * n / tf.maximum(n - 1.0, 1.0)
        stats.mean.assign((1.0 - stats.momentum) * stats.mean + stats.momentum * tf.stop_gradient(mean))
        stats.variance.assign((1.0 - stats.momentum) * stats.variance + stats.momentum * tf.stop_gradient(unbiased))
    else:
        mean, variance = stats.mean, stats.variance
    return tf.nn.batch_normalization(x, mean, variance, offset=beta, scale=gamma, variance_epsilon=epsilon)


def backward(tape, loss, params):
    """
    Gradients of a scalar loss recorded on a tape
    :param tape: tf.GradientTape that watched the forward pass
    :param loss: scalar tensor
    :param params: list of tf.Variable
    :return: list of gradients, zeros for parameters the loss does not depend on
    """
    if loss.shape.rank is None or loss.shape.num_elements() != 1:
        raise ContractError('backward needs a scalar loss, got shape {0}.'.format(loss.shape))
    return tape.gradient(loss, params, unconnected_gradients=tf.UnconnectedGradients.ZERO)


def value_and_grad(f, params):
    """
    :param f: callable returning a scalar tensor from the current values of params
    :param params: list of tf.Variable
    :return: (loss, gradients)
    """
    with tf.GradientTape() as tape:
        loss = f()
    return loss, backward(tape, loss, params)


def grad_check(f, params, step=1e-5, floor=1e-8, kink_tolerance=1e-3):
    """
    Compare analytic gradients against central differences coordinate by coordinate
    Coordinates where the one-sided slopes disagree (a kink such as relu at 0) are skipped.
    :param f: callable returning a scalar tensor, evaluated deterministically
    :param params: list of tf.Variable
    :param step: finite difference step
    :param floor: smallest denominator of the relative error
    :param kink_tolerance: relative disagreement of one-sided slopes treated as a kink
    :return: max relative error over checked coordinates
    """
    logger = logging.getLogger('gridflow.autodiff')
    _, grads = value_and_grad(f, params)
    worst = 0.0
    skipped = 0
    for var, grad in zip(params, grads):
        analytic = np.asarray(ensure_numpy_type(grad)).reshape(-1)
        original = np.array(ensure_numpy_type(var), dtype=np.float64)
        flat = original.reshape(-1)
        for k in range(flat.size):
            values = []
            for offset in (step, 0.0, -step):
                shifted = flat.copy()
                shifted[k] += offset
                var.assign(shifted.reshape(original.shape))
                values.append(float(ensure_numpy_type(f())))
            var.assign(original)
            f_plus, f_zero, f_minus = values
            right = (f_plus - f_zero) / step
            left = (f_zero - f_minus) / step
            if abs(right - left) > kink_tolerance * max(abs(right), abs(left), 1.0) + 10 * step:
                skipped += 1
                continue
            numeric = (f_plus - f_minus) / (2 * step)
            error = abs(analytic[k] - numeric) / max(abs(analytic[k]), abs(numeric), floor)
            worst = max(worst, error)
    logger.debug('grad_check: max relative error %.3e, %d kink coordinate(s) skipped', worst, skipped)
    return worst
