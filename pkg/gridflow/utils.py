import contextlib
import logging
import os
import shutil
import tempfile

import numpy as np
import tensorflow as tf

from .exceptions import ContractError


def is_numpy(obj):
    """
    Check of the type is instance of numpy array
    :param obj: object to check
    :return: True if the object is numpy-type array.
    """
    return isinstance(obj, (np.ndarray, np.generic))


def ensure_numpy_type(obj):
    """
    Convert tensors to numpy, raise for anything else
    :param obj: object to check
    :return: numpy object
    """
    if is_numpy(obj):
        return obj
    if tf.is_tensor(obj) or isinstance(obj, tf.Variable):
        return obj.numpy()
    raise ContractError('Not a numpy type.')


def ensure_tf_type(obj):
    """
    Convert to a float64 TF tensor if needed
    :param obj: numpy / python / tf value
    :return: tf tensor (variables are passed through untouched so gradients still flow)
    """
    if isinstance(obj, tf.Variable):
        return obj
    if tf.is_tensor(obj):
        if obj.dtype != tf.float64:
            obj = tf.cast(obj, tf.float64)
        return obj
    return tf.convert_to_tensor(np.asarray(obj, dtype=np.float64))


def check_tensor_error(actual, expected, epsilon=1e-10):
    """
    Check difference between a computed tensor and its reference
    :param actual: computed value (numpy or tf)
    :param expected: reference value (numpy or tf)
    :param epsilon: allowed absolute difference
    :return: actual difference
    """
    actual = np.asarray(ensure_numpy_type(ensure_tf_type(actual)))
    expected = np.asarray(ensure_numpy_type(ensure_tf_type(expected)))
    np.testing.assert_allclose(actual, expected, atol=epsilon, rtol=0.0)
    if actual.size == 0:
        return 0.0
    return float(np.max(np.abs(actual - expected)))


def worker_count(requested=None):
    """
    Number of worker threads, capped by GRIDFLOW_THREADS
    :param requested: explicit request (None - use all cores)
    :return: positive integer
    """
    count = requested or os.cpu_count() or 1
    cap = os.environ.get('GRIDFLOW_THREADS')
    if cap:
        try:
            count = min(count, int(cap))
        except ValueError:
            logging.getLogger('gridflow.utils').warning('Ignoring GRIDFLOW_THREADS=%r.', cap)
    return max(1, count)


@contextlib.contextmanager
def atomic_write(path, mode='w', encoding='utf-8'):
    """
    Write a file through a temporary sibling and rename it into place on success
    :param path: final path
    :param mode: 'w' or 'wb'
    :param encoding: text encoding (ignored for binary mode)
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix='.tmp-', dir=directory)
    try:
        kwargs = {} if 'b' in mode else {'encoding': encoding, 'newline': ''}
        with os.fdopen(fd, mode, **kwargs) as f:
            yield f
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


@contextlib.contextmanager
def staging_dir(target_dir):
    """
    Collect several output files in a hidden directory and move them into target_dir together
    Files may sit in subdirectories of the stage; they land at the same relative path.
    :param target_dir: final directory
    :return: path of the staging directory
    """
    os.makedirs(target_dir, exist_ok=True)
    stage = tempfile.mkdtemp(prefix='.staging-', dir=target_dir)
    try:
        yield stage
        for root, dirs, files in os.walk(stage):
            dirs.sort()
            relative = os.path.relpath(root, stage)
            destination = os.path.normpath(os.path.join(target_dir, relative))
            os.makedirs(destination, exist_ok=True)
            for name in sorted(files):
                os.replace(os.path.join(root, name), os.path.join(destination, name))
    finally:
        shutil.rmtree(stage, ignore_errors=True)
