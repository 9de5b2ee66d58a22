import os

import numpy as np
import pytest
import tensorflow as tf

from gridflow.exceptions import ContractError
from gridflow.utils import atomic_write, ensure_numpy_type, ensure_tf_type, staging_dir, worker_count


def test_worker_count_cap(monkeypatch):
    monkeypatch.setenv('GRIDFLOW_THREADS', '2')
    assert worker_count(8) == 2
    assert worker_count(1) == 1
    monkeypatch.setenv('GRIDFLOW_THREADS', 'many')
    assert worker_count(3) == 3
    monkeypatch.delenv('GRIDFLOW_THREADS')
    assert worker_count() >= 1


def test_atomic_write_keeps_old_file_on_error(tmp_path):
    path = tmp_path / 'out.txt'
    path.write_text('old')
    with pytest.raises(RuntimeError):
        with atomic_write(str(path)) as f:
            f.write('new')
            raise RuntimeError('boom')
    assert path.read_text() == 'old'
    assert os.listdir(str(tmp_path)) == ['out.txt']


def test_staging_dir(tmp_path):
    target = tmp_path / 'data'
    with staging_dir(str(target)) as stage:
        open(os.path.join(stage, 'a.csv'), 'w').close()
        assert not (target / 'a.csv').exists()
    assert os.listdir(str(target)) == ['a.csv']

    with pytest.raises(ValueError):
        with staging_dir(str(target)) as stage:
            open(os.path.join(stage, 'b.csv'), 'w').close()
            raise ValueError('stop')
    assert os.listdir(str(target)) == ['a.csv']


def test_type_conversions():
    assert ensure_tf_type(np.ones(2, dtype=np.float32)).dtype == tf.float64
    var = tf.Variable(np.ones(2))
    assert ensure_tf_type(var) is var
    np.testing.assert_array_equal(ensure_numpy_type(tf.constant([1.0, 2.0])), [1.0, 2.0])
    with pytest.raises(ContractError):
        ensure_numpy_type([1.0])


def test_staging_dir_nested(tmp_path):
    target = tmp_path / 'run'
    with staging_dir(str(target)) as stage:
        os.makedirs(os.path.join(stage, 'reports'))
        open(os.path.join(stage, 'reports', 'h.csv'), 'w').close()
        open(os.path.join(stage, 'top.json'), 'w').close()
        assert not (target / 'reports').exists()
    assert sorted(os.listdir(str(target))) == ['reports', 'top.json']
    assert os.listdir(str(target / 'reports')) == ['h.csv']
