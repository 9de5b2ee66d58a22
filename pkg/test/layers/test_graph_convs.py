import numpy as np
import pytest
import tensorflow as tf

from gridflow.conv_layers import edge_arrays
from gridflow.exceptions import DimensionError
from gridflow.grid import EdgeIndex
from gridflow.layers import AVAILABLE_CONVS, CONV_PARAM_SHAPES
from gridflow.utils import check_tensor_error

from test.utils import all_graphs, dense_gat, dense_gcn, dense_graphconv, dense_sage, random_edges


DENSE = {
    'gcn': dense_gcn,
    'sage': dense_sage,
    'graphconv': dense_graphconv,
}


def random_params(name, d_in, d_out, rng, heads=1):
    return [rng.normal(size=shape) for _, shape in CONV_PARAM_SHAPES[name](d_in, d_out, heads)]


def small_graphs():
    for n in range(1, 5):
        for src, dst in all_graphs(n):
            yield n, src, dst


@pytest.mark.parametrize('name', ['gcn', 'sage', 'graphconv'])
def test_all_small_graphs(name):
    rng = np.random.default_rng(0)
    for n, src, dst in small_graphs():
        h = rng.normal(size=(n, 3))
        params = random_params(name, 3, 2, rng)
        check_tensor_error(AVAILABLE_CONVS[name](h, (src, dst), *params), DENSE[name](h, src, dst, *params),
                           epsilon=1e-10)


@pytest.mark.parametrize('heads', [1, 2])
def test_gat_all_small_graphs(heads):
    rng = np.random.default_rng(1)
    for n, src, dst in small_graphs():
        h = rng.normal(size=(n, 3))
        w, a = random_params('gat', 3, 2, rng, heads)
        expected, _ = dense_gat(h, src, dst, w, a)
        check_tensor_error(AVAILABLE_CONVS['gat'](h, (src, dst), w, a), expected, epsilon=1e-10)


@pytest.mark.repeat(5)
@pytest.mark.parametrize('name', ['gcn', 'sage', 'graphconv', 'gat'])
def test_random_graphs(name):
    rng = np.random.default_rng()
    n = int(rng.integers(5, 7))
    src, dst = random_edges(n, rng)
    h = rng.normal(size=(n, 4))
    params = random_params(name, 4, 3, rng, heads=2)
    out = AVAILABLE_CONVS[name](h, (src, dst), *params)
    if name == 'gat':
        expected, _ = dense_gat(h, src, dst, *params)
    else:
        expected = DENSE[name](h, src, dst, *params)
    check_tensor_error(out, expected, epsilon=1e-10)


@pytest.mark.repeat(5)
def test_gat_attention_rows_sum_to_one():
    rng = np.random.default_rng()
    n = 6
    src, dst = random_edges(n, rng)
    w, a = random_params('gat', 4, 3, rng, heads=3)
    _, (alpha, att_src, att_dst) = AVAILABLE_CONVS['gat'](rng.normal(size=(n, 4)), (src, dst), w, a,
                                                          return_attention=True)
    alpha = alpha.numpy()
    assert alpha.shape == (len(att_src), 3)
    for i in range(n):
        np.testing.assert_allclose(alpha[att_dst == i].sum(axis=0), np.ones(3), atol=1e-12)

    _, expected = dense_gat(rng.normal(size=(n, 4)), src, dst, w, a)
    np.testing.assert_allclose(expected.sum(axis=2), np.ones((3, n)), atol=1e-12)


def test_gat_attention_matches_dense():
    rng = np.random.default_rng(5)
    src, dst = random_edges(5, rng, density=0.7)
    h = rng.normal(size=(5, 3))
    w, a = random_params('gat', 3, 2, rng, heads=2)
    _, (alpha, att_src, att_dst) = AVAILABLE_CONVS['gat'](h, (src, dst), w, a, return_attention=True)
    _, expected = dense_gat(h, src, dst, w, a)
    for k in range(2):
        np.testing.assert_allclose(alpha.numpy()[:, k], expected[k, att_dst, att_src], atol=1e-12)


@pytest.mark.parametrize('name', ['gcn', 'sage', 'graphconv', 'gat'])
def test_isolated_nodes(name):
    rng = np.random.default_rng(2)
    h = rng.normal(size=(3, 2))
    params = random_params(name, 2, 2, rng)
    empty = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    # only the self term survives
    out = AVAILABLE_CONVS[name](h, empty, *params).numpy()
    np.testing.assert_allclose(out, h.dot(params[0]), atol=1e-12)


@pytest.mark.parametrize('name', ['gcn', 'sage', 'graphconv', 'gat'])
def test_node_permutation(name):
    rng = np.random.default_rng(3)
    n = 6
    src, dst = random_edges(n, rng)
    h = rng.normal(size=(n, 3))
    params = random_params(name, 3, 2, rng, heads=2)
    perm = rng.permutation(n)
    inverse = np.argsort(perm)
    out = AVAILABLE_CONVS[name](h, (src, dst), *params).numpy()
    permuted = AVAILABLE_CONVS[name](h[perm], (inverse[src], inverse[dst]), *params).numpy()
    np.testing.assert_allclose(permuted, out[perm], atol=1e-10)


def test_gradients_flow_to_parameters():
    rng = np.random.default_rng(4)
    src, dst = random_edges(4, rng, density=1.0)
    h = rng.normal(size=(4, 3))
    for name in AVAILABLE_CONVS:
        params = [tf.Variable(p) for p in random_params(name, 3, 2, rng)]
        with tf.GradientTape() as tape:
            loss = tf.reduce_sum(AVAILABLE_CONVS[name](h, (src, dst), *params) ** 2)
        for grad in tape.gradient(loss, params):
            assert grad is not None
            assert np.any(grad.numpy() != 0)


def test_edge_arrays_formats():
    edges = EdgeIndex(pairs=[(0, 1), (1, 0)])
    for value in (edges, ([0, 1], [1, 0]), np.array([[0, 1], [1, 0]])):
        src, dst = edge_arrays(value)
        np.testing.assert_array_equal(src, [0, 1])
        np.testing.assert_array_equal(dst, [1, 0])


def test_edges_out_of_range():
    with pytest.raises(DimensionError):
        AVAILABLE_CONVS['gcn'](np.ones((2, 1)), ([0], [2]), np.ones((1, 1)))


def test_gat_head_mismatch():
    with pytest.raises(DimensionError):
        AVAILABLE_CONVS['gat'](np.ones((2, 3)), ([0], [1]), np.ones((3, 4)), np.ones((3, 4)))


@pytest.mark.slow
@pytest.mark.parametrize('n', [5, 6])
@pytest.mark.parametrize('name', ['gcn', 'sage', 'graphconv', 'gat'])
def test_all_larger_graphs(name, n):
    rng = np.random.default_rng(6)
    for src, dst in all_graphs(n):
        h = rng.normal(size=(n, 3))
        params = random_params(name, 3, 2, rng, heads=2)
        out = AVAILABLE_CONVS[name](h, (src, dst), *params)
        if name == 'gat':
            expected, _ = dense_gat(h, src, dst, *params)
        else:
            expected = DENSE[name](h, src, dst, *params)
        check_tensor_error(out, expected, epsilon=1e-10)


def test_gat_zero_attention_is_uniform():
    rng = np.random.default_rng(9)
    n = 5
    src, dst = random_edges(n, rng, density=0.6)
    h = rng.normal(size=(n, 3))
    w = rng.normal(size=(3, 4))
    a = np.zeros((2, 4))
    out, (alpha, att_src, att_dst) = AVAILABLE_CONVS['gat'](h, (src, dst), w, a, return_attention=True)
    alpha = alpha.numpy()
    for i in range(n):
        # neighbors plus the self-loop
        size = int(np.sum(dst == i)) + 1
        np.testing.assert_allclose(alpha[att_dst == i], np.full((size, 2), 1.0 / size), atol=1e-15)
        members = np.r_[src[dst == i], i]
        np.testing.assert_allclose(out.numpy()[i], h[members].dot(w).mean(axis=0), atol=1e-12)
