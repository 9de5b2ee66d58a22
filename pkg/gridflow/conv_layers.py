"""
Message-passing graph convolutions: GCN, GAT, SAGE and GraphConv
Messages travel src -> dst and are aggregated at dst.
"""

import logging

import numpy as np
import tensorflow as tf

from .autodiff import leaky_relu, matmul, segment_softmax, segment_sum
from .exceptions import DimensionError
from .grid import EdgeIndex
from .utils import ensure_tf_type


def edge_arrays(edges):
    """
    Normalize an edge description to (src, dst) int64 arrays
    :param edges: EdgeIndex, (src, dst) pair of sequences or a (2, E) array
    :return: (src, dst)
    """
    if isinstance(edges, EdgeIndex):
        return edges.src, edges.dst
    if isinstance(edges, tuple) and len(edges) == 2:
        src, dst = edges
    else:
        array = np.asarray(edges, dtype=np.int64).reshape(2, -1)
        src, dst = array[0], array[1]
    return np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64)


def _with_self_loops(src, dst, n):
    nodes = np.arange(n, dtype=np.int64)
    keep = src != dst
    return np.concatenate([src[keep], nodes]), np.concatenate([dst[keep], nodes])


def _check_edges(src, dst, n):
    if src.size and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= n):
        raise DimensionError('Edge index references nodes outside 0..{0}.'.format(n - 1))


def gcn_param_shapes(d_in, d_out, heads=1):
    return [('w', (d_in, d_out))]


def gcn_forward(h, edges, w):
    """
    Symmetric-normalized convolution with self-loops, D^-1/2 (A + I) D^-1/2 H W
    :param h: node features (n, d)
    :param edges: directed edges, both directions present
    :param w: (d, d')
    :return: (n, d')
    """
    h = ensure_tf_type(h)
    n = int(h.shape[0])
    src, dst = edge_arrays(edges)
    _check_edges(src, dst, n)
    src, dst = _with_self_loops(src, dst, n)

    degree = np.bincount(dst, minlength=n).astype(np.float64)
    norm = 1.0 / np.sqrt(degree[src] * degree[dst])

    z = matmul(h, w)
    messages = tf.gather(z, src) * tf.constant(norm[:, None], dtype=tf.float64)
    return segment_sum(messages, dst, n)


def gat_param_shapes(d_in, d_out, heads=1):
    return [('w', (d_in, heads * d_out)), ('a', (heads, 2 * d_out))]


def gat_forward(h, edges, w, a, return_attention=False):
    """
    Graph attention, one softmax per destination over its neighbors and itself
    e_ij = LeakyReLU(a^T [W h_i || W h_j]) for the edge j -> i; heads are concatenated.
    :param h: node features (n, d)
    :param edges: directed edges (self-loops are added here)
    :param w: (d, heads * d')
    :param a: (heads, 2 * d'); first half scores the destination, second half the source
    :param return_attention: also return (alpha, src, dst)
    :return: (n, heads * d') [, (alpha of shape (e, heads), src, dst)]
    """
    logger = logging.getLogger('gridflow.gat')
    h = ensure_tf_type(h)
    a = ensure_tf_type(a)
    n = int(h.shape[0])
    heads = int(a.shape[0])
    d_out = int(a.shape[1]) // 2
    if int(w.shape[1]) != heads * d_out:
        raise DimensionError('GAT weight has {0} columns, attention expects {1} heads x {2}.'.format(
            int(w.shape[1]), heads, d_out))
    src, dst = edge_arrays(edges)
    _check_edges(src, dst, n)
    src, dst = _with_self_loops(src, dst, n)
    logger.debug('GAT over %d nodes, %d edges with self-loops, %d head(s)', n, src.size, heads)

    z = tf.reshape(matmul(h, w), [n, heads, d_out])
    score_dst = tf.reduce_sum(z * a[:, :d_out], axis=-1)
    score_src = tf.reduce_sum(z * a[:, d_out:], axis=-1)
    logits = leaky_relu(tf.gather(score_dst, dst) + tf.gather(score_src, src))
    alpha = segment_softmax(logits, dst, n)

    messages = tf.gather(z, src) * alpha[:, :, None]
    out = tf.reshape(segment_sum(messages, dst, n), [n, heads * d_out])
    if return_attention:
        return out, (alpha, src, dst)
    return out


def sage_param_shapes(d_in, d_out, heads=1):
    return [('w_self', (d_in, d_out)), ('w_neigh', (d_in, d_out))]


def sage_forward(h, edges, w_self, w_neigh):
    """
    Mean aggregation over the full neighborhood, h_i W_self + mean_j(h_j) W_neigh
    An empty neighborhood contributes a zero mean.
    """
    h = ensure_tf_type(h)
    n = int(h.shape[0])
    src, dst = edge_arrays(edges)
    _check_edges(src, dst, n)

    degree = np.bincount(dst, minlength=n).astype(np.float64)
    inverse = np.where(degree > 0, 1.0 / np.maximum(degree, 1.0), 0.0)
    neighbor_mean = segment_sum(tf.gather(h, src), dst, n) * tf.constant(inverse[:, None], dtype=tf.float64)
    return matmul(h, w_self) + matmul(neighbor_mean, w_neigh)


def graphconv_param_shapes(d_in, d_out, heads=1):
    return [('w_root', (d_in, d_out)), ('w_neigh', (d_in, d_out))]


def graphconv_forward(h, edges, w_root, w_neigh):
    """
    Sum aggregation, h_i W_root + sum_j(h_j) W_neigh
    """
    h = ensure_tf_type(h)
    n = int(h.shape[0])
    src, dst = edge_arrays(edges)
    _check_edges(src, dst, n)
    neighbor_sum = segment_sum(tf.gather(h, src), dst, n)
    return matmul(h, w_root) + matmul(neighbor_sum, w_neigh)
