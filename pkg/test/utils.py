"""
Independent oracles and small fixtures shared by the tests
"""

import itertools

import numpy as np

from gridflow.evaluation import MetricReport
from gridflow.grid import Branch, Bus, BusType, Generator, Network, build_ybus
from gridflow.scenario import Dataset


TWO_BUS_DELTA = 0.5 * np.arcsin(-0.02)
TWO_BUS_V = np.cos(TWO_BUS_DELTA)


def two_bus_network(p_load=0.1, q_load=0.0, x=0.1, r=0.0):
    buses = [
        Bus(id=0, bus_type=BusType.SLACK, v_setpoint=1.0),
        Bus(id=1, bus_type=BusType.PQ, p_load=p_load, q_load=q_load),
    ]
    return Network(buses=buses, branches=[Branch(0, 1, r=r, x=x)], generators=[Generator(bus=0)],
                   name='two_bus')


def three_bus_network(charging=0.0):
    buses = [
        Bus(id=0, bus_type=BusType.SLACK, v_setpoint=1.02),
        Bus(id=1, bus_type=BusType.PV, v_setpoint=1.01),
        Bus(id=2, bus_type=BusType.PQ, p_load=0.6, q_load=0.25),
    ]
    branches = [
        Branch(0, 1, r=0.02, x=0.08, b_charging=charging),
        Branch(1, 2, r=0.03, x=0.1, b_charging=charging),
        Branch(0, 2, r=0.025, x=0.09, b_charging=charging),
    ]
    generators = [Generator(bus=0, v_setpoint=1.02), Generator(bus=1, p_gen=0.3, v_setpoint=1.01)]
    return Network(buses=buses, branches=branches, generators=generators, name='three_bus')


TWO_BUS_CASE = """# minimal case
[meta]
key,value
name,two_bus
base_mva,100

[bus]
id,type,p_load_mw,q_load_mvar,gs,bs,vm,va_deg
1,slack,0,0,0,0,1.0,0
2,pq,10,0,0,0,1.0,0

[branch]
from,to,r,x,b,tap,status
1,2,0,0.1,0,1,1

[gen]
bus,p_mw,vset,qmin,qmax
1,0,1.0,-100,100
"""


def gauss_seidel(net, tolerance=1e-12, max_iterations=200000):
    """
    Gauss-Seidel power flow on complex voltages, used only to cross-check Newton-Raphson
    :return: (v, delta)
    """
    y = build_ybus(net).as_complex()
    n = net.n_bus
    p_sched = -np.array([bus.p_load for bus in net.buses])
    q_sched = -np.array([bus.q_load for bus in net.buses])
    for gen in net.generators:
        p_sched[gen.bus] += gen.p_gen
    voltage = np.ones(n, dtype=np.complex128)
    for bus in net.buses:
        if bus.bus_type != BusType.PQ:
            voltage[bus.id] = bus.v_setpoint
        if bus.bus_type == BusType.SLACK:
            voltage[bus.id] *= np.exp(1j * bus.angle_setpoint)

    for _ in range(max_iterations):
        change = 0.0
        for bus in net.buses:
            i = bus.id
            if bus.bus_type == BusType.SLACK:
                continue
            others = sum(y[i, j] * voltage[j] for j in range(n) if j != i)
            q = q_sched[i]
            if bus.bus_type == BusType.PV:
                q = (voltage[i] * np.conj(y[i].dot(voltage))).imag
            new = ((p_sched[i] - 1j * q) / np.conj(voltage[i]) - others) / y[i, i]
            if bus.bus_type == BusType.PV:
                new = bus.v_setpoint * new / abs(new)
            change = max(change, abs(new - voltage[i]))
            voltage[i] = new
        if change < tolerance:
            break
    return np.abs(voltage), np.angle(voltage)


def injection_double_loop(g, b, v, delta):
    """
    Element-by-element power injection summation
    """
    n = len(v)
    p = np.zeros(n)
    q = np.zeros(n)
    for i in range(n):
        for j in range(n):
            angle = delta[i] - delta[j]
            p[i] += v[i] * v[j] * (g[i][j] * np.cos(angle) + b[i][j] * np.sin(angle))
            q[i] += v[i] * v[j] * (g[i][j] * np.sin(angle) - b[i][j] * np.cos(angle))
    return p, q


def random_edges(n, rng, density=0.5):
    """
    Random undirected graph as a directed edge list holding both directions
    """
    src, dst = [], []
    for i, j in itertools.combinations(range(n), 2):
        if rng.uniform() < density:
            src += [i, j]
            dst += [j, i]
    return np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64)


def all_graphs(n):
    """
    Every undirected simple graph on n labelled nodes, as (src, dst) arrays
    """
    pairs = list(itertools.combinations(range(n), 2))
    for mask in range(2 ** len(pairs)):
        src, dst = [], []
        for k, (i, j) in enumerate(pairs):
            if mask >> k & 1:
                src += [i, j]
                dst += [j, i]
        yield np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64)


def adjacency(src, dst, n):
    """
    a[i, j] = number of edges j -> i
    """
    a = np.zeros((n, n))
    for s, d in zip(src, dst):
        a[d, s] += 1.0
    return a


def dense_gcn(h, src, dst, w):
    n = h.shape[0]
    a_hat = adjacency(src, dst, n) + np.eye(n)
    d_inv_sqrt = np.diag(1.0 / np.sqrt(a_hat.sum(axis=1)))
    return d_inv_sqrt.dot(a_hat).dot(d_inv_sqrt).dot(h).dot(w)


def dense_gat(h, src, dst, w, a, slope=0.2):
    """
    Per-node explicit softmax over the neighborhood plus self
    :return: (output, attention matrix alpha[i, j] per head)
    """
    n = h.shape[0]
    heads = a.shape[0]
    d_out = a.shape[1] // 2
    z = h.dot(w).reshape(n, heads, d_out)
    a_mat = adjacency(src, dst, n)
    out = np.zeros((n, heads, d_out))
    alpha = np.zeros((heads, n, n))
    for k in range(heads):
        for i in range(n):
            neighbors = [j for j in range(n) if a_mat[i, j] > 0 and j != i] + [i]
            scores = []
            for j in neighbors:
                e = a[k, :d_out].dot(z[i, k]) + a[k, d_out:].dot(z[j, k])
                scores.append(e if e > 0 else slope * e)
            scores = np.array(scores)
            weights = np.exp(scores - scores.max())
            weights /= weights.sum()
            for weight, j in zip(weights, neighbors):
                alpha[k, i, j] = weight
                out[i, k] += weight * z[j, k]
    return out.reshape(n, heads * d_out), alpha


def dense_sage(h, src, dst, w_self, w_neigh):
    n = h.shape[0]
    a_mat = adjacency(src, dst, n)
    degree = a_mat.sum(axis=1, keepdims=True)
    mean = np.divide(a_mat.dot(h), degree, out=np.zeros((n, h.shape[1])), where=degree > 0)
    return h.dot(w_self) + mean.dot(w_neigh)


def dense_graphconv(h, src, dst, w_root, w_neigh):
    return h.dot(w_root) + adjacency(src, dst, h.shape[0]).dot(h).dot(w_neigh)


def synthetic_dataset(n_samples, n_bus=2, seed=0, name='synthetic'):
    """
    Random Dataset with valid one-hot bus types (bus 0 slack, the rest PQ)
    """
    rng = np.random.default_rng(seed)
    features = np.zeros((n_samples, n_bus, 7))
    features[:, :, :4] = rng.normal(size=(n_samples, n_bus, 4))
    features[:, 0, 6] = 1.0
    features[:, 1:, 5] = 1.0
    targets = rng.normal(size=(n_samples, n_bus, 2))
    return Dataset(features=features, targets=targets, sample_ids=np.arange(n_samples),
                   bus_ids=tuple(range(1, n_bus + 1)), name=name)


def metric_report(arch, case, nrmse, r2, dataset='scenario_01'):
    """
    Hand-made MetricReport with the same NRMSE / R^2 on both targets
    """
    per_target = {'mse': 0.0, 'rmse': 0.0, 'nrmse': nrmse, 'mae': 0.0, 'r2': r2}
    return MetricReport(mse=nrmse ** 2, rmse=nrmse, nrmse=nrmse, mae=nrmse, r2=r2,
                        per_target={'v': dict(per_target), 'delta': dict(per_target)},
                        dataset=dataset, arch=arch, case=case, loss=0.1, samples=10)
