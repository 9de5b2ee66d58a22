"""
AC power flow by Newton-Raphson in polar coordinates
"""

import dataclasses
import json
import logging

import numpy as np
import pandas as pd

from .exceptions import ConfigError, ContractError, SolverError
from .grid import BusType, build_ybus, pq_indices, pv_indices, scheduled_injection, slack_index
from .utils import atomic_write


SOLUTION_COLUMNS = ['bus_id', 'bus_type', 'v_pu', 'delta_rad', 'p_pu', 'q_pu']


@dataclasses.dataclass(frozen=True)
class BusState:
    v: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        v = np.array(self.v, dtype=np.float64)
        delta = np.array(self.delta, dtype=np.float64)
        if v.shape != delta.shape or v.ndim != 1:
            raise ContractError('v and delta must be vectors of equal length.')
        if np.any(~(v > 0)):
            raise ContractError('Voltage magnitudes must be positive.')
        object.__setattr__(self, 'v', v)
        object.__setattr__(self, 'delta', delta)

    @classmethod
    def initial(cls, net, flat_start=True):
        """
        Starting point: setpoints on Slack / PV, flat (1.0, 0.0) elsewhere unless flat_start is off
        :param net: Network
        :param flat_start: use V=1, delta=0 for unknowns instead of the case file values
        :return: BusState
        """
        v = np.ones(net.n_bus)
        delta = np.zeros(net.n_bus)
        for bus in net.buses:
            if bus.bus_type != BusType.PQ or not flat_start:
                v[bus.id] = bus.v_setpoint
            if bus.bus_type == BusType.SLACK or not flat_start:
                delta[bus.id] = bus.angle_setpoint
        return cls(v=v, delta=delta)


@dataclasses.dataclass(frozen=True)
class Injection:
    p: np.ndarray
    q: np.ndarray


@dataclasses.dataclass(frozen=True)
class PowerFlowSolution:
    state: BusState
    injection: Injection
    iterations: int
    max_mismatch: float
    converged: bool
    history: tuple = ()

    def diagnostics(self):
        # JSON has no infinity
        def finite(x):
            return float(x) if np.isfinite(x) else None
        return {
            'iterations': self.iterations,
            'max_mismatch': finite(self.max_mismatch),
            'converged': self.converged,
            'history': [finite(x) for x in self.history],
        }


@dataclasses.dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-8
    max_iterations: int = 30
    flat_start: bool = True

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ConfigError('solver.tolerance', 'must be positive, got {0!r}'.format(self.tolerance))
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ConfigError('solver.max_iterations', 'must be an integer >= 1, got {0!r}'.format(self.max_iterations))


def _complex_voltage(s):
    return s.v * np.exp(1j * s.delta)


def power_injection(y, s):
    """
    Computed bus injections for a given state, S = V * conj(Ybus V)
    :param y: AdmittanceMatrix
    :param s: BusState
    :return: Injection
    """
    if y.n != s.v.shape[0]:
        raise ContractError('Admittance matrix is {0}x{0} but the state has {1} buses.'.format(y.n, s.v.shape[0]))
    voltage = _complex_voltage(s)
    power = voltage * np.conj(y.as_complex().dot(voltage))
    return Injection(p=power.real, q=power.imag)


def _check_size(net, s):
    if s.v.shape[0] != net.n_bus:
        raise ContractError('State has {0} buses, network has {1}.'.format(s.v.shape[0], net.n_bus))


def mismatch(net, y, s):
    """
    Scheduled minus computed injection: P over PV+PQ buses followed by Q over PQ buses
    :param net: Network
    :param y: AdmittanceMatrix
    :param s: BusState
    :return: residual vector
    """
    _check_size(net, s)
    pvpq = np.r_[pv_indices(net), pq_indices(net)]
    pq = pq_indices(net)
    p_sched, q_sched = scheduled_injection(net)
    computed = power_injection(y, s)
    return np.r_[p_sched[pvpq] - computed.p[pvpq], q_sched[pq] - computed.q[pq]]


def jacobian(net, y, s):
    """
    Analytic Jacobian of computed (P, Q) with respect to (delta, V)
    Rows: P over PV+PQ, Q over PQ. Columns: delta over PV+PQ, V over PQ.
    :param net: Network
    :param y: AdmittanceMatrix
    :param s: BusState
    :return: dense matrix
    """
    _check_size(net, s)
    pvpq = np.r_[pv_indices(net), pq_indices(net)]
    pq = pq_indices(net)

    ybus = y.as_complex()
    voltage = _complex_voltage(s)
    current = ybus.dot(voltage)
    diag_v = np.diag(voltage)
    diag_i = np.diag(current)
    diag_v_norm = np.diag(voltage / np.abs(voltage))

    ds_dvm = diag_v.dot(np.conj(ybus.dot(diag_v_norm))) + np.conj(diag_i).dot(diag_v_norm)
    ds_dva = 1j * diag_v.dot(np.conj(diag_i - ybus.dot(diag_v)))

    j11 = ds_dva[np.ix_(pvpq, pvpq)].real
    j12 = ds_dvm[np.ix_(pvpq, pq)].real
    j21 = ds_dva[np.ix_(pq, pvpq)].imag
    j22 = ds_dvm[np.ix_(pq, pq)].imag
    return np.block([[j11, j12], [j21, j22]])


def _max_abs(vector):
    return float(np.max(np.abs(vector))) if vector.size else 0.0


def solve_newton_raphson(net, opts=None, y=None):
    """
    Solve the power flow of a network
    :param net: Network
    :param opts: SolverOptions (default tolerance 1e-8, 30 iterations, flat start)
    :param y: precomputed AdmittanceMatrix (built from net when omitted)
    :return: PowerFlowSolution, converged=False when max_iterations is reached
    """
    logger = logging.getLogger('gridflow.powerflow')
    opts = opts or SolverOptions()
    y = y if y is not None else build_ybus(net)

    pv = pv_indices(net)
    pq = pq_indices(net)
    pvpq = np.r_[pv, pq]
    n_angle = len(pvpq)

    start = BusState.initial(net, opts.flat_start)
    v = start.v.copy()
    delta = start.delta.copy()
    state = start

    residual = mismatch(net, y, state)
    norm = _max_abs(residual)
    history = [norm]
    iterations = 0
    logger.debug('%s: iteration 0, max mismatch %.3e', net.name, norm)

    while norm > opts.tolerance and iterations < opts.max_iterations:
        try:
            step = np.linalg.solve(jacobian(net, y, state), residual)
        except np.linalg.LinAlgError as e:
            raise SolverError('Singular Jacobian at iteration {0}: {1}'.format(iterations + 1, e))
        delta[pvpq] += step[:n_angle]
        v[pq] += step[n_angle:]
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(delta))) or np.any(v[pq] <= 0):
            iterations += 1
            logger.debug('%s: iteration %d left the feasible region', net.name, iterations)
            norm = float('inf')
            history.append(norm)
            break
        state = BusState(v=v.copy(), delta=delta.copy())
        residual = mismatch(net, y, state)
        norm = _max_abs(residual)
        iterations += 1
        history.append(norm)
        logger.debug('%s: iteration %d, max mismatch %.3e', net.name, iterations, norm)

    converged = norm <= opts.tolerance
    if not converged:
        logger.debug('%s: no convergence after %d iterations (max mismatch %.3e)', net.name, iterations, norm)

    computed = power_injection(y, state)
    p, q = scheduled_injection(net)
    slack = slack_index(net)
    p[slack] = computed.p[slack]
    q[slack] = computed.q[slack]
    q[pv] = computed.q[pv]
    if not converged:
        p, q = computed.p, computed.q

    return PowerFlowSolution(state=state, injection=Injection(p=p, q=q), iterations=iterations,
                             max_mismatch=norm, converged=converged, history=tuple(history))


def solution_frame(net, sol):
    """
    Per-bus solution table
    :param net: Network
    :param sol: PowerFlowSolution
    :return: pandas DataFrame with the solution export columns
    """
    return pd.DataFrame({
        'bus_id': list(net.bus_numbers),
        'bus_type': [bus.bus_type.value for bus in net.buses],
        'v_pu': sol.state.v,
        'delta_rad': sol.state.delta,
        'p_pu': sol.injection.p,
        'q_pu': sol.injection.q,
    }, columns=SOLUTION_COLUMNS)


def write_solution(net, sol, csv_path, json_path):
    """
    Export a solution as CSV plus a JSON diagnostics sidecar
    :param net: Network
    :param sol: PowerFlowSolution
    :param csv_path: per-bus table path
    :param json_path: diagnostics path
    """
    logger = logging.getLogger('gridflow.powerflow')
    with atomic_write(csv_path) as f:
        solution_frame(net, sol).to_csv(f, index=False, float_format='%.17g', lineterminator='\n')
    with atomic_write(json_path) as f:
        json.dump(dict(sol.diagnostics(), case=net.name), f, indent=2, sort_keys=True)
        f.write('\n')
    logger.info('Solution written to %s (%s)', csv_path, json_path)
