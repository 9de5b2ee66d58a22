"""
Power network model: case files, bus admittance matrix and graph edge index
"""

import dataclasses
import enum
import logging
import math
import os
from collections import deque

import numpy as np

from .exceptions import CaseParseError, CaseValidationError, SingularBranchError


CASES_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'cases')

BUS_COLUMNS = ['id', 'type', 'p_load_mw', 'q_load_mvar', 'gs', 'bs', 'vm', 'va_deg']
BRANCH_COLUMNS = ['from', 'to', 'r', 'x', 'b', 'tap', 'status']
GEN_COLUMNS = ['bus', 'p_mw', 'vset', 'qmin', 'qmax']
META_COLUMNS = ['key', 'value']

SECTION_COLUMNS = {
    'meta': META_COLUMNS,
    'bus': BUS_COLUMNS,
    'branch': BRANCH_COLUMNS,
    'gen': GEN_COLUMNS,
}


class BusType(enum.Enum):
    SLACK = 'slack'
    PV = 'pv'
    PQ = 'pq'

    @classmethod
    def parse(cls, token):
        """
        Parse a bus type token
        :param token: 'slack' / 'pv' / 'pq' or the numeric codes 3 / 2 / 1
        :return: BusType
        """
        token = token.strip().lower()
        numeric = {'3': cls.SLACK, '2': cls.PV, '1': cls.PQ}
        if token in numeric:
            return numeric[token]
        return cls(token)


@dataclasses.dataclass(frozen=True)
class Bus:
    id: int
    bus_type: BusType
    p_load: float = 0.0
    q_load: float = 0.0
    v_setpoint: float = 1.0
    angle_setpoint: float = 0.0
    shunt_g: float = 0.0
    shunt_b: float = 0.0


@dataclasses.dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charging: float = 0.0
    tap: float = 1.0
    status: bool = True


@dataclasses.dataclass(frozen=True)
class Generator:
    bus: int
    p_gen: float = 0.0
    v_setpoint: float = 1.0
    q_min: float = -math.inf
    q_max: float = math.inf


@dataclasses.dataclass(frozen=True)
class Network:
    """
    Static grid description, all quantities in per-unit on base_mva
    """
    buses: tuple
    branches: tuple
    generators: tuple
    base_mva: float = 100.0
    name: str = 'network'
    bus_numbers: tuple = None

    def __post_init__(self):
        object.__setattr__(self, 'buses', tuple(self.buses))
        object.__setattr__(self, 'branches', tuple(self.branches))
        object.__setattr__(self, 'generators', tuple(self.generators))
        if self.bus_numbers is None:
            object.__setattr__(self, 'bus_numbers', tuple(range(1, len(self.buses) + 1)))
        else:
            object.__setattr__(self, 'bus_numbers', tuple(self.bus_numbers))
        _check_structure(self)

    @property
    def n_bus(self):
        return len(self.buses)

    @property
    def n_load(self):
        return sum(1 for bus in self.buses if bus.p_load != 0.0 or bus.q_load != 0.0)

    def bus_types(self):
        return [bus.bus_type for bus in self.buses]


@dataclasses.dataclass(frozen=True)
class AdmittanceMatrix:
    """
    Bus admittance matrix split into conductance g and susceptance b (per-unit)
    """
    g: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        for name in ('g', 'b'):
            value = np.array(getattr(self, name), dtype=np.float64)
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n(self):
        return self.g.shape[0]

    def as_complex(self):
        return self.g + 1j * self.b


@dataclasses.dataclass(frozen=True)
class EdgeIndex:
    """
    Directed (src, dst) bus pairs, both directions for every connection
    """
    pairs: tuple

    def __post_init__(self):
        object.__setattr__(self, 'pairs', tuple((int(s), int(d)) for s, d in self.pairs))

    def __len__(self):
        return len(self.pairs)

    @property
    def src(self):
        return np.array([s for s, _ in self.pairs], dtype=np.int64)

    @property
    def dst(self):
        return np.array([d for _, d in self.pairs], dtype=np.int64)

    def as_array(self):
        """
        :return: int64 array of shape (2, E) with rows (src, dst)
        """
        return np.array([self.src, self.dst], dtype=np.int64).reshape(2, len(self.pairs))


def _check_structure(net):
    n = len(net.buses)
    if n == 0:
        raise CaseValidationError('Network has no buses.')
    for i, bus in enumerate(net.buses):
        if bus.id != i:
            raise CaseValidationError('Bus ids must form 0..n-1 without gaps, got {0} at position {1}.'.format(bus.id, i))
        if not isinstance(bus.bus_type, BusType):
            raise CaseValidationError('Bus {0} has an invalid type.'.format(i))
        if bus.bus_type != BusType.PQ and not bus.v_setpoint > 0:
            raise CaseValidationError('Bus {0} needs a positive voltage setpoint.'.format(i))
    slacks = [bus.id for bus in net.buses if bus.bus_type == BusType.SLACK]
    if len(slacks) != 1:
        raise CaseValidationError('Exactly one slack bus is required, found {0}.'.format(len(slacks)))
    for branch in net.branches:
        if not (0 <= branch.from_bus < n and 0 <= branch.to_bus < n):
            raise CaseValidationError('Branch {0}-{1} references an unknown bus.'.format(branch.from_bus, branch.to_bus))
        if branch.from_bus == branch.to_bus:
            raise CaseValidationError('Branch at bus {0} connects the bus to itself.'.format(branch.from_bus))
        if not branch.tap > 0:
            raise CaseValidationError('Branch {0}-{1} has a non-positive tap ratio.'.format(branch.from_bus, branch.to_bus))
    for gen in net.generators:
        if not 0 <= gen.bus < n:
            raise CaseValidationError('Generator references unknown bus {0}.'.format(gen.bus))
        if net.buses[gen.bus].bus_type == BusType.PQ:
            raise CaseValidationError('Generator at bus {0} must sit on a slack or PV bus.'.format(gen.bus))
    if len(net.bus_numbers) != n:
        raise CaseValidationError('bus_numbers must hold one entry per bus.')


def validate_network(net):
    """
    Full validation: structure, non-zero series impedance and connectivity
    :param net: Network
    :return: the same network
    """
    _check_structure(net)
    for branch in net.branches:
        if branch.r == 0.0 and branch.x == 0.0:
            raise CaseValidationError('Branch {0}-{1} has zero series impedance.'.format(
                net.bus_numbers[branch.from_bus], net.bus_numbers[branch.to_bus]))

    adjacency = [[] for _ in range(net.n_bus)]
    for branch in net.branches:
        if branch.status:
            adjacency[branch.from_bus].append(branch.to_bus)
            adjacency[branch.to_bus].append(branch.from_bus)
    seen = {slack_index(net)}
    queue = deque(seen)
    while queue:
        i = queue.popleft()
        for j in adjacency[i]:
            if j not in seen:
                seen.add(j)
                queue.append(j)
    if len(seen) != net.n_bus:
        missing = sorted(set(range(net.n_bus)) - seen)
        raise CaseValidationError('Network is not connected, unreachable buses: {0}.'.format(
            [net.bus_numbers[i] for i in missing]))
    return net


def _split_sections(text):
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if line.startswith('['):
            if not line.endswith(']'):
                raise CaseParseError('Unterminated section header {0!r}.'.format(line), lineno)
            current = line[1:-1].strip().lower()
            if current not in SECTION_COLUMNS:
                raise CaseParseError('Unknown section [{0}].'.format(current), lineno)
            if current in sections:
                raise CaseParseError('Section [{0}] appears twice.'.format(current), lineno)
            sections[current] = []
            continue
        if current is None:
            raise CaseParseError('Data outside of any section.', lineno)
        sections[current].append((lineno, [field.strip() for field in line.split(',')]))
    return sections


def _section_rows(sections, name, required=True):
    rows = sections.get(name)
    if rows is None:
        if required:
            raise CaseParseError('Missing section [{0}].'.format(name))
        return []
    columns = SECTION_COLUMNS[name]
    if rows and [field.lower() for field in rows[0][1]] == columns:
        rows = rows[1:]
    for lineno, fields in rows:
        if len(fields) != len(columns):
            raise CaseParseError('[{0}] row needs {1} fields ({2}), got {3}.'.format(
                name, len(columns), ','.join(columns), len(fields)), lineno)
    return rows


def _number(token, lineno, cast=float, allow_inf=False):
    try:
        value = cast(float(token)) if cast is int else cast(token)
    except ValueError:
        raise CaseParseError('Not a number: {0!r}.'.format(token), lineno)
    if cast is float and (math.isnan(value) or (math.isinf(value) and not allow_inf)):
        raise CaseParseError('Non-finite value: {0!r}.'.format(token), lineno)
    return value


def parse_case(text, name=None):
    """
    Parse a sectioned CSV case file
    :param text: case file content
    :param name: network name override (default - [meta] name)
    :return: validated Network in per-unit
    """
    logger = logging.getLogger('gridflow.grid')
    sections = _split_sections(text)

    meta = {}
    for lineno, (key, value) in _section_rows(sections, 'meta', required=False):
        meta[key.lower()] = (lineno, value)
    base_mva = 100.0
    if 'base_mva' in meta:
        base_mva = _number(meta['base_mva'][1], meta['base_mva'][0])
        if not base_mva > 0:
            raise CaseParseError('base_mva must be positive.', meta['base_mva'][0])
    name = name or (meta['name'][1] if 'name' in meta else 'network')

    raw_buses = []
    for lineno, fields in _section_rows(sections, 'bus'):
        number = _number(fields[0], lineno, int)
        try:
            bus_type = BusType.parse(fields[1])
        except ValueError:
            raise CaseParseError('Unknown bus type {0!r}.'.format(fields[1]), lineno)
        values = [_number(token, lineno) for token in fields[2:]]
        raw_buses.append((lineno, number, bus_type, values))

    numbers = [number for _, number, _, _ in raw_buses]
    duplicates = sorted({number for number in numbers if numbers.count(number) > 1})
    if duplicates:
        raise CaseValidationError('Duplicate bus ids: {0}.'.format(duplicates))
    order = sorted(numbers)
    index_of = {number: i for i, number in enumerate(order)}

    generators = []
    gen_vset = {}
    for lineno, fields in _section_rows(sections, 'gen', required=False):
        number = _number(fields[0], lineno, int)
        if number not in index_of:
            raise CaseValidationError('Generator at line {0} references unknown bus {1}.'.format(lineno, number))
        p_mw, vset = _number(fields[1], lineno), _number(fields[2], lineno)
        # unbounded reactive limits are written as inf / -inf
        qmin, qmax = [_number(token, lineno, allow_inf=True) for token in fields[3:]]
        bus = index_of[number]
        generators.append(Generator(bus=bus, p_gen=p_mw / base_mva, v_setpoint=vset,
                                    q_min=qmin / base_mva, q_max=qmax / base_mva))
        gen_vset.setdefault(bus, vset)

    buses = [None] * len(raw_buses)
    for lineno, number, bus_type, (pd, qd, gs, bs, vm, va) in raw_buses:
        i = index_of[number]
        v_setpoint = vm
        if bus_type != BusType.PQ and i in gen_vset:
            v_setpoint = gen_vset[i]
        buses[i] = Bus(id=i, bus_type=bus_type, p_load=pd / base_mva, q_load=qd / base_mva,
                       v_setpoint=v_setpoint, angle_setpoint=math.radians(va),
                       shunt_g=gs / base_mva, shunt_b=bs / base_mva)

    branches = []
    for lineno, fields in _section_rows(sections, 'branch'):
        f_bus, t_bus = _number(fields[0], lineno, int), _number(fields[1], lineno, int)
        for number in (f_bus, t_bus):
            if number not in index_of:
                raise CaseValidationError('Branch at line {0} references unknown bus {1}.'.format(lineno, number))
        r, x, b, tap = [_number(token, lineno) for token in fields[2:6]]
        status = _number(fields[6], lineno, int)
        if tap == 0.0:
            tap = 1.0
        if f_bus == t_bus:
            raise CaseValidationError('Branch at line {0} connects bus {1} to itself.'.format(lineno, f_bus))
        if r == 0.0 and x == 0.0:
            raise CaseValidationError('Branch at line {0} has zero series impedance.'.format(lineno))
        if tap < 0:
            raise CaseValidationError('Branch at line {0} has a negative tap ratio.'.format(lineno))
        branches.append(Branch(from_bus=index_of[f_bus], to_bus=index_of[t_bus], r=r, x=x,
                               b_charging=b, tap=tap, status=bool(status)))

    slacks = [bus for bus in buses if bus.bus_type == BusType.SLACK]
    if len(slacks) != 1:
        raise CaseValidationError('Exactly one slack bus is required, found {0}.'.format(len(slacks)))

    net = Network(buses=buses, branches=branches, generators=generators, base_mva=base_mva,
                  name=name, bus_numbers=order)
    validate_network(net)
    logger.debug('Parsed case %s: %d buses, %d branches, %d generators.',
                 name, net.n_bus, len(net.branches), len(net.generators))
    return net


def _exact(value, forward, inverse, max_steps=256):
    """
    Text of a number t with inverse(t) == value, searched among the floats next to forward(value)
    :param value: stored per-unit / radian quantity
    :param forward: conversion to the file unit
    :param inverse: conversion the parser applies
    :return: repr of t, or of forward(value) when no float in reach maps back exactly
    """
    guess = float(forward(value))
    if not math.isfinite(guess) or inverse(guess) == value:
        return repr(guess)
    for direction in (math.inf, -math.inf):
        t = guess
        for _ in range(max_steps):
            t = float(np.nextafter(t, direction))
            if inverse(t) == value:
                return repr(t)
    return repr(guess)


def render_case(net):
    """
    Render a network in the sectioned CSV case format
    Networks read from a case file render back to text that parses to an equal Network.
    :param net: Network
    :return: case file text
    """
    base = net.base_mva

    def mw(value):
        return _exact(value, lambda v: v * base, lambda t: t / base)

    lines = ['[meta]', ','.join(META_COLUMNS), 'name,{0}'.format(net.name), 'base_mva,{0!r}'.format(base), '']
    lines += ['[bus]', ','.join(BUS_COLUMNS)]
    for bus in net.buses:
        lines.append(','.join([
            str(net.bus_numbers[bus.id]), bus.bus_type.value,
            mw(bus.p_load), mw(bus.q_load), mw(bus.shunt_g), mw(bus.shunt_b),
            repr(bus.v_setpoint), _exact(bus.angle_setpoint, math.degrees, math.radians),
        ]))
    lines += ['', '[branch]', ','.join(BRANCH_COLUMNS)]
    for branch in net.branches:
        lines.append(','.join([
            str(net.bus_numbers[branch.from_bus]), str(net.bus_numbers[branch.to_bus]),
            repr(branch.r), repr(branch.x), repr(branch.b_charging), repr(branch.tap),
            '1' if branch.status else '0',
        ]))
    lines += ['', '[gen]', ','.join(GEN_COLUMNS)]
    for gen in net.generators:
        lines.append(','.join([
            str(net.bus_numbers[gen.bus]), mw(gen.p_gen), repr(gen.v_setpoint), mw(gen.q_min), mw(gen.q_max),
        ]))
    return '\n'.join(lines) + '\n'


def available_cases():
    return sorted(name[:-len('.case')] for name in os.listdir(CASES_DIR) if name.endswith('.case'))


def load_case(name_or_path):
    """
    Load a shipped case by name (ieee14, ieee30, ieee57, ieee118) or a case file by path
    :param name_or_path: case name or filesystem path
    :return: Network
    """
    if os.path.isfile(name_or_path):
        path = name_or_path
        name = None
    else:
        path = os.path.join(CASES_DIR, name_or_path + '.case')
        name = name_or_path
        if not os.path.isfile(path):
            raise FileNotFoundError('No case file or shipped case named {0!r} (shipped: {1}).'.format(
                name_or_path, ', '.join(available_cases())))
    with open(path, encoding='utf-8') as f:
        return parse_case(f.read(), name=name)


def build_ybus(net):
    """
    Build the complex bus admittance matrix
    :param net: Network
    :return: AdmittanceMatrix
    """
    n = net.n_bus
    y = np.zeros((n, n), dtype=np.complex128)
    for branch in net.branches:
        if not branch.status:
            continue
        if branch.r == 0.0 and branch.x == 0.0:
            raise SingularBranchError('Branch {0}-{1} has zero series impedance.'.format(
                net.bus_numbers[branch.from_bus], net.bus_numbers[branch.to_bus]))
        i, j = branch.from_bus, branch.to_bus
        y_series = 1.0 / complex(branch.r, branch.x)
        y_charging = 1j * branch.b_charging / 2.0
        tap = branch.tap
        y[i, i] += y_series / tap ** 2 + y_charging
        y[j, j] += y_series + y_charging
        y[i, j] -= y_series / tap
        y[j, i] -= y_series / tap
    for bus in net.buses:
        y[bus.id, bus.id] += complex(bus.shunt_g, bus.shunt_b)
    return AdmittanceMatrix(g=y.real, b=y.imag)


def edge_index(net):
    """
    Directed edge list for message passing, parallel branches collapsed
    :param net: Network
    :return: EdgeIndex sorted by (src, dst)
    """
    pairs = set()
    for branch in net.branches:
        if branch.status:
            pairs.add((branch.from_bus, branch.to_bus))
            pairs.add((branch.to_bus, branch.from_bus))
    return EdgeIndex(pairs=sorted(pairs))


def slack_index(net):
    for bus in net.buses:
        if bus.bus_type == BusType.SLACK:
            return bus.id
    raise CaseValidationError('No slack bus defined in network.')


def _indices_of(net, bus_type):
    return np.array([i for i, kind in enumerate(net.bus_types()) if kind == bus_type], dtype=np.int64)


def pv_indices(net):
    return _indices_of(net, BusType.PV)


def pq_indices(net):
    return _indices_of(net, BusType.PQ)


def generation(net):
    """
    Scheduled active generation per bus
    :param net: Network
    :return: array of length n_bus (per-unit)
    """
    p_gen = np.zeros(net.n_bus)
    for gen in net.generators:
        p_gen[gen.bus] += gen.p_gen
    return p_gen


def scheduled_injection(net):
    """
    Scheduled net injection (generation minus load); generators carry no scheduled reactive power
    :param net: Network
    :return: (p, q) arrays in per-unit
    """
    p_load = np.array([bus.p_load for bus in net.buses])
    q_load = np.array([bus.q_load for bus in net.buses])
    return generation(net) - p_load, -q_load


def with_loads(net, p_load, q_load, p_gen=None):
    """
    Copy of a network with replaced bus loads (and optionally generator dispatch)
    :param net: Network
    :param p_load: per-bus active load (per-unit)
    :param q_load: per-bus reactive load (per-unit)
    :param p_gen: per-generator active injection (per-unit), None keeps the current dispatch
    :return: Network
    """
    buses = [dataclasses.replace(bus, p_load=float(p), q_load=float(q))
             for bus, p, q in zip(net.buses, p_load, q_load)]
    generators = net.generators
    if p_gen is not None:
        generators = [dataclasses.replace(gen, p_gen=float(p)) for gen, p in zip(net.generators, p_gen)]
    return dataclasses.replace(net, buses=buses, generators=generators)


def scale_loads(net, factor):
    """
    Scale every load and the generator dispatch by the same factor
    :param net: Network
    :param factor: multiplier
    :return: Network
    """
    return with_loads(net,
                      [bus.p_load * factor for bus in net.buses],
                      [bus.q_load * factor for bus in net.buses],
                      [gen.p_gen * factor for gen in net.generators])
