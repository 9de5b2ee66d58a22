import math

import numpy as np
import pytest

from gridflow.exceptions import CaseParseError, CaseValidationError
from gridflow.grid import BusType, available_cases, load_case, parse_case, render_case, scale_loads

from test.utils import TWO_BUS_CASE, three_bus_network


def assert_networks_close(a, b, tol=1e-12):
    assert a.name == b.name
    assert a.bus_numbers == b.bus_numbers
    assert a.base_mva == b.base_mva
    assert len(a.buses) == len(b.buses)
    for x, y in zip(a.buses, b.buses):
        assert x.id == y.id and x.bus_type == y.bus_type
        for field in ('p_load', 'q_load', 'v_setpoint', 'angle_setpoint', 'shunt_g', 'shunt_b'):
            assert abs(getattr(x, field) - getattr(y, field)) <= tol
    assert [(br.from_bus, br.to_bus, br.status) for br in a.branches] == \
        [(br.from_bus, br.to_bus, br.status) for br in b.branches]
    for x, y in zip(a.branches, b.branches):
        for field in ('r', 'x', 'b_charging', 'tap'):
            assert abs(getattr(x, field) - getattr(y, field)) <= tol
    assert len(a.generators) == len(b.generators)
    for x, y in zip(a.generators, b.generators):
        assert x.bus == y.bus
        for field in ('p_gen', 'v_setpoint', 'q_min', 'q_max'):
            assert getattr(x, field) == getattr(y, field) or abs(getattr(x, field) - getattr(y, field)) <= tol


@pytest.mark.parametrize('name, buses, generators, loads, branches', [
    ('ieee14', 14, 5, 11, 20),
    ('ieee30', 30, 6, 21, 41),
    ('ieee57', 57, 7, 42, 80),
    ('ieee118', 118, 54, 99, 186),
])
def test_shipped_case_counts(name, buses, generators, loads, branches):
    net = load_case(name)
    assert net.n_bus == buses
    assert len(net.generators) == generators
    assert net.n_load == loads
    assert len(net.branches) == branches
    assert sum(bus.bus_type == BusType.SLACK for bus in net.buses) == 1


def test_available_cases():
    assert available_cases() == ['ieee118', 'ieee14', 'ieee30', 'ieee57']


def test_two_bus_case():
    net = parse_case(TWO_BUS_CASE)
    assert net.n_bus == 2
    assert len(net.branches) == 1
    assert net.buses[0].bus_type == BusType.SLACK
    assert net.buses[1].p_load == pytest.approx(0.1)
    assert net.bus_numbers == (1, 2)


def test_per_unit_conversion():
    net = load_case('ieee14')
    assert net.buses[2].p_load == pytest.approx(0.942)
    assert net.buses[8].shunt_b == pytest.approx(0.19)
    assert net.generators[1].p_gen == pytest.approx(0.4)


def test_generator_vset_overrides_bus_vm():
    text = TWO_BUS_CASE.replace('1,0,1.0,-100,100', '1,0,1.04,-100,100')
    net = parse_case(text)
    assert net.buses[0].v_setpoint == 1.04


def test_bus_ids_are_remapped():
    text = TWO_BUS_CASE.replace('\n1,slack', '\n7,slack').replace('\n2,pq', '\n9,pq') \
        .replace('\n1,2,0,0.1', '\n7,9,0,0.1').replace('\n1,0,1.0', '\n7,0,1.0')
    net = parse_case(text)
    assert net.bus_numbers == (7, 9)
    assert [bus.id for bus in net.buses] == [0, 1]
    assert (net.branches[0].from_bus, net.branches[0].to_bus) == (0, 1)


@pytest.mark.parametrize('name', ['ieee14', 'ieee30', 'ieee57', 'ieee118'])
def test_render_round_trip(name):
    net = load_case(name)
    assert parse_case(render_case(net), name=name) == net


def test_render_round_trip_two_bus():
    net = parse_case(TWO_BUS_CASE)
    assert parse_case(render_case(net)) == net


def test_rendered_angle_maps_back_exactly():
    text = TWO_BUS_CASE.replace('2,pq,10,0,0,0,1.0,0', '2,pq,10,0,0,0,1.0,-16.04')
    net = parse_case(text)
    again = parse_case(render_case(net))
    assert again.buses[1].angle_setpoint == net.buses[1].angle_setpoint == math.radians(-16.04)


def test_render_round_trip_scaled():
    net = scale_loads(three_bus_network(charging=0.02), 1.37)
    assert_networks_close(parse_case(render_case(net)), net)


def test_malformed_row_reports_line():
    text = TWO_BUS_CASE.replace('2,pq,10,0,0,0,1.0,0', '2,pq,10,0,0')
    with pytest.raises(CaseParseError) as info:
        parse_case(text)
    assert info.value.line == 10
    assert 'line 10' in str(info.value)


def test_bad_number_reports_line():
    with pytest.raises(CaseParseError) as info:
        parse_case(TWO_BUS_CASE.replace('1,2,0,0.1,0,1,1', '1,2,0,abc,0,1,1'))
    assert info.value.line == 14


def test_unknown_section():
    with pytest.raises(CaseParseError):
        parse_case(TWO_BUS_CASE + '\n[dcline]\n1,2\n')


def test_duplicate_bus_id():
    text = TWO_BUS_CASE.replace('2,pq,10,0,0,0,1.0,0', '1,pq,10,0,0,0,1.0,0')
    with pytest.raises(CaseValidationError):
        parse_case(text)


def test_zero_impedance_branch():
    with pytest.raises(CaseValidationError):
        parse_case(TWO_BUS_CASE.replace('1,2,0,0.1,0,1,1', '1,2,0,0,0,1,1'))


def test_missing_slack():
    with pytest.raises(CaseValidationError):
        parse_case(TWO_BUS_CASE.replace('1,slack', '1,pv'))


def test_two_slacks():
    with pytest.raises(CaseValidationError):
        parse_case(TWO_BUS_CASE.replace('2,pq', '2,slack'))


def test_generator_on_pq_bus():
    text = TWO_BUS_CASE.rstrip('\n') + '\n2,5,1.0,-10,10\n'
    with pytest.raises(CaseValidationError):
        parse_case(text)


def test_island_rejected():
    text = TWO_BUS_CASE.replace('1,2,0,0.1,0,1,1', '1,2,0,0.1,0,1,0')
    with pytest.raises(CaseValidationError):
        parse_case(text)


def test_tap_zero_means_line():
    net = parse_case(TWO_BUS_CASE.replace('1,2,0,0.1,0,1,1', '1,2,0,0.1,0,0,1'))
    assert net.branches[0].tap == 1.0


def test_numeric_bus_types():
    net = parse_case(TWO_BUS_CASE.replace('1,slack', '1,3').replace('2,pq', '2,1'))
    assert net.buses[0].bus_type == BusType.SLACK
    assert net.buses[1].bus_type == BusType.PQ


def test_angles_are_radians():
    net = load_case('ieee14')
    assert net.buses[13].angle_setpoint == pytest.approx(math.radians(-16.04))
    assert np.all([bus.v_setpoint > 0 for bus in net.buses])
