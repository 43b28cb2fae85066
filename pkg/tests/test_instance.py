import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from builders import single_order
from intermodal_lbbd.generator import GeneratorConfig, generate
from intermodal_lbbd.instance import (Compartment, HubKind, Instance, InstanceError, Mode, Order, Service,
                                      compute_forbidden_coassignments, require_valid, validate_instance)


def svc(sid, o, d, dep, arr):
    return Service(sid, o, d, dep, arr, Mode.ROADWAY, 1.0, 1.0, 1)


def test_forbidden_rule_a_overlap():
    f = compute_forbidden_coassignments([svc("s", "A", "B", 9, 33), svc("p", "C", "D", 10, 20)])
    assert "p" in f["s"]


def test_forbidden_boundary_is_not_a_conflict():
    f = compute_forbidden_coassignments([svc("s", "A", "B", 9, 33), svc("p", "B", "C", 33, 40)])
    assert "p" not in f["s"]


def test_forbidden_rule_c():
    f = compute_forbidden_coassignments([svc("s", "A", "B", 50, 60), svc("p", "C", "A", 30, 55)])
    assert "p" in f["s"]


def test_forbidden_rule_b_origin_at_destination():
    # p leaves B before s has arrived there, no time overlap with s's departure window start
    f = compute_forbidden_coassignments([svc("s", "A", "B", 9, 33), svc("p", "B", "C", 5, 8)])
    assert "p" in f["s"]


times = st.integers(0, 200)


@st.composite
def service_pairs(draw):
    a, b = sorted(draw(st.lists(times, min_size=2, max_size=2, unique=True)))
    c, d = sorted(draw(st.lists(times, min_size=2, max_size=2, unique=True)))
    return svc("s", "A", "B", a, b), svc("p", "C", "D", c, d)


@settings(max_examples=200, deadline=None)
@given(service_pairs())
def test_forbidden_deterministic_and_strict_overlap_symmetric(pair):
    s, p = pair
    f1 = compute_forbidden_coassignments([s, p])
    f2 = compute_forbidden_coassignments([s, p])
    assert f1 == f2
    # strictly crossing intervals; nested ones are asymmetric under the literal rule
    strict = (s.departure < p.departure < s.arrival < p.arrival
              or p.departure < s.departure < p.arrival < s.arrival)
    if strict:
        assert "p" in f1["s"] and "s" in f1["p"]


def test_nested_overlap_is_one_sided():
    f = compute_forbidden_coassignments([svc("s", "A", "B", 0, 30), svc("p", "C", "D", 5, 10)])
    assert "p" in f["s"] and "s" not in f["p"]


def test_validate_order_exceeds_capacity():
    inst = single_order(quantity=6000)
    assert any("order exceeds compartment capacity" in v for v in validate_instance(inst))


def test_validate_dc_without_departures():
    inst = single_order(services=())
    assert any("DC unreachable to satellite" in v for v in validate_instance(inst))


def test_validate_generated_instance_is_clean():
    assert validate_instance(generate(GeneratorConfig(2, 2, 12, 3))) == []


@pytest.mark.parametrize("seed", range(5))
def test_no_services_never_valid(seed):
    inst = generate(GeneratorConfig(2, 2, 3, seed))
    bare = Instance(inst.hubs, inst.orders, inst.compartments, (), inst.distances)
    assert validate_instance(bare)
    with pytest.raises(InstanceError):
        require_valid(bare)


def test_big_m_formula():
    inst = generate(GeneratorConfig(2, 2, 5, 1))
    expect = max(s.arrival for s in inst.services) + inst.distances.total() + 1
    assert math.isclose(inst.big_m, expect)


def test_json_round_trip_lossless():
    inst = generate(GeneratorConfig(2, 3, 6, 7))
    text = inst.to_json()
    back = Instance.from_json(text)
    assert back.to_json() == text
    assert back.forbidden == inst.forbidden
    assert set(json.loads(text)) >= {"hubs", "orders", "compartments", "services", "distances"}


def test_fractional_time_rejected():
    d = single_order().to_dict()
    d["services"][0]["departure"] = 9.5
    with pytest.raises(InstanceError):
        Instance.from_dict(d)


def test_derived_sets():
    inst = generate(GeneratorConfig(3, 2, 8, 2))
    assert len(inst.dcs) == 3 and len(inst.satellites) == 2
    assert all(inst.hub[s.destination].kind is HubKind.SATELLITE for s in inst.satellite_services)
    for j in inst.dcs:
        assert all(g.dc_hub == j for g in inst.compartments_at(j))
        assert all(s.origin == j for s in inst.delta_out(j))
    n = inst.orders[0].id
    row = [inst.distances.between(m.id, n) for m in inst.orders if m.id != n]
    row += [inst.distances.from_satellite(l, n) for l in inst.satellites]
    assert inst.min_incoming_distance(n) == min(row)


def test_order_invariants_checked():
    inst = single_order()
    bad = Instance(inst.hubs, (Order("o1", "J1", 1000, 10, 0),), (Compartment("g1", "J1", 5000),),
                   inst.services, inst.distances)
    assert any("weight below 1" in v for v in validate_instance(bad))
