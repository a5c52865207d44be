import json
import random
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from conftest import case_doc, make_case, random_case
from hiddenfail.fixtures import NAMES, fixture_text, load_fixture
from hiddenfail.netmodel import (
    CaseSchemaError, CaseSemanticError, CaseSyntaxError, ElementRef, UnknownElementError, branch_ref,
    bus_ref, islands, parse_case, region_of_vulnerability, serialize_case, validate,
)


def two_bus_doc():
    return case_doc([1, 2], [(1, 1, 2, 0.5, 60.0)], gens=[(1, 50.0, 100.0)], loads=[(2, 50.0)])


def test_minimal_two_bus():
    case = parse_case(json.dumps(two_bus_doc()))
    assert len(case.buses) == 2 and len(case.branches) == 1
    assert case.bus(1).is_slack and not case.bus(2).is_slack


def test_triangle_fixture_shape():
    tri = load_fixture("triangle")
    assert tri.bus_ids == [1, 2, 3]
    assert [br.reactance for br in tri.branches] == [0.1, 0.1, 0.1]
    assert tri.total_load == 100.0 and tri.generators[0].p == 100.0
    assert validate(tri) == []


def test_dangling_bus_is_semantic_error():
    doc = two_bus_doc()
    doc["branches"][0]["to_bus"] = 99
    with pytest.raises(CaseSemanticError) as info:
        parse_case(json.dumps(doc))
    assert "unknown bus" in str(info.value)
    assert [v.rule for v in info.value.violations] == ["known bus"]


def test_syntax_error_has_position():
    with pytest.raises(CaseSyntaxError) as info:
        parse_case('{"format": "relaycase-1",\n  "buses": [}')
    assert info.value.line == 2 and info.value.column > 0


def test_unknown_field_rejected():
    doc = two_bus_doc()
    doc["branches"][0]["resistance"] = 0.01
    with pytest.raises(CaseSchemaError):
        parse_case(json.dumps(doc))
    doc = two_bus_doc()
    doc["format"] = "other"
    with pytest.raises(CaseSchemaError):
        parse_case(json.dumps(doc))


def test_zero_reactance_single_violation():
    doc = two_bus_doc()
    doc["branches"][0]["reactance"] = 0.0
    found = validate(parse_case(json.dumps(doc), strict=False))
    assert [v.rule for v in found] == ["reactance > 0"]
    assert found[0].element == "branch:1"


def test_two_slacks_single_violation():
    doc = two_bus_doc()
    doc["buses"][1]["is_slack"] = True
    found = validate(parse_case(json.dumps(doc), strict=False))
    assert [v.rule for v in found] == ["single slack per island"]


def test_other_violations():
    doc = two_bus_doc()
    doc["generators"][0]["p"] = 150.0
    doc["loads"][0]["p"] = -1.0
    doc["branches"][0]["rating"] = 0
    rules = {v.rule for v in validate(parse_case(json.dumps(doc), strict=False))}
    assert rules == {"p <= p_max", "p >= 0", "rating > 0"}


@pytest.mark.parametrize("name", NAMES)
def test_round_trip(name):
    case = load_fixture(name)
    again = parse_case(serialize_case(case))
    assert again == case
    assert serialize_case(again) == serialize_case(case)
    assert parse_case(fixture_text(name)) == case


def test_islands_examples():
    tri = load_fixture("triangle")
    assert islands(tri) == [frozenset({1, 2, 3})]
    assert islands(tri.with_outages([1, 2])) == [frozenset({1}), frozenset({2, 3})]
    assert islands(tri.with_outages([1, 2, 3])) == [frozenset({1}), frozenset({2}), frozenset({3})]


def test_region_examples():
    tri = load_fixture("triangle")
    assert region_of_vulnerability(tri, branch_ref(1), 0).members == (branch_ref(1),)
    r = region_of_vulnerability(tri, branch_ref(1), 1)
    assert r.branches == [1, 2, 3] and r.buses == [1, 2]
    path = load_fixture("path4")
    r = region_of_vulnerability(path, branch_ref(1), 1)
    assert r.branches == [1, 2]
    assert branch_ref(3) not in r
    r = region_of_vulnerability(path, bus_ref(2), 1)
    assert r.branches == [1, 2] and r.buses == [1, 2, 3]
    with pytest.raises(UnknownElementError):
        region_of_vulnerability(path, branch_ref(9), 1)
    with pytest.raises(ValueError):
        region_of_vulnerability(path, branch_ref(1), -1)


def test_element_ref_parse():
    assert ElementRef.parse("bus:3") == bus_ref(3)
    assert ElementRef.parse("7") == branch_ref(7)
    with pytest.raises(ValueError):
        ElementRef.parse("gen:1")


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.data())
def test_islands_partition_and_region_properties(seed, data):
    rng = random.Random(seed)
    case = random_case(rng)
    out = rng.sample([br.id for br in case.branches], rng.randint(0, len(case.branches)))
    parts = islands(case.with_outages(out))
    flat = sorted(b for p in parts for b in p)
    assert flat == case.bus_ids
    # connectivity: every remaining branch joins buses of the same component
    where = {b: i for i, p in enumerate(parts) for b in p}
    for br in case.with_outages(out).in_service:
        assert where[br.from_bus] == where[br.to_bus]

    center = branch_ref(data.draw(st.sampled_from([br.id for br in case.branches])))
    shuffled = list(case.branches)
    rng.shuffle(shuffled)
    perm = replace(case, branches=tuple(shuffled))
    prev = set()
    for depth in range(4):
        r = region_of_vulnerability(case, center, depth)
        assert r.members == region_of_vulnerability(perm, center, depth).members
        assert prev <= set(r.members)
        assert list(r.members) == sorted(r.members, key=lambda m: m.sort_key)
        prev = set(r.members)
