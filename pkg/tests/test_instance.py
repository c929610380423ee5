from __future__ import annotations

import dataclasses
import io
import json

import pytest

from helpers import REF_RATES, make_instance
from qres.instance import (
    InstanceError,
    instance_from_document,
    load_exec_times,
    load_instance,
    parse_instance,
    popcount,
    serialize_instance,
    synth_exec_time,
    validate,
)


def minimal_doc() -> dict:
    return {
        "circuits": [{"id": "c1", "demand_set": [1], "wait_set": [1.0]}],
        "providers": ["p1"],
        "machines": [{"provider": "p1", "machine": "m1", "capacity": 5}],
        "default_rates": {"reserve": 1, "utilize": 0.5, "on_demand": 2, "penalty": 3},
        "exec_times": [
            {"circuit": "c1", "provider": "p1", "machine": "m1", "seconds": 0.004}
        ],
    }


# --- load_instance ---------------------------------------------------------


def test_load_reference_instance(reference_instance):
    inst = reference_instance
    assert len(inst.machines) == 6
    assert inst.demand_sets["qft"] == tuple(range(10, 23))
    assert inst.wait_sets["qft"] == tuple(range(1000, 9001, 1000))
    rates = inst.rate("qft", "p1")
    assert rates.reserve_per_qubit == 1_680_000
    assert rates.utilize_per_qubit == 100_000
    assert rates.on_demand_per_qubit == 7_000_000
    assert rates.penalty_per_second == 10_000_000
    assert all(m.capacity_qubits == 30 for m in inst.machines)
    assert inst.exec_time("qft", "p2", "m2") == 5000


def test_load_minimal_single_triple():
    inst = instance_from_document(minimal_doc())
    assert inst.triples() == [("c1", "p1", "m1")]
    assert inst.wait_sets["c1"] == (1_000_000,)


def test_probability_sum_error():
    doc = minimal_doc()
    doc["circuits"][0]["demand_set"] = [1, 2]
    doc["circuits"][0]["demand_probs"] = [0.4, 0.5]
    with pytest.raises(InstanceError, match="sum"):
        instance_from_document(doc)


def test_capacity_defaults_to_30():
    doc = minimal_doc()
    del doc["machines"][0]["capacity"]
    inst = instance_from_document(doc)
    assert inst.machines[0].capacity_qubits == 30


def test_missing_rates_error():
    doc = minimal_doc()
    del doc["default_rates"]
    with pytest.raises(InstanceError, match="rates"):
        instance_from_document(doc)


def test_missing_exec_time_error():
    doc = minimal_doc()
    doc["exec_times"] = []
    with pytest.raises(InstanceError, match="execution time"):
        instance_from_document(doc)


def test_rates_record_overrides_default():
    doc = minimal_doc()
    doc["providers"] = ["p1", "p2"]
    doc["machines"].append({"provider": "p2", "machine": "m1", "capacity": 5})
    doc["exec_times"].append(
        {"circuit": "c1", "provider": "p2", "machine": "m1", "seconds": 0.004}
    )
    doc["rates"] = [
        {"circuit": "c1", "provider": "p2", "reserve": 0.5, "utilize": 0.25,
         "on_demand": 1, "penalty": 0}
    ]
    inst = instance_from_document(doc)
    assert inst.rate("c1", "p1").reserve_per_qubit == 1_000_000
    assert inst.rate("c1", "p2").reserve_per_qubit == 500_000


def test_invalid_json_reports_parse_error():
    with pytest.raises(InstanceError, match="invalid JSON"):
        parse_instance("{not json")


def test_synthetic_exec_times_block():
    doc = minimal_doc()
    doc["circuits"][0]["num_qubits"] = 4
    doc["circuits"][0]["encoded_value"] = 5
    doc["exec_times"] = {"synthetic": {"base": 0.001, "slope": 0.0001}}
    inst = instance_from_document(doc)
    assert inst.exec_time("c1", "p1", "m1") == synth_exec_time(4, 5, 1000, 100)


def test_synthetic_exec_times_needs_metadata():
    doc = minimal_doc()
    doc["exec_times"] = {"synthetic": {"base": 0.001, "slope": 0.0001}}
    with pytest.raises(InstanceError, match="num_qubits"):
        instance_from_document(doc)


# --- validate --------------------------------------------------------------


def test_validate_reference_is_clean(reference_instance):
    assert validate(reference_instance) == []


def test_validate_pricing_warning():
    rates = dataclasses.replace(REF_RATES, utilize_per_qubit=8_000_000)
    diags = validate(make_instance(rates=rates))
    assert [d.severity for d in diags] == ["warning"]
    assert "c1,p1" in diags[0].location


def test_validate_reserve_not_below_on_demand_warns():
    rates = dataclasses.replace(REF_RATES, reserve_per_qubit=7_000_000)
    diags = validate(make_instance(rates=rates))
    assert [d.severity for d in diags] == ["warning"]


def test_validate_negative_capacity_error():
    inst = make_instance(capacity=-1)
    diags = validate(inst)
    assert [d.severity for d in diags] == ["error"]
    assert "capacity" in diags[0].message


def test_validate_missing_exec_time():
    inst = make_instance()
    broken = type(inst.exec_times)({})
    inst = dataclasses.replace(inst, exec_times=broken)
    diags = validate(inst)
    assert any("missing execution time" in d.message for d in diags)


# --- exec-time CSV ---------------------------------------------------------


def test_load_exec_times_single_row():
    table = load_exec_times(
        io.StringIO("circuit_id,provider_id,machine_id,seconds\nc1,p1,m1,0.004\n")
    )
    assert table.entries == {("c1", "p1", "m1"): 4000}


def test_load_exec_times_duplicate_triple():
    text = (
        "circuit_id,provider_id,machine_id,seconds\n"
        "c1,p1,m1,0.004\nc1,p1,m1,0.005\n"
    )
    with pytest.raises(InstanceError, match="duplicate"):
        load_exec_times(io.StringIO(text))


def test_load_exec_times_negative():
    text = "circuit_id,provider_id,machine_id,seconds\nc1,p1,m1,-0.004\n"
    with pytest.raises(InstanceError, match="negative"):
        load_exec_times(io.StringIO(text))


def test_load_exec_times_malformed_row():
    text = "circuit_id,provider_id,machine_id,seconds\nc1,p1\n"
    with pytest.raises(InstanceError, match="malformed"):
        load_exec_times(io.StringIO(text))


def test_load_exec_times_empty_is_empty_table():
    table = load_exec_times(io.StringIO("circuit_id,provider_id,machine_id,seconds\n"))
    assert table.entries == {}


def test_load_exec_times_bad_header():
    with pytest.raises(InstanceError, match="header"):
        load_exec_times(io.StringIO("a,b,c,d\n"))


# --- synthetic timing ------------------------------------------------------


def test_synth_zero_popcount_gives_base():
    assert synth_exec_time(10, 0, 1000, 7) == 1000


def test_synth_all_ones_is_maximum():
    times = [synth_exec_time(10, v, 1000, 7) for v in range(1024)]
    assert times[1023] == max(times)


def test_synth_popcount_ordering():
    assert synth_exec_time(10, 512, 1000, 7) < synth_exec_time(10, 768, 1000, 7)


def test_synth_out_of_range():
    with pytest.raises(InstanceError, match="out of range"):
        synth_exec_time(4, 16, 1000, 7)


def test_synth_monotone_everywhere():
    # For every width up to 16: time depends only on the ones count and
    # strictly increases with it; widening never shortens a circuit.
    base, slope = 100, 3
    for n in range(1, 17):
        by_popcount: dict[int, set[int]] = {}
        for v in range(2**n):
            by_popcount.setdefault(popcount(v), set()).add(
                synth_exec_time(n, v, base, slope)
            )
        classes = [by_popcount[pc] for pc in sorted(by_popcount)]
        assert all(len(c) == 1 for c in classes)
        values = [next(iter(c)) for c in classes]
        assert values == sorted(set(values))
        if n < 16:
            for v in (0, 1, 2**n - 1):
                assert synth_exec_time(n, v, base, slope) <= synth_exec_time(
                    n + 1, v, base, slope
                )


# --- serialization round trip ---------------------------------------------


def test_serialize_round_trip(reference_instance):
    doc = serialize_instance(reference_instance)
    again = instance_from_document(json.loads(json.dumps(doc)))
    assert again == reference_instance


def test_serialize_round_trip_with_probs():
    inst = make_instance(
        demand=(1, 2, 3),
        wait=(1000, 2000),
        demand_probs=(0.2, 0.3, 0.5),
        wait_probs=(0.25, 0.75),
    )
    doc = serialize_instance(inst)
    assert instance_from_document(json.loads(json.dumps(doc))) == inst


def test_validate_after_round_trip_is_clean(reference_instance):
    doc = serialize_instance(reference_instance)
    assert validate(instance_from_document(doc)) == []


def test_load_instance_from_path(data_dir):
    inst = load_instance(data_dir / "reference.json")
    assert len(inst.triples()) == 6
