from __future__ import annotations

import random
from fractions import Fraction

import pytest

from helpers import make_instance, make_rates, random_instance
from qres.extform import (
    LpParseError,
    build_extensive_form,
    export_lp,
    parse_lp,
    render_lp,
    solve_enumerative,
)
from qres.solver import GuardError, solve_instance
from qres.units import MICRO


def single_triple_instance():
    return make_instance(demand=(5,), wait=(3000,), exec_time=5000)


# --- structure ---------------------------------------------------------------


def test_counts_single_scenario():
    form = build_extensive_form(single_triple_instance())
    assert len(form.variables) == 4
    assert len(form.constraints) == 3
    names = [v.name for v in form.variables]
    assert names == ["xr_c0_p0_m0", "xu_c0_p0_m0_s0", "xo_c0_p0_m0_s0", "y_c0_p0_m0_s0"]


def test_counts_reference(reference_instance):
    form = build_extensive_form(reference_instance)
    assert len(form.variables) == 6 * (1 + 3 * 117)  # 2112
    assert len(form.constraints) == 6 * 3 * 117


def test_counts_random_instances():
    rng = random.Random(3100)
    for _ in range(10):
        inst = random_instance(rng)
        form = build_extensive_form(inst)
        triples = len(inst.triples())
        scenarios = len(inst.demand_sets["c1"]) * len(inst.wait_sets["c1"])
        assert len(form.variables) == triples * (1 + 3 * scenarios)
        assert len(form.constraints) == triples * 3 * scenarios


def test_objective_coefficients(reference_instance):
    form = build_extensive_form(reference_instance)
    by_name = {form.variables[i].name: coef for i, coef in form.objective}
    assert by_name["xr_c0_p0_m0"] == Fraction(168, 100)
    assert float(by_name["xo_c0_p0_m0_s0"]) == pytest.approx(7 / 117, rel=1e-12)
    assert float(by_name["y_c0_p0_m0_s0"]) == pytest.approx(10 / 117, rel=1e-12)


def test_bounds_and_kinds():
    form = build_extensive_form(single_triple_instance())
    xr, xu, xo, y = form.variables
    assert (xr.kind, xr.lower, xr.upper) == ("integer", 0, Fraction(30))
    assert (xu.kind, xu.upper) == ("integer", None)
    assert (xo.kind, xo.upper) == ("integer", None)
    assert (y.kind, y.upper) == ("continuous", None)


def test_no_dangling_references(reference_instance):
    form = build_extensive_form(reference_instance)
    n = len(form.variables)
    assert all(0 <= i < n for row in form.constraints for i, _ in row.terms)
    assert all(0 <= i < n for i, _ in form.objective)
    assert len({v.name for v in form.variables}) == n


def test_build_is_deterministic(reference_instance):
    assert build_extensive_form(reference_instance) == build_extensive_form(
        reference_instance
    )


# --- LP text -----------------------------------------------------------------


def test_golden_lp_file(data_dir):
    form = build_extensive_form(single_triple_instance())
    golden = (data_dir / "golden_single.lp").read_bytes()
    assert render_lp(form).encode("utf-8") == golden


def test_export_returns_byte_count(tmp_path):
    form = build_extensive_form(single_triple_instance())
    path = tmp_path / "model.lp"
    written = export_lp(form, path)
    assert written == len(path.read_bytes())


def test_round_trip_identity(reference_instance):
    form = build_extensive_form(reference_instance)
    assert parse_lp(render_lp(form)) == form


def test_round_trip_random_forms():
    rng = random.Random(3101)
    for _ in range(10):
        form = build_extensive_form(random_instance(rng))
        assert parse_lp(render_lp(form)) == form


@pytest.mark.parametrize(
    "text, match",
    [
        ("Minimize\n obj: 1 x\nSubject To\n", "missing End"),
        ("junk\n", "before Minimize"),
        ("Minimize\n obj: 1\nEnd\n", "truncated term"),
        (
            "Minimize\n obj: 1 x\nSubject To\n r1: 1 z <= 0\nEnd\n",
            "unknown z",
        ),
        ("Minimize\n obj: 1 x\nBounds\n 0 <= w <= 1\nEnd\n", "unknown"),
    ],
)
def test_parse_errors(text, match):
    with pytest.raises(LpParseError, match=match):
        parse_lp(text)


def test_parse_reports_line_numbers():
    with pytest.raises(LpParseError, match="line 4"):
        parse_lp("Minimize\n obj: 1 x\nSubject To\n broken line here\nEnd\n")


# --- enumeration solver -------------------------------------------------------


def test_enumeration_matches_solver_cross_module():
    inst = make_instance(demand=(1, 2, 3, 4), wait=(3000, 6000), capacity=5)
    objective, assignment = solve_enumerative(build_extensive_form(inst))
    sol = solve_instance(inst)
    assert objective == sol.expected_total / MICRO
    assert assignment["xr_c0_p0_m0"] == sol.reservations[("c1", "p1", "m1")]


def test_enumeration_singleton_capacity_zero():
    inst = make_instance(demand=(5,), wait=(3000,), capacity=0, exec_time=5000)
    objective, assignment = solve_enumerative(build_extensive_form(inst))
    # all on demand plus the unavoidable 2 ms over-wait at 10 $/s
    assert objective == Fraction(5 * 7) + Fraction(10 * 2, 1000)
    assert assignment["xr_c0_p0_m0"] == 0
    assert assignment["xo_c0_p0_m0_s0"] == 5
    assert assignment["y_c0_p0_m0_s0"] == Fraction(2, 1000)


def test_enumeration_zero_rates():
    inst = make_instance(rates=make_rates(), demand=(3,), wait=(1000,), capacity=2)
    objective, _ = solve_enumerative(build_extensive_form(inst))
    assert objective == 0


def test_enumeration_guard():
    inst = make_instance(capacity=50)
    with pytest.raises(GuardError):
        solve_enumerative(build_extensive_form(inst), guard=10)


def test_enumeration_random_instances_match_solver():
    rng = random.Random(3102)
    for _ in range(5):
        inst = random_instance(rng, max_capacity=4, max_demand=4)
        form = build_extensive_form(inst)
        objective, _ = solve_enumerative(form)
        assert objective == solve_instance(inst).expected_total / MICRO
