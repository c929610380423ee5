"""Exact two-stage solver and its verification oracles.

No constraint couples two (circuit, provider, machine) triples: every
machine must cover the circuit's full demand in every scenario, and each
reservation is paid independently. The problem therefore decomposes into
one newsvendor-style subproblem per triple, solved exactly by marginal
analysis: reserve the x-th qubit while the expected on-demand saving
(on_demand - utilize) * Pr(demand >= x) strictly exceeds the reservation
rate. The over-wait penalty never depends on any decision, so it is
excluded from the argmin and added back to every reported cost.

All expectations are exact rationals (see :mod:`qres.units`), so the
solver, the brute-force scan, and the joint enumeration oracle can be
compared with ``==``.
"""

from __future__ import annotations

import bisect
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, NamedTuple

from .instance import CostRates, Instance
from .recourse import RecourseDecision, optimal_recourse, penalty_cost
from .scenarios import ScenarioSpace, build_space, space_for_circuit

BRUTE_FORCE_CAPACITY_GUARD = 10**4
JOINT_ENUMERATION_GUARD = 10**6


class ModelError(ValueError):
    """A reservation vector does not fit the instance."""


class CapacityError(ModelError):
    """A reservation exceeds its machine's qubit capacity."""


class GuardError(ModelError):
    """An enumeration oracle was asked for more work than its guard allows."""


class TripleKey(NamedTuple):
    circuit_id: str
    provider_id: str
    machine_id: str


@dataclass(frozen=True)
class Solution:
    """Reservation levels plus the exact expected cost decomposition.

    ``expected_second_stage`` is the qubit part (utilization + on-demand)
    only; the over-wait penalty is reported separately and
    ``expected_total`` is the exact sum of the three parts.
    """

    reservations: dict[TripleKey, int]
    expected_first_stage: Fraction
    expected_second_stage: Fraction
    expected_penalty: Fraction
    expected_total: Fraction
    per_scenario: dict[tuple[TripleKey, int], RecourseDecision] | None = None


@dataclass(frozen=True)
class TripleCost:
    key: TripleKey
    reserved: int
    first_stage: Fraction
    second_stage: Fraction
    penalty: Fraction

    @property
    def total(self) -> Fraction:
        return self.first_stage + self.second_stage + self.penalty


def _exact_probs(space: ScenarioSpace) -> list[Fraction]:
    return list(space.exact_probabilities)


def _recourse_expectation(
    space: ScenarioSpace,
    probs: list[Fraction],
    rates: CostRates,
    exec_time: int,
    reserved: int,
    collect: dict[int, RecourseDecision] | None = None,
) -> tuple[Fraction, Fraction]:
    """Scenario-by-scenario expectation of the optimal recourse.

    Returns (qubit cost, penalty cost) in micro-dollars. This is the plain
    evaluation path used by ``expected_cost`` and the brute-force oracle.
    """
    second = Fraction(0)
    penalty = Fraction(0)
    for scenario, fp in zip(space.scenarios, probs):
        decision = optimal_recourse(reserved, scenario, rates, exec_time)
        second += fp * (
            rates.utilize_per_qubit * decision.utilized
            + rates.on_demand_per_qubit * decision.on_demand
        )
        penalty += fp * penalty_cost(rates.penalty_per_second, decision.over_wait)
        if collect is not None:
            collect[scenario.index] = decision
    return second, penalty


def _grouped_expectation(
    space: ScenarioSpace,
    probs: list[Fraction],
    rates: CostRates,
    exec_time: int,
    reserved: int,
) -> tuple[Fraction, Fraction]:
    """Closed-form expectation, grouped by demand and by wait value.

    Exactly equal to :func:`_recourse_expectation` (rational addition is
    order-independent) but independent of the recourse code path; the
    solver uses this one so the acceptance suite compares two routes.
    """
    demand_mass: dict[int, Fraction] = {}
    wait_mass: dict[int, Fraction] = {}
    for scenario, fp in zip(space.scenarios, probs):
        key = scenario.demand_qubits
        demand_mass[key] = demand_mass.get(key, Fraction(0)) + fp
        wkey = scenario.wait_time
        wait_mass[wkey] = wait_mass.get(wkey, Fraction(0)) + fp

    utilize = rates.utilize_per_qubit
    on_demand = rates.on_demand_per_qubit
    second = Fraction(0)
    for beta, mass in demand_mass.items():
        if utilize <= on_demand:
            cost = utilize * min(reserved, beta) + on_demand * max(0, beta - reserved)
        else:
            cost = on_demand * beta
        second += mass * cost

    penalty = Fraction(0)
    for wait, mass in wait_mass.items():
        penalty += mass * penalty_cost(
            rates.penalty_per_second, max(0, exec_time - wait)
        )
    return second, penalty


def per_triple_costs(
    instance: Instance,
    reservations: Mapping[tuple[str, str, str], int],
    *,
    collect_scenarios: dict[tuple[TripleKey, int], RecourseDecision] | None = None,
) -> list[TripleCost]:
    """Exact cost decomposition of a reservation vector, one row per triple.

    The vector must assign a level to every triple of the instance and
    respect each machine's capacity.
    """
    triples = [TripleKey(*key) for key in instance.triples()]
    missing = [key for key in triples if key not in reservations]
    if missing:
        raise ModelError(f"no reservation for triples: {missing}")
    extra = set(reservations) - set(triples)
    if extra:
        raise ModelError(f"reservations for unknown triples: {sorted(extra)}")

    spaces: dict[str, ScenarioSpace] = {}
    probs: dict[str, list[Fraction]] = {}
    rows = []
    for key in triples:
        reserved = reservations[key]
        capacity = instance.machine(key.provider_id, key.machine_id).capacity_qubits
        if reserved < 0 or reserved > capacity:
            raise CapacityError(
                f"reservation {reserved} for {key} outside [0, {capacity}]"
            )
        if key.circuit_id not in spaces:
            spaces[key.circuit_id] = space_for_circuit(instance, key.circuit_id)
            probs[key.circuit_id] = _exact_probs(spaces[key.circuit_id])
        rates = instance.rate(key.circuit_id, key.provider_id)
        exec_time = instance.exec_time(*key)
        collector: dict[int, RecourseDecision] | None = None
        if collect_scenarios is not None:
            collector = {}
        second, penalty = _recourse_expectation(
            spaces[key.circuit_id],
            probs[key.circuit_id],
            rates,
            exec_time,
            reserved,
            collect=collector,
        )
        if collect_scenarios is not None and collector is not None:
            for index, decision in collector.items():
                collect_scenarios[(key, index)] = decision
        rows.append(
            TripleCost(
                key=key,
                reserved=reserved,
                first_stage=Fraction(rates.reserve_per_qubit * reserved),
                second_stage=second,
                penalty=penalty,
            )
        )
    return rows


def expected_cost(
    instance: Instance,
    reservations: Mapping[tuple[str, str, str], int],
    *,
    keep_per_scenario: bool = False,
) -> Solution:
    """Exact expected cost of a given reservation vector."""
    per_scenario: dict[tuple[TripleKey, int], RecourseDecision] | None = None
    if keep_per_scenario:
        per_scenario = {}
    rows = per_triple_costs(instance, reservations, collect_scenarios=per_scenario)
    first = sum((row.first_stage for row in rows), Fraction(0))
    second = sum((row.second_stage for row in rows), Fraction(0))
    penalty = sum((row.penalty for row in rows), Fraction(0))
    return Solution(
        reservations={row.key: row.reserved for row in rows},
        expected_first_stage=first,
        expected_second_stage=second,
        expected_penalty=penalty,
        expected_total=first + second + penalty,
        per_scenario=per_scenario,
    )


def _optimal_reservation(
    space: ScenarioSpace, probs: list[Fraction], rates: CostRates, capacity: int
) -> int:
    """Marginal analysis: largest level whose last unit strictly pays off.

    The x-th reserved unit saves (on_demand - utilize) times the demand
    mass at or above x and costs the reservation rate; the survival mass
    is non-increasing, so the scan stops at the first unit that does not
    strictly improve. Resolving the zero-benefit tie downward matches the
    brute-force scan's smallest-argmin convention.
    """
    margin = rates.on_demand_per_qubit - rates.utilize_per_qubit
    if margin <= 0 or capacity <= 0:
        return 0
    demand_mass: dict[int, Fraction] = {}
    for scenario, fp in zip(space.scenarios, probs):
        key = scenario.demand_qubits
        demand_mass[key] = demand_mass.get(key, Fraction(0)) + fp
    levels = sorted(demand_mass)
    suffix = [Fraction(0)] * (len(levels) + 1)
    for i in range(len(levels) - 1, -1, -1):
        suffix[i] = suffix[i + 1] + demand_mass[levels[i]]

    best = 0
    for x in range(1, capacity + 1):
        survival = suffix[bisect.bisect_left(levels, x)]
        if margin * survival > rates.reserve_per_qubit:
            best = x
        else:
            break
    return best


def solve_triple(
    rates: CostRates,
    demand_set,
    wait_set,
    exec_time: int,
    capacity: int,
    demand_probs=None,
    wait_probs=None,
) -> tuple[int, Fraction]:
    """Optimal reservation level and exact expected cost for one triple."""
    space = build_space("triple", demand_set, wait_set, demand_probs, wait_probs)
    return _solve_triple_in_space(space, rates, exec_time, capacity)


def _solve_triple_in_space(
    space: ScenarioSpace, rates: CostRates, exec_time: int, capacity: int
) -> tuple[int, Fraction]:
    if capacity < 0:
        raise CapacityError(f"capacity must be non-negative, got {capacity}")
    probs = _exact_probs(space)
    best = _optimal_reservation(space, probs, rates, capacity)
    second, penalty = _grouped_expectation(space, probs, rates, exec_time, best)
    total = Fraction(rates.reserve_per_qubit * best) + second + penalty
    return best, total


def brute_force_triple(
    rates: CostRates,
    demand_set,
    wait_set,
    exec_time: int,
    capacity: int,
    demand_probs=None,
    wait_probs=None,
) -> tuple[int, Fraction]:
    """Oracle for :func:`solve_triple`: scan every level in [0, capacity].

    Evaluates the full expectation through :func:`optimal_recourse` at
    every level and keeps the smallest argmin, independently of the
    marginal analysis.
    """
    if capacity > BRUTE_FORCE_CAPACITY_GUARD:
        raise GuardError(
            f"capacity {capacity} exceeds guard {BRUTE_FORCE_CAPACITY_GUARD}"
        )
    if capacity < 0:
        raise CapacityError(f"capacity must be non-negative, got {capacity}")
    space = build_space("triple", demand_set, wait_set, demand_probs, wait_probs)
    probs = _exact_probs(space)
    best_x = 0
    best_cost: Fraction | None = None
    for x in range(capacity + 1):
        second, penalty = _recourse_expectation(space, probs, rates, exec_time, x)
        total = Fraction(rates.reserve_per_qubit * x) + second + penalty
        if best_cost is None or total < best_cost:
            best_x, best_cost = x, total
    assert best_cost is not None
    return best_x, best_cost


def solve_instance(instance: Instance, *, max_workers: int = 1) -> Solution:
    """Globally optimal reservations: one independent newsvendor per triple."""
    triples = [TripleKey(*key) for key in instance.triples()]
    spaces = {
        cid: space_for_circuit(instance, cid)
        for cid in dict.fromkeys(key.circuit_id for key in triples)
    }

    def solve_one(key: TripleKey) -> int:
        rates = instance.rate(key.circuit_id, key.provider_id)
        capacity = instance.machine(key.provider_id, key.machine_id).capacity_qubits
        exec_time = instance.exec_time(*key)
        level, _ = _solve_triple_in_space(
            spaces[key.circuit_id], rates, exec_time, capacity
        )
        return level

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            levels = list(pool.map(solve_one, triples))
    else:
        levels = [solve_one(key) for key in triples]
    return expected_cost(instance, dict(zip(triples, levels)))


def joint_enumeration_oracle(
    instance: Instance, guard: int = JOINT_ENUMERATION_GUARD
) -> Solution:
    """Oracle for :func:`solve_instance`: enumerate whole reservation vectors.

    Checks the separability argument by brute force; ties break to the
    lexicographically smallest vector (enumeration order).
    """
    triples = [TripleKey(*key) for key in instance.triples()]
    ranges = []
    total_vectors = 1
    for key in triples:
        capacity = instance.machine(key.provider_id, key.machine_id).capacity_qubits
        ranges.append(range(capacity + 1))
        total_vectors *= capacity + 1
        if total_vectors > guard:
            raise GuardError(
                f"joint enumeration needs {total_vectors} > {guard} vectors"
            )

    best_vector: tuple[int, ...] | None = None
    best_cost: Fraction | None = None
    for vector in itertools.product(*ranges):
        cost = expected_cost(instance, dict(zip(triples, vector))).expected_total
        if best_cost is None or cost < best_cost:
            best_vector, best_cost = vector, cost
    assert best_vector is not None
    return expected_cost(instance, dict(zip(triples, best_vector)))
