"""Shared builders and independent oracles for the test suite."""

from __future__ import annotations

import random
from fractions import Fraction

from qres.instance import CostRates, Circuit, ExecTimeTable, Instance, Machine
from qres.recourse import penalty_time
from qres.units import MICRO, parse_money

REF_RATES = CostRates(
    reserve_per_qubit=parse_money("1.68"),
    utilize_per_qubit=parse_money("0.1"),
    on_demand_per_qubit=parse_money(7),
    penalty_per_second=parse_money(10),
)


def usd(value) -> int:
    return parse_money(value)


def make_rates(reserve=0, utilize=0, on_demand=0, penalty=0) -> CostRates:
    """Rates from micro-dollar integers."""
    return CostRates(reserve, utilize, on_demand, penalty)


def make_instance(
    demand=(5,),
    wait=(3000,),
    *,
    rates: CostRates = REF_RATES,
    capacity: int = 30,
    exec_time: int = 5000,
    providers: int = 1,
    machines_per_provider: int = 1,
    demand_probs=None,
    wait_probs=None,
) -> Instance:
    """One-circuit instance with identical rates and timing on every triple."""
    provider_ids = tuple(f"p{i + 1}" for i in range(providers))
    machines = tuple(
        Machine(provider_id=p, machine_id=f"m{j + 1}", capacity_qubits=capacity)
        for p in provider_ids
        for j in range(machines_per_provider)
    )
    exec_times = ExecTimeTable(
        {("c1", m.provider_id, m.machine_id): exec_time for m in machines}
    )
    return Instance(
        circuits=(Circuit(circuit_id="c1"),),
        providers=provider_ids,
        machines=machines,
        rates={("c1", p): rates for p in provider_ids},
        exec_times=exec_times,
        demand_sets={"c1": tuple(demand)},
        wait_sets={"c1": tuple(wait)},
        demand_probs={"c1": tuple(demand_probs)} if demand_probs else {},
        wait_probs={"c1": tuple(wait_probs)} if wait_probs else {},
    )


def random_probs(rng: random.Random, n: int) -> tuple[float, ...]:
    weights = [rng.uniform(0.05, 1.0) for _ in range(n)]
    total = sum(weights)
    return tuple(w / total for w in weights)


def random_rates(rng: random.Random, max_dollars: int = 10) -> CostRates:
    """All four rates drawn from [0, max_dollars] on the micro grid."""
    hi = max_dollars * MICRO
    return CostRates(
        reserve_per_qubit=rng.randint(0, hi),
        utilize_per_qubit=rng.randint(0, hi),
        on_demand_per_qubit=rng.randint(0, hi),
        penalty_per_second=rng.randint(0, hi),
    )


def random_marginals(
    rng: random.Random, max_demand: int = 8, max_outcomes: int = 8, max_waits: int = 4
):
    n_demand = rng.randint(1, max_outcomes)
    demand = sorted(rng.sample(range(0, max_demand + 1), min(n_demand, max_demand + 1)))
    n_wait = rng.randint(1, max_waits)
    wait = sorted(rng.sample(range(0, 10001, 500), n_wait))
    demand_probs = random_probs(rng, len(demand)) if rng.random() < 0.5 else None
    wait_probs = random_probs(rng, len(wait)) if rng.random() < 0.5 else None
    return demand, wait, demand_probs, wait_probs


def random_instance(
    rng: random.Random,
    max_triples: int = 2,
    max_capacity: int = 8,
    max_demand: int = 5,
    max_outcomes: int = 4,
    max_waits: int = 3,
) -> Instance:
    """Small instance with one circuit and per-provider random rates."""
    n = rng.randint(1, max_triples)
    provider_ids = tuple(f"p{i + 1}" for i in range(n))
    machines = tuple(
        Machine(provider_id=p, machine_id="m1", capacity_qubits=rng.randint(0, max_capacity))
        for p in provider_ids
    )
    demand, wait, demand_probs, wait_probs = random_marginals(
        rng, max_demand, max_outcomes, max_waits
    )
    exec_times = ExecTimeTable(
        {("c1", p, "m1"): rng.randint(0, 12000) for p in provider_ids}
    )
    return Instance(
        circuits=(Circuit(circuit_id="c1"),),
        providers=provider_ids,
        machines=machines,
        rates={("c1", p): random_rates(rng) for p in provider_ids},
        exec_times=exec_times,
        demand_sets={"c1": tuple(demand)},
        wait_sets={"c1": tuple(wait)},
        demand_probs={"c1": demand_probs} if demand_probs else {},
        wait_probs={"c1": wait_probs} if wait_probs else {},
    )


def enumerate_recourse(
    reserved: int, beta: int, rates: CostRates, exec_time: int, wait_time: int
) -> tuple[int, int, Fraction]:
    """Independent oracle: exhaust integer (utilized, on_demand) pairs.

    The over-wait is decision-independent, so its (constant) cost is added
    after the scan; its independence is asserted separately.
    """
    over = penalty_time(exec_time, wait_time)
    pen = Fraction(rates.penalty_per_second * over, MICRO)
    best_pair: tuple[int, int] | None = None
    best_qubit_cost: int | None = None
    for used in range(reserved + 1):
        for extra in range(beta + 1):
            if used + extra < beta:
                continue
            cost = rates.utilize_per_qubit * used + rates.on_demand_per_qubit * extra
            if best_qubit_cost is None or cost < best_qubit_cost:
                best_pair, best_qubit_cost = (used, extra), cost
    assert best_pair is not None and best_qubit_cost is not None
    return best_pair[0], best_pair[1], Fraction(best_qubit_cost) + pen
