"""Closed-form second stage: utilization, on-demand top-up, over-waiting.

Once a scenario is observed, the cheapest feasible recourse for one
(circuit, provider, machine) triple has a closed form. Utilized qubits are
capped by the reservation and by demand; whatever demand remains is bought
on demand; over-waiting is the positive part of execution time minus the
scenario's wait time and does not depend on any qubit decision.

Tie conventions (they keep outputs unique and comparable to brute force):
utilization wins when its rate equals the on-demand rate, utilization is
filled to min(reserved, demand) when it is free, and the over-wait is its
smallest feasible value even when the penalty rate is zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .instance import CostRates
from .scenarios import Scenario
from .units import MICRO


@dataclass(frozen=True)
class RecourseDecision:
    utilized: int
    on_demand: int
    over_wait: int  # microseconds
    cost: Fraction  # micro-dollars, exact


def penalty_time(exec_time: int, wait_time: int) -> int:
    """Over-waiting in microseconds: max(0, exec_time - wait_time)."""
    if exec_time < 0 or wait_time < 0:
        raise ValueError("times must be non-negative")
    return max(0, exec_time - wait_time)


def penalty_cost(penalty_per_second: int, over_wait: int) -> Fraction:
    """Exact penalty in micro-dollars for ``over_wait`` microseconds."""
    return Fraction(penalty_per_second * over_wait, MICRO)


def recourse_cost(rates: CostRates, utilized: int, on_demand: int, over_wait: int) -> Fraction:
    return (
        Fraction(
            rates.utilize_per_qubit * utilized + rates.on_demand_per_qubit * on_demand
        )
        + penalty_cost(rates.penalty_per_second, over_wait)
    )


def optimal_recourse(
    reserved: int, scenario: Scenario, rates: CostRates, exec_time: int
) -> RecourseDecision:
    """Cheapest feasible second-stage decision for one scenario.

    Demand is met exactly (utilized + on_demand equals the scenario
    demand): over-provisioning can never reduce cost at non-negative
    rates, and the convention makes the minimizer unique.
    """
    if reserved < 0:
        raise ValueError(f"reserved must be non-negative, got {reserved}")
    beta = scenario.demand_qubits
    if rates.utilize_per_qubit <= rates.on_demand_per_qubit:
        utilized = min(reserved, beta)
    else:
        utilized = 0
    on_demand = beta - utilized
    over_wait = penalty_time(exec_time, scenario.wait_time)
    return RecourseDecision(
        utilized=utilized,
        on_demand=on_demand,
        over_wait=over_wait,
        cost=recourse_cost(rates, utilized, on_demand, over_wait),
    )
