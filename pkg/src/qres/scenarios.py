"""Finite scenario spaces over (demand, wait-time) outcomes.

A circuit's uncertainty is the Cartesian product of its finite demand set
and finite wait-time set. Scenario probabilities are the products of the
marginal probabilities (the marginals are treated as independent; a joint
table can be had by building a space per joint cell). Ordering is
demand-major lexicographic and deterministic, so downstream CSV output and
golden tests are reproducible.

Every probability is kept twice: as a float (the public value) and as the
exact rational behind it, which the cost machinery sums. Uniform marginals
are dyadic rationals within one part in 2^53 of 1/n chosen so the exact
values sum to exactly 1; the exact joint probabilities then also sum to
exactly 1, which is what makes downstream equality tests exact rather than
approximate.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable

from .instance import PROB_TOLERANCE, Instance

_DYADIC_ONE = 1 << 53


class ScenarioError(ValueError):
    """Invalid inputs for building a scenario space."""


@dataclass(frozen=True)
class Scenario:
    demand_qubits: int
    wait_time: int  # microseconds
    index: int


@dataclass(frozen=True)
class ScenarioSpace:
    circuit_id: str
    scenarios: tuple[Scenario, ...]
    probabilities: tuple[float, ...]
    exact_probabilities: tuple[Fraction, ...]

    def __len__(self) -> int:
        return len(self.scenarios)

    def items(self) -> Iterable[tuple[Scenario, float]]:
        return zip(self.scenarios, self.probabilities)


def _uniform_exact(n: int) -> tuple[Fraction, ...]:
    base, extra = divmod(_DYADIC_ONE, n)
    return tuple(
        Fraction(base + (1 if i < extra else 0), _DYADIC_ONE) for i in range(n)
    )


def _checked_probs(
    probs: tuple[float, ...] | None, n: int, what: str
) -> tuple[Fraction, ...]:
    if probs is None:
        return _uniform_exact(n)
    probs = tuple(float(p) for p in probs)
    if len(probs) != n:
        raise ScenarioError(f"{what}: {len(probs)} probabilities for {n} outcomes")
    if any(p < 0 for p in probs):
        raise ScenarioError(f"{what}: negative probability")
    total = sum(probs)
    if abs(total - 1.0) > PROB_TOLERANCE:
        raise ScenarioError(f"{what}: probabilities sum to {total!r}, not 1")
    return tuple(Fraction(p) for p in probs)


def build_space(
    circuit_id: str,
    demand_set: Iterable[int],
    wait_set: Iterable[int],
    demand_probs: Iterable[float] | None = None,
    wait_probs: Iterable[float] | None = None,
) -> ScenarioSpace:
    """Product space of demand x wait outcomes with product probabilities."""
    demands = tuple(demand_set)
    waits = tuple(wait_set)
    if not demands:
        raise ScenarioError(f"{circuit_id}: empty demand set")
    if not waits:
        raise ScenarioError(f"{circuit_id}: empty wait set")
    d_probs = _checked_probs(
        tuple(demand_probs) if demand_probs is not None else None,
        len(demands),
        f"{circuit_id} demand_probs",
    )
    w_probs = _checked_probs(
        tuple(wait_probs) if wait_probs is not None else None,
        len(waits),
        f"{circuit_id} wait_probs",
    )
    scenarios = []
    exact = []
    index = 0
    for beta, pd in zip(demands, d_probs):
        for alpha, pw in zip(waits, w_probs):
            scenarios.append(Scenario(demand_qubits=beta, wait_time=alpha, index=index))
            exact.append(pd * pw)
            index += 1
    return ScenarioSpace(
        circuit_id=circuit_id,
        scenarios=tuple(scenarios),
        probabilities=tuple(float(p) for p in exact),
        exact_probabilities=tuple(exact),
    )


def space_for_circuit(instance: Instance, circuit_id: str) -> ScenarioSpace:
    """Build the scenario space of one circuit of an instance."""
    if circuit_id not in instance.demand_sets:
        raise ScenarioError(f"unknown circuit '{circuit_id}'")
    return build_space(
        circuit_id,
        instance.demand_sets[circuit_id],
        instance.wait_sets[circuit_id],
        instance.demand_probs.get(circuit_id),
        instance.wait_probs.get(circuit_id),
    )


def expectation(space: ScenarioSpace, f: Callable[[Scenario], float]) -> float:
    """Probability-weighted sum of ``f`` over the space, in index order."""
    return sum(p * f(s) for s, p in space.items())
