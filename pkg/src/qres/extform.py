"""Deterministic-equivalent MILP: explicit matrix, LP text export, enumeration.

The two-stage program is replicated per scenario into one mixed-integer
program: a reservation variable per triple, plus utilization, on-demand,
and over-wait variables per (triple, scenario), with scenario
probabilities multiplied into the objective coefficients. Coefficients
are exact rationals in dollars and seconds, and the LP writer prints them
as exact finite decimals, so export followed by parse reproduces the
form bit for bit.

Capacity is encoded as the reservation variable's upper bound rather
than a constraint row, so each (triple, scenario) contributes exactly
three rows: utilization cap, demand cover, and wait slack.

`solve_enumerative` is a verification path, not a MILP solver: it
enumerates the first-stage integer variables (names without a scenario
suffix), splits the rest into per-scenario blocks via shared rows,
enumerates each block within bounds implied by its rows, and resolves
each continuous variable to the smallest value its rows allow.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import IO

from .instance import Instance, write_atomic
from .scenarios import space_for_circuit
from .solver import GuardError, ModelError
from .units import MICRO, exact_decimal, fraction_from_decimal

ENUMERATION_GUARD = 10**6

_SCENARIO_SUFFIX = re.compile(r"_s\d+$")
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]{0,254}$")

SENSE_LE = "<="
SENSE_GE = ">="


class LpParseError(ValueError):
    """LP text does not conform to the emitted grammar."""


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str  # "integer" | "continuous"
    lower: Fraction
    upper: Fraction | None  # None = unbounded above


@dataclass(frozen=True)
class Row:
    name: str
    terms: tuple[tuple[int, Fraction], ...]  # (variable index, coefficient)
    sense: str
    rhs: Fraction


@dataclass(frozen=True)
class ExtensiveForm:
    variables: tuple[Variable, ...]
    objective: tuple[tuple[int, Fraction], ...]
    constraints: tuple[Row, ...]


def build_extensive_form(instance: Instance) -> ExtensiveForm:
    """Explicit deterministic equivalent of an instance.

    Variable order: triples sorted by id, and per triple the reservation
    variable followed by (utilize, on-demand, over-wait) per scenario.
    Names carry zero-based circuit/provider/machine positions and the
    scenario index; that naming is a frozen contract (golden files and
    the enumeration solver rely on it).
    """
    circuit_pos = {c.circuit_id: i for i, c in enumerate(instance.circuits)}
    provider_pos = {p: i for i, p in enumerate(instance.providers)}
    machine_pos: dict[tuple[str, str], int] = {}
    per_provider: dict[str, int] = {}
    for m in instance.machines:
        machine_pos[(m.provider_id, m.machine_id)] = per_provider.get(m.provider_id, 0)
        per_provider[m.provider_id] = per_provider.get(m.provider_id, 0) + 1

    spaces = {c.circuit_id: space_for_circuit(instance, c.circuit_id) for c in instance.circuits}

    variables: list[Variable] = []
    objective: list[tuple[int, Fraction]] = []
    rows: list[Row] = []

    def add_var(name: str, kind: str, upper: Fraction | None, coef: Fraction) -> int:
        index = len(variables)
        variables.append(Variable(name=name, kind=kind, lower=Fraction(0), upper=upper))
        objective.append((index, coef))
        return index

    for cid, pid, mid in instance.triples():
        tag = f"c{circuit_pos[cid]}_p{provider_pos[pid]}_m{machine_pos[(pid, mid)]}"
        rates = instance.rate(cid, pid)
        capacity = instance.machine(pid, mid).capacity_qubits
        exec_time = instance.exec_time(cid, pid, mid)
        space = spaces[cid]

        xr = add_var(
            f"xr_{tag}",
            "integer",
            Fraction(capacity),
            Fraction(rates.reserve_per_qubit, MICRO),
        )
        for si, (scenario, fp) in enumerate(
            zip(space.scenarios, space.exact_probabilities)
        ):
            xu = add_var(
                f"xu_{tag}_s{si}",
                "integer",
                None,
                fp * Fraction(rates.utilize_per_qubit, MICRO),
            )
            xo = add_var(
                f"xo_{tag}_s{si}",
                "integer",
                None,
                fp * Fraction(rates.on_demand_per_qubit, MICRO),
            )
            y = add_var(
                f"y_{tag}_s{si}",
                "continuous",
                None,
                fp * Fraction(rates.penalty_per_second, MICRO),
            )
            rows.append(
                Row(
                    name=f"use_{tag}_s{si}",
                    terms=((xu, Fraction(1)), (xr, Fraction(-1))),
                    sense=SENSE_LE,
                    rhs=Fraction(0),
                )
            )
            rows.append(
                Row(
                    name=f"dem_{tag}_s{si}",
                    terms=((xu, Fraction(1)), (xo, Fraction(1))),
                    sense=SENSE_GE,
                    rhs=Fraction(scenario.demand_qubits),
                )
            )
            rows.append(
                Row(
                    name=f"wait_{tag}_s{si}",
                    terms=((y, Fraction(-1)),),
                    sense=SENSE_LE,
                    rhs=Fraction(scenario.wait_time - exec_time, MICRO),
                )
            )

    return ExtensiveForm(
        variables=tuple(variables),
        objective=tuple(objective),
        constraints=tuple(rows),
    )


# ---------------------------------------------------------------------------
# LP text format
# ---------------------------------------------------------------------------


def _term(coef: Fraction, name: str, first: bool) -> str:
    mag = exact_decimal(abs(coef))
    if first:
        return f"-{mag} {name}" if coef < 0 else f"{mag} {name}"
    return f"- {mag} {name}" if coef < 0 else f"+ {mag} {name}"


def render_lp(form: ExtensiveForm) -> str:
    """The LP text for a form (LF line endings, ASCII)."""
    for var in form.variables:
        if not _NAME_RE.match(var.name):
            raise ValueError(f"variable name not exportable: {var.name!r}")
    lines = ["Minimize"]
    for i, (index, coef) in enumerate(form.objective):
        term = _term(coef, form.variables[index].name, first=i == 0)
        lines.append(f" obj: {term}" if i == 0 else f" {term}")
    lines.append("Subject To")
    for row in form.constraints:
        if not _NAME_RE.match(row.name):
            raise ValueError(f"constraint name not exportable: {row.name!r}")
        parts = [
            _term(coef, form.variables[index].name, first=i == 0)
            for i, (index, coef) in enumerate(row.terms)
        ]
        lines.append(
            f" {row.name}: {' '.join(parts)} {row.sense} {exact_decimal(row.rhs)}"
        )
    lines.append("Bounds")
    for var in form.variables:
        if var.upper is not None:
            lines.append(
                f" {exact_decimal(var.lower)} <= {var.name} <= {exact_decimal(var.upper)}"
            )
    lines.append("Generals")
    for var in form.variables:
        if var.kind == "integer":
            lines.append(f" {var.name}")
    lines.append("End")
    return "\n".join(lines) + "\n"


def export_lp(form: ExtensiveForm, sink: str | Path | IO[str]) -> int:
    """Write the LP text to a path (atomically) or a text stream.

    Returns the number of bytes written.
    """
    text = render_lp(form)
    if isinstance(sink, (str, Path)):
        return write_atomic(sink, text)
    sink.write(text)
    return len(text.encode("utf-8"))


def _parse_terms(tokens: list[str], line_no: int) -> list[tuple[Fraction, str]]:
    terms: list[tuple[Fraction, str]] = []
    pos = 0
    while pos < len(tokens):
        sign = 1
        tok = tokens[pos]
        if tok in ("+", "-"):
            sign = -1 if tok == "-" else 1
            pos += 1
        if pos + 1 >= len(tokens):
            raise LpParseError(f"line {line_no}: truncated term")
        try:
            coef = sign * fraction_from_decimal(tokens[pos])
        except ValueError as exc:
            raise LpParseError(f"line {line_no}: bad coefficient {tokens[pos]!r}") from exc
        name = tokens[pos + 1]
        if not _NAME_RE.match(name):
            raise LpParseError(f"line {line_no}: bad variable name {name!r}")
        terms.append((coef, name))
        pos += 2
    return terms


def parse_lp(source: str | IO[str]) -> ExtensiveForm:
    """Parse LP text produced by :func:`export_lp` back into a form.

    Only the emitted subset of the format is understood; variable order
    is recovered from the objective, which lists every variable.
    """
    text = source if isinstance(source, str) else source.read()
    section = None
    objective_terms: list[tuple[Fraction, str]] = []
    raw_rows: list[tuple[str, list[tuple[Fraction, str]], str, Fraction]] = []
    bounds: dict[str, tuple[Fraction, Fraction]] = {}
    generals: set[str] = set()
    saw_end = False

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line in ("Minimize", "Subject To", "Bounds", "Generals", "End"):
            section = line
            saw_end = line == "End"
            continue
        if saw_end:
            raise LpParseError(f"line {line_no}: content after End")
        if section == "Minimize":
            if line.startswith("obj:"):
                if objective_terms:
                    raise LpParseError(f"line {line_no}: duplicate objective")
                tokens = line[len("obj:"):].split()
            else:
                tokens = line.split()
                if not objective_terms or tokens[0] not in ("+", "-"):
                    raise LpParseError(f"line {line_no}: expected objective term")
            terms = _parse_terms(tokens, line_no)
            objective_terms.extend(terms)
        elif section == "Subject To":
            if ":" not in line:
                raise LpParseError(f"line {line_no}: constraint without name")
            name, rest = line.split(":", 1)
            name = name.strip()
            if not _NAME_RE.match(name):
                raise LpParseError(f"line {line_no}: bad constraint name {name!r}")
            tokens = rest.split()
            sense_pos = None
            for i, tok in enumerate(tokens):
                if tok in (SENSE_LE, SENSE_GE):
                    sense_pos = i
                    break
            if sense_pos is None or sense_pos != len(tokens) - 2:
                raise LpParseError(f"line {line_no}: expected '<= rhs' or '>= rhs'")
            terms = _parse_terms(tokens[:sense_pos], line_no)
            if not terms:
                raise LpParseError(f"line {line_no}: constraint with no terms")
            try:
                rhs = fraction_from_decimal(tokens[-1])
            except ValueError as exc:
                raise LpParseError(f"line {line_no}: bad rhs {tokens[-1]!r}") from exc
            raw_rows.append((name, terms, tokens[sense_pos], rhs))
        elif section == "Bounds":
            tokens = line.split()
            if len(tokens) != 5 or tokens[1] != SENSE_LE or tokens[3] != SENSE_LE:
                raise LpParseError(f"line {line_no}: expected 'lo <= var <= hi'")
            try:
                lo = fraction_from_decimal(tokens[0])
                hi = fraction_from_decimal(tokens[4])
            except ValueError as exc:
                raise LpParseError(f"line {line_no}: bad bound value") from exc
            bounds[tokens[2]] = (lo, hi)
        elif section == "Generals":
            tokens = line.split()
            if len(tokens) != 1 or not _NAME_RE.match(tokens[0]):
                raise LpParseError(f"line {line_no}: expected a variable name")
            generals.add(tokens[0])
        else:
            raise LpParseError(f"line {line_no}: content before Minimize")

    if not saw_end:
        raise LpParseError("missing End marker")
    if not objective_terms:
        raise LpParseError("missing objective")

    index_of: dict[str, int] = {}
    variables: list[Variable] = []
    objective: list[tuple[int, Fraction]] = []
    for coef, name in objective_terms:
        if name in index_of:
            raise LpParseError(f"variable {name} listed twice in objective")
        index_of[name] = len(variables)
        lower, upper = bounds.get(name, (Fraction(0), None))
        variables.append(
            Variable(
                name=name,
                kind="integer" if name in generals else "continuous",
                lower=lower,
                upper=upper,
            )
        )
        objective.append((index_of[name], coef))

    unknown_generals = generals - set(index_of)
    if unknown_generals:
        raise LpParseError(f"Generals lists unknown variables: {sorted(unknown_generals)}")
    unknown_bounds = set(bounds) - set(index_of)
    if unknown_bounds:
        raise LpParseError(f"Bounds lists unknown variables: {sorted(unknown_bounds)}")

    rows = []
    for name, terms, sense, rhs in raw_rows:
        indexed = []
        for coef, var_name in terms:
            if var_name not in index_of:
                raise LpParseError(f"constraint {name} references unknown {var_name}")
            indexed.append((index_of[var_name], coef))
        rows.append(Row(name=name, terms=tuple(indexed), sense=sense, rhs=rhs))

    return ExtensiveForm(
        variables=tuple(variables),
        objective=tuple(objective),
        constraints=tuple(rows),
    )


# ---------------------------------------------------------------------------
# Enumeration solver
# ---------------------------------------------------------------------------


def _is_second_stage(name: str) -> bool:
    return _SCENARIO_SUFFIX.search(name) is not None


def _blocks(form: ExtensiveForm, second_stage: list[int]) -> list[tuple[list[int], list[Row]]]:
    """Group second-stage variables into components joined by shared rows."""
    parent = {i: i for i in second_stage}

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(a: int, b: int) -> None:
        parent[find(a)] = find(b)

    row_members: list[list[int]] = []
    for row in form.constraints:
        members = [i for i, _ in row.terms if i in parent]
        row_members.append(members)
        for other in members[1:]:
            union(members[0], other)

    groups: dict[int, list[int]] = {}
    for i in second_stage:
        groups.setdefault(find(i), []).append(i)
    block_rows: dict[int, list[Row]] = {root: [] for root in groups}
    for row, members in zip(form.constraints, row_members):
        if members:
            block_rows[find(members[0])].append(row)
    return [(sorted(members), block_rows[root]) for root, members in sorted(groups.items())]


def _int_ceil(value: Fraction) -> int:
    return math.ceil(value)


def _int_floor(value: Fraction) -> int:
    return math.floor(value)


def solve_enumerative(
    form: ExtensiveForm, guard: int = ENUMERATION_GUARD
) -> tuple[Fraction, dict[str, Fraction | int]]:
    """Exhaustive minimum of a form, for cross-checking the solver.

    Enumerates first-stage integer assignments (guarded), then minimizes
    each scenario block independently: block integers are enumerated
    within row-implied bounds, continuous variables take the smallest
    value their rows allow, and every row is re-checked exactly. Raises
    GuardError when the work bound is exceeded or when the form falls
    outside the shapes this enumerator understands.
    """
    n = len(form.variables)
    obj = [Fraction(0)] * n
    for index, coef in form.objective:
        obj[index] += coef

    second = [i for i, v in enumerate(form.variables) if _is_second_stage(v.name)]
    second_set = set(second)
    first = [i for i in range(n) if i not in second_set]

    for i in first:
        var = form.variables[i]
        if var.kind != "integer":
            raise GuardError(f"cannot enumerate continuous first-stage {var.name}")
        if var.upper is None:
            raise GuardError(f"first-stage {var.name} is unbounded")
    for i in second:
        if form.variables[i].kind == "continuous" and obj[i] < 0:
            raise GuardError(
                f"{form.variables[i].name}: negative-cost continuous variable"
            )

    outer = 1
    for i in first:
        var = form.variables[i]
        outer *= _int_floor(var.upper) - _int_ceil(var.lower) + 1
        if outer > guard:
            raise GuardError(f"first-stage enumeration needs {outer} > {guard} nodes")

    blocks = _blocks(form, second)
    in_block = {i for members, _ in blocks for i in members}
    loose = [i for i in second if i not in in_block]  # vars in no row at all

    first_rows = [
        row
        for row in form.constraints
        if all(i not in second_set for i, _ in row.terms)
    ]

    best_total: Fraction | None = None
    best_assignment: dict[str, Fraction | int] | None = None

    first_ranges = [
        range(_int_ceil(form.variables[i].lower), _int_floor(form.variables[i].upper) + 1)
        for i in first
    ]
    for combo in itertools.product(*first_ranges):
        fixed: dict[int, Fraction] = {
            i: Fraction(value) for i, value in zip(first, combo)
        }
        if any(not _row_holds(row, fixed) for row in first_rows):
            continue
        total = sum((obj[i] * fixed[i] for i in first), Fraction(0))
        assignment: dict[str, Fraction | int] = {
            form.variables[i].name: value for i, value in zip(first, combo)
        }
        feasible = True
        for members, rows in blocks:
            result = _minimize_block(form, obj, members, rows, fixed, guard)
            if result is None:
                feasible = False
                break
            block_cost, block_values = result
            total += block_cost
            assignment.update(block_values)
        if not feasible:
            continue
        for i in loose:
            var = form.variables[i]
            value = _int_ceil(var.lower) if var.kind == "integer" else var.lower
            total += obj[i] * value
            assignment[var.name] = value
        if best_total is None or total < best_total:
            best_total, best_assignment = total, assignment

    if best_total is None or best_assignment is None:
        raise ModelError("no feasible assignment")
    return best_total, best_assignment


def _row_holds(row: Row, values: dict[int, Fraction]) -> bool:
    lhs = sum((coef * values[i] for i, coef in row.terms), Fraction(0))
    return lhs <= row.rhs if row.sense == SENSE_LE else lhs >= row.rhs


def _minimize_block(
    form: ExtensiveForm,
    obj: list[Fraction],
    members: list[int],
    rows: list[Row],
    fixed: dict[int, Fraction],
    guard: int,
) -> tuple[Fraction, dict[str, Fraction | int]] | None:
    """Best cost of one block given the first-stage values, or None."""
    integers = [i for i in members if form.variables[i].kind == "integer"]
    continuous = [i for i in members if form.variables[i].kind == "continuous"]
    member_set = set(members)

    # Residual rhs once first-stage contributions are moved across.
    residuals: list[tuple[Row, Fraction, list[tuple[int, Fraction]]]] = []
    for row in rows:
        residual = row.rhs
        free_terms = []
        for i, coef in row.terms:
            if i in member_set:
                free_terms.append((i, coef))
            else:
                residual -= coef * fixed[i]
        residuals.append((row, residual, free_terms))

    lower: dict[int, int] = {}
    upper: dict[int, int | None] = {}
    for i in integers:
        var = form.variables[i]
        lower[i] = _int_ceil(var.lower)
        upper[i] = None if var.upper is None else _int_floor(var.upper)

    # Hard univariate bounds: rows reduced to a single free variable.
    for row, residual, free_terms in residuals:
        if len(free_terms) != 1 or free_terms[0][0] not in lower:
            continue
        i, coef = free_terms[0]
        limit = residual / coef
        at_most = (coef > 0) == (row.sense == SENSE_LE)
        if at_most:
            cap = _int_floor(limit)
            upper[i] = cap if upper[i] is None else min(upper[i], cap)
        else:
            lower[i] = max(lower[i], _int_ceil(limit))

    # Covering bounds: a variable only in all-nonnegative >= rows (over
    # variables with non-negative lower bounds) never needs to exceed the
    # largest single-row requirement.
    for i in integers:
        if upper[i] is not None:
            continue
        best_bound: int | None = None
        eligible = True
        for row, residual, free_terms in residuals:
            coefs = dict(free_terms)
            if i not in coefs:
                continue
            if (
                row.sense != SENSE_GE
                or coefs[i] <= 0
                or any(c < 0 for c in coefs.values())
                or any(form.variables[j].lower < 0 for j in coefs)
            ):
                eligible = False
                break
            need = _int_ceil(residual / coefs[i])
            best_bound = need if best_bound is None else max(best_bound, need)
        if not eligible or best_bound is None:
            raise GuardError(
                f"cannot bound integer variable {form.variables[i].name}"
            )
        upper[i] = max(lower[i], best_bound)

    tight_upper: dict[int, int] = {}
    work = 1
    for i in integers:
        hi = upper[i]
        assert hi is not None
        if hi < lower[i]:
            return None
        tight_upper[i] = hi
        work *= hi - lower[i] + 1
        if work > guard:
            raise GuardError(f"block enumeration needs {work} > {guard} nodes")

    best_cost: Fraction | None = None
    best_values: dict[str, Fraction | int] | None = None
    spans = [range(lower[i], tight_upper[i] + 1) for i in integers]
    for combo in itertools.product(*spans):
        values = dict(fixed)
        for i, value in zip(integers, combo):
            values[i] = Fraction(value)
        ok = True
        # Continuous variables: smallest value the rows allow.
        for i in continuous:
            var = form.variables[i]
            level = var.lower
            for row, _, free_terms in residuals:
                coefs = dict(free_terms)
                if i not in coefs:
                    continue
                others = [j for j in coefs if j != i and j not in values]
                if others:
                    raise GuardError(
                        f"cannot resolve coupled continuous variables in {row.name}"
                    )
                partial = sum(
                    (coef * values[j] for j, coef in row.terms if j != i), Fraction(0)
                )
                coef = coefs[i]
                if (coef > 0 and row.sense == SENSE_GE) or (
                    coef < 0 and row.sense == SENSE_LE
                ):
                    level = max(level, (row.rhs - partial) / coef)
            if var.upper is not None and level > var.upper:
                ok = False
                break
            values[i] = level
        if not ok:
            continue
        if any(not _row_holds(row, values) for row, _, _ in residuals):
            continue
        cost = sum((obj[i] * values[i] for i in members), Fraction(0))
        if best_cost is None or cost < best_cost:
            best_cost = cost
            best_values = {
                form.variables[i].name: (
                    int(values[i]) if form.variables[i].kind == "integer" else values[i]
                )
                for i in members
            }
    if best_cost is None or best_values is None:
        return None
    return best_cost, best_values
