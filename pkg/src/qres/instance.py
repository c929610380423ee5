"""Problem instance: circuits, providers, machines, costs, and timing data.

An :class:`Instance` is the immutable input to everything else in the
package. It is normally built from a JSON document (see ``load_instance``)
plus an optional execution-time CSV. Construction and validation are
separate: dataclasses can be assembled with inconsistent data, and
:func:`validate` reports every violation as a diagnostic instead of
raising, so the CLI can show all problems at once.

Units follow :mod:`qres.units`: money fields are integer micro-dollars,
time fields integer microseconds.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Any, Iterator, TextIO

from .units import MICRO, UnitError, micro_to_unit, parse_money, parse_seconds

DEFAULT_CAPACITY = 30

PROB_TOLERANCE = 1e-9


class InstanceError(ValueError):
    """Raised when a document or CSV cannot be turned into a valid Instance."""


@dataclass(frozen=True)
class CostRates:
    """Per-qubit rates charged by one provider for one circuit (micro-dollars)."""

    reserve_per_qubit: int
    utilize_per_qubit: int
    on_demand_per_qubit: int
    penalty_per_second: int  # micro-dollars per second of over-waiting


@dataclass(frozen=True)
class Machine:
    provider_id: str
    machine_id: str
    capacity_qubits: int


@dataclass(frozen=True)
class Circuit:
    circuit_id: str
    label: str | None = None
    num_qubits: int | None = None
    encoded_value: int | None = None


@dataclass(frozen=True)
class ExecTimeTable:
    """Execution time in microseconds per (circuit, provider, machine)."""

    entries: dict[tuple[str, str, str], int] = field(default_factory=dict)

    def get(self, circuit_id: str, provider_id: str, machine_id: str) -> int | None:
        return self.entries.get((circuit_id, provider_id, machine_id))


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.location}: {self.message}"


@dataclass(frozen=True)
class Instance:
    """Full static problem data. Immutable after construction."""

    circuits: tuple[Circuit, ...]
    providers: tuple[str, ...]
    machines: tuple[Machine, ...]
    rates: dict[tuple[str, str], CostRates]  # (circuit_id, provider_id)
    exec_times: ExecTimeTable
    demand_sets: dict[str, tuple[int, ...]]  # circuit_id -> qubit counts
    wait_sets: dict[str, tuple[int, ...]]  # circuit_id -> microseconds
    demand_probs: dict[str, tuple[float, ...]] = field(default_factory=dict)
    wait_probs: dict[str, tuple[float, ...]] = field(default_factory=dict)

    def circuit_ids(self) -> tuple[str, ...]:
        return tuple(c.circuit_id for c in self.circuits)

    def triples(self) -> list[tuple[str, str, str]]:
        """All (circuit, provider, machine) combinations, sorted."""
        keys = [
            (c.circuit_id, m.provider_id, m.machine_id)
            for c in self.circuits
            for m in self.machines
        ]
        return sorted(keys)

    def machine(self, provider_id: str, machine_id: str) -> Machine:
        for m in self.machines:
            if (m.provider_id, m.machine_id) == (provider_id, machine_id):
                return m
        raise KeyError(f"unknown machine {provider_id}/{machine_id}")

    def rate(self, circuit_id: str, provider_id: str) -> CostRates:
        return self.rates[(circuit_id, provider_id)]

    def exec_time(self, circuit_id: str, provider_id: str, machine_id: str) -> int:
        value = self.exec_times.get(circuit_id, provider_id, machine_id)
        if value is None:
            raise KeyError(
                f"no execution time for ({circuit_id}, {provider_id}, {machine_id})"
            )
        return value


def popcount(value: int) -> int:
    return bin(value).count("1")


def synth_exec_time(num_qubits: int, encoded_value: int, base: int, slope: int) -> int:
    """Synthetic execution time (microseconds) for an encoded-number circuit.

    The surrogate is ``base + slope * num_qubits * popcount(encoded_value)``:
    strictly increasing in the number of one bits for a fixed width, and
    non-decreasing in the width, so wider and denser encodings never get
    cheaper.
    """
    if num_qubits <= 0:
        raise InstanceError(f"num_qubits must be positive, got {num_qubits}")
    if base <= 0 or slope <= 0:
        raise InstanceError("base and slope must be positive")
    if encoded_value < 0 or encoded_value >= 2**num_qubits:
        raise InstanceError(
            f"encoded value {encoded_value} out of range for {num_qubits} qubits"
        )
    return base + slope * num_qubits * popcount(encoded_value)


# ---------------------------------------------------------------------------
# Execution-time CSV
# ---------------------------------------------------------------------------

_CSV_COLUMNS = ("circuit_id", "provider_id", "machine_id", "seconds")


def load_exec_times(source: str | Path | TextIO) -> ExecTimeTable:
    """Read an execution-time CSV (circuit_id,provider_id,machine_id,seconds)."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as handle:
            return load_exec_times(handle)
    reader = csv.DictReader(source)
    entries: dict[tuple[str, str, str], int] = {}
    if reader.fieldnames is not None:
        header = tuple(name.strip() for name in reader.fieldnames)
        if header != _CSV_COLUMNS:
            raise InstanceError(
                f"execution-time CSV header must be {','.join(_CSV_COLUMNS)}, "
                f"got {','.join(header)}"
            )
    for row in reader:
        line = reader.line_num
        if any(row.get(col) in (None, "") for col in _CSV_COLUMNS):
            raise InstanceError(f"line {line}: malformed row (expected 4 columns)")
        key = (row["circuit_id"], row["provider_id"], row["machine_id"])
        try:
            micros = parse_seconds(row["seconds"])
        except UnitError as exc:
            raise InstanceError(f"line {line}: {exc}") from exc
        if micros < 0:
            raise InstanceError(f"line {line}: negative execution time")
        if key in entries:
            raise InstanceError(f"line {line}: duplicate triple {key}")
        entries[key] = micros
    return ExecTimeTable(entries)


# ---------------------------------------------------------------------------
# JSON document parsing
# ---------------------------------------------------------------------------


def _require(doc: dict, key: str, where: str) -> Any:
    if key not in doc:
        raise InstanceError(f"{where}: missing required key '{key}'")
    return doc[key]


def _parse_int_set(spec: Any, where: str) -> tuple[int, ...]:
    if isinstance(spec, dict):
        lo = _require(spec, "lo", where)
        hi = _require(spec, "hi", where)
        step = spec.get("step", 1)
        if not all(isinstance(v, int) for v in (lo, hi, step)) or step <= 0:
            raise InstanceError(f"{where}: lo/hi/step must be integers with step > 0")
        values = tuple(range(lo, hi + 1, step))
    elif isinstance(spec, list):
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in spec):
            raise InstanceError(f"{where}: expected a list of integers")
        values = tuple(spec)
    else:
        raise InstanceError(f"{where}: expected a list or a lo/hi/step object")
    if not values:
        raise InstanceError(f"{where}: set is empty")
    return values


def _parse_time_set(spec: Any, where: str) -> tuple[int, ...]:
    try:
        if isinstance(spec, dict):
            lo = parse_seconds(_require(spec, "lo", where))
            hi = parse_seconds(_require(spec, "hi", where))
            step = parse_seconds(spec.get("step", 1))
            if step <= 0:
                raise InstanceError(f"{where}: step must be positive")
            values = tuple(range(lo, hi + 1, step))
        elif isinstance(spec, list):
            values = tuple(parse_seconds(v) for v in spec)
        else:
            raise InstanceError(f"{where}: expected a list or a lo/hi/step object")
    except UnitError as exc:
        raise InstanceError(f"{where}: {exc}") from exc
    if not values:
        raise InstanceError(f"{where}: set is empty")
    return values


def _parse_probs(spec: Any, where: str) -> tuple[float, ...]:
    if not isinstance(spec, list) or not spec:
        raise InstanceError(f"{where}: expected a non-empty list of probabilities")
    try:
        return tuple(float(v) for v in spec)
    except (TypeError, ValueError) as exc:
        raise InstanceError(f"{where}: {exc}") from exc


def _parse_rates(block: dict, where: str) -> CostRates:
    try:
        return CostRates(
            reserve_per_qubit=parse_money(_require(block, "reserve", where)),
            utilize_per_qubit=parse_money(_require(block, "utilize", where)),
            on_demand_per_qubit=parse_money(_require(block, "on_demand", where)),
            penalty_per_second=parse_money(_require(block, "penalty", where)),
        )
    except UnitError as exc:
        raise InstanceError(f"{where}: {exc}") from exc


def _parse_circuit(entry: Any, index: int) -> Circuit:
    where = f"circuits[{index}]"
    if isinstance(entry, str):
        return Circuit(circuit_id=entry)
    if not isinstance(entry, dict):
        raise InstanceError(f"{where}: expected an id string or an object")
    cid = _require(entry, "id", where)
    if not isinstance(cid, str) or not cid:
        raise InstanceError(f"{where}: id must be a non-empty string")
    return Circuit(
        circuit_id=cid,
        label=entry.get("label"),
        num_qubits=entry.get("num_qubits"),
        encoded_value=entry.get("encoded_value"),
    )


def _synthesize_exec_times(
    circuits: tuple[Circuit, ...],
    triples: list[tuple[str, str, str]],
    block: dict,
) -> ExecTimeTable:
    where = "exec_times.synthetic"
    try:
        base = parse_seconds(_require(block, "base", where))
        slope = parse_seconds(_require(block, "slope", where))
    except UnitError as exc:
        raise InstanceError(f"{where}: {exc}") from exc
    by_id = {c.circuit_id: c for c in circuits}
    entries: dict[tuple[str, str, str], int] = {}
    for key in triples:
        circuit = by_id[key[0]]
        if circuit.num_qubits is None or circuit.encoded_value is None:
            raise InstanceError(
                f"{where}: circuit '{circuit.circuit_id}' needs num_qubits and "
                "encoded_value for synthetic timing"
            )
        entries[key] = synth_exec_time(
            circuit.num_qubits, circuit.encoded_value, base, slope
        )
    return ExecTimeTable(entries)


def instance_from_document(
    doc: dict,
    base_dir: str | Path | None = None,
    *,
    check: bool = True,
) -> Instance:
    """Build an Instance from a parsed JSON document.

    ``base_dir`` resolves a relative ``exec_times_csv`` path. With
    ``check=True`` (the default) any error-severity diagnostic raises
    :class:`InstanceError`; ``check=False`` returns the instance as-is so
    callers can inspect the diagnostics themselves.
    """
    if not isinstance(doc, dict):
        raise InstanceError("document root must be an object")

    raw_circuits = _require(doc, "circuits", "document")
    if not isinstance(raw_circuits, list) or not raw_circuits:
        raise InstanceError("circuits: expected a non-empty list")
    circuits = tuple(_parse_circuit(entry, i) for i, entry in enumerate(raw_circuits))

    providers = _require(doc, "providers", "document")
    if not isinstance(providers, list) or not all(
        isinstance(p, str) and p for p in providers
    ):
        raise InstanceError("providers: expected a list of non-empty strings")
    providers = tuple(providers)

    raw_machines = _require(doc, "machines", "document")
    if not isinstance(raw_machines, list) or not raw_machines:
        raise InstanceError("machines: expected a non-empty list")
    machines = []
    for i, entry in enumerate(raw_machines):
        where = f"machines[{i}]"
        if not isinstance(entry, dict):
            raise InstanceError(f"{where}: expected an object")
        capacity = entry.get("capacity", DEFAULT_CAPACITY)
        if not isinstance(capacity, int) or isinstance(capacity, bool):
            raise InstanceError(f"{where}: capacity must be an integer")
        machines.append(
            Machine(
                provider_id=_require(entry, "provider", where),
                machine_id=_require(entry, "machine", where),
                capacity_qubits=capacity,
            )
        )
    machines = tuple(machines)

    # Demand/wait sets live on the circuit entries.
    demand_sets: dict[str, tuple[int, ...]] = {}
    wait_sets: dict[str, tuple[int, ...]] = {}
    demand_probs: dict[str, tuple[float, ...]] = {}
    wait_probs: dict[str, tuple[float, ...]] = {}
    for i, entry in enumerate(raw_circuits):
        if isinstance(entry, str):
            raise InstanceError(
                f"circuits[{i}]: '{entry}' needs demand_set and wait_set"
            )
        cid = circuits[i].circuit_id
        demand_sets[cid] = _parse_int_set(
            _require(entry, "demand_set", f"circuits[{i}]"), f"circuits[{i}].demand_set"
        )
        wait_sets[cid] = _parse_time_set(
            _require(entry, "wait_set", f"circuits[{i}]"), f"circuits[{i}].wait_set"
        )
        if "demand_probs" in entry:
            demand_probs[cid] = _parse_probs(
                entry["demand_probs"], f"circuits[{i}].demand_probs"
            )
        if "wait_probs" in entry:
            wait_probs[cid] = _parse_probs(
                entry["wait_probs"], f"circuits[{i}].wait_probs"
            )

    # Rates: explicit per-pair records override the default block.
    rates: dict[tuple[str, str], CostRates] = {}
    default_block = doc.get("default_rates")
    if default_block is not None:
        default = _parse_rates(default_block, "default_rates")
        for circuit in circuits:
            for provider in providers:
                rates[(circuit.circuit_id, provider)] = default
    for i, entry in enumerate(doc.get("rates", [])):
        where = f"rates[{i}]"
        if not isinstance(entry, dict):
            raise InstanceError(f"{where}: expected an object")
        key = (_require(entry, "circuit", where), _require(entry, "provider", where))
        rates[key] = _parse_rates(entry, where)

    triples = [
        (c.circuit_id, m.provider_id, m.machine_id) for c in circuits for m in machines
    ]

    exec_block = doc.get("exec_times")
    csv_path = doc.get("exec_times_csv")
    if exec_block is not None and csv_path is not None:
        raise InstanceError("give either exec_times or exec_times_csv, not both")
    if csv_path is not None:
        path = Path(csv_path)
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        try:
            exec_times = load_exec_times(path)
        except OSError as exc:
            raise InstanceError(f"exec_times_csv: {exc}") from exc
    elif isinstance(exec_block, dict) and "synthetic" in exec_block:
        exec_times = _synthesize_exec_times(
            circuits, triples, exec_block["synthetic"]
        )
    elif isinstance(exec_block, list):
        entries: dict[tuple[str, str, str], int] = {}
        for i, entry in enumerate(exec_block):
            where = f"exec_times[{i}]"
            if not isinstance(entry, dict):
                raise InstanceError(f"{where}: expected an object")
            key = (
                _require(entry, "circuit", where),
                _require(entry, "provider", where),
                _require(entry, "machine", where),
            )
            if key in entries:
                raise InstanceError(f"{where}: duplicate triple {key}")
            try:
                entries[key] = parse_seconds(_require(entry, "seconds", where))
            except UnitError as exc:
                raise InstanceError(f"{where}: {exc}") from exc
        exec_times = ExecTimeTable(entries)
    elif exec_block is None:
        exec_times = ExecTimeTable({})
    else:
        raise InstanceError(
            "exec_times must be a list of records or a {'synthetic': ...} object"
        )

    instance = Instance(
        circuits=circuits,
        providers=providers,
        machines=machines,
        rates=rates,
        exec_times=exec_times,
        demand_sets=demand_sets,
        wait_sets=wait_sets,
        demand_probs=demand_probs,
        wait_probs=wait_probs,
    )
    if check:
        errors = [d for d in validate(instance) if d.severity == "error"]
        if errors:
            raise InstanceError("; ".join(str(d) for d in errors))
    return instance


def load_instance(
    source: str | Path | TextIO, base_dir: str | Path | None = None
) -> Instance:
    """Load and validate an instance from a JSON file or file object.

    Floats in the document are parsed as decimal literals, so values such
    as 1.68 land exactly on the micro-dollar grid.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        with open(path, "r", encoding="utf-8") as handle:
            return load_instance(handle, base_dir or path.parent)
    try:
        doc = json.load(source, parse_float=Decimal)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"invalid JSON: {exc}") from exc
    return instance_from_document(doc, base_dir)


def parse_instance(text: str, base_dir: str | Path | None = None) -> Instance:
    """Load an instance from JSON text."""
    return load_instance(io.StringIO(text), base_dir)


def serialize_instance(instance: Instance) -> dict:
    """Emit a canonical document that loads back to an equal Instance."""

    def money(micro: int) -> float:
        return micro_to_unit(micro)

    circuits = []
    for c in instance.circuits:
        entry: dict[str, Any] = {"id": c.circuit_id}
        if c.label is not None:
            entry["label"] = c.label
        if c.num_qubits is not None:
            entry["num_qubits"] = c.num_qubits
        if c.encoded_value is not None:
            entry["encoded_value"] = c.encoded_value
        entry["demand_set"] = list(instance.demand_sets[c.circuit_id])
        entry["wait_set"] = [micro_to_unit(w) for w in instance.wait_sets[c.circuit_id]]
        if c.circuit_id in instance.demand_probs:
            entry["demand_probs"] = list(instance.demand_probs[c.circuit_id])
        if c.circuit_id in instance.wait_probs:
            entry["wait_probs"] = list(instance.wait_probs[c.circuit_id])
        circuits.append(entry)

    return {
        "circuits": circuits,
        "providers": list(instance.providers),
        "machines": [
            {
                "provider": m.provider_id,
                "machine": m.machine_id,
                "capacity": m.capacity_qubits,
            }
            for m in instance.machines
        ],
        "rates": [
            {
                "circuit": cid,
                "provider": pid,
                "reserve": money(r.reserve_per_qubit),
                "utilize": money(r.utilize_per_qubit),
                "on_demand": money(r.on_demand_per_qubit),
                "penalty": money(r.penalty_per_second),
            }
            for (cid, pid), r in sorted(instance.rates.items())
        ],
        "exec_times": [
            {
                "circuit": c,
                "provider": p,
                "machine": m,
                "seconds": micro_to_unit(t),
            }
            for (c, p, m), t in sorted(instance.exec_times.entries.items())
        ],
    }


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _check_probs(
    probs: tuple[float, ...], expected_len: int, where: str
) -> Iterator[Diagnostic]:
    if len(probs) != expected_len:
        yield Diagnostic(
            "error", where, f"expected {expected_len} probabilities, got {len(probs)}"
        )
        return
    if any(p < 0 for p in probs):
        yield Diagnostic("error", where, "probabilities must be non-negative")
    total = sum(probs)
    if abs(total - 1.0) > PROB_TOLERANCE:
        yield Diagnostic("error", where, f"probabilities sum to {total!r}, not 1")


def validate(instance: Instance) -> list[Diagnostic]:
    """Check every instance invariant; errors and warnings, never raises.

    The pricing-sanity rule (utilization dearer than on-demand, or
    reservation at least as dear as on-demand) only warns: such instances
    are economically odd but still well-posed.
    """
    out: list[Diagnostic] = []

    seen_circuits: set[str] = set()
    for c in instance.circuits:
        if c.circuit_id in seen_circuits:
            out.append(Diagnostic("error", f"circuit {c.circuit_id}", "duplicate id"))
        seen_circuits.add(c.circuit_id)

    seen_machines: set[tuple[str, str]] = set()
    for m in instance.machines:
        where = f"machine {m.provider_id}/{m.machine_id}"
        if (m.provider_id, m.machine_id) in seen_machines:
            out.append(Diagnostic("error", where, "duplicate (provider, machine)"))
        seen_machines.add((m.provider_id, m.machine_id))
        if m.capacity_qubits < 0:
            out.append(
                Diagnostic("error", where, f"negative capacity {m.capacity_qubits}")
            )
        if m.provider_id not in instance.providers:
            out.append(Diagnostic("error", where, "unknown provider"))

    for c in instance.circuits:
        cid = c.circuit_id
        demand = instance.demand_sets.get(cid, ())
        wait = instance.wait_sets.get(cid, ())
        if not demand:
            out.append(Diagnostic("error", f"circuit {cid}", "empty demand set"))
        if not wait:
            out.append(Diagnostic("error", f"circuit {cid}", "empty wait set"))
        if any(b < 0 for b in demand):
            out.append(Diagnostic("error", f"circuit {cid}", "negative demand value"))
        if any(w < 0 for w in wait):
            out.append(Diagnostic("error", f"circuit {cid}", "negative wait time"))
        if cid in instance.demand_probs:
            out.extend(
                _check_probs(
                    instance.demand_probs[cid],
                    len(demand),
                    f"circuit {cid} demand_probs",
                )
            )
        if cid in instance.wait_probs:
            out.extend(
                _check_probs(
                    instance.wait_probs[cid], len(wait), f"circuit {cid} wait_probs"
                )
            )

    for c in instance.circuits:
        for p in instance.providers:
            key = (c.circuit_id, p)
            where = f"rates[{c.circuit_id},{p}]"
            if key not in instance.rates:
                out.append(Diagnostic("error", where, "no rates for this pair"))
                continue
            r = instance.rates[key]
            for name, value in (
                ("reserve", r.reserve_per_qubit),
                ("utilize", r.utilize_per_qubit),
                ("on_demand", r.on_demand_per_qubit),
                ("penalty", r.penalty_per_second),
            ):
                if value < 0:
                    out.append(Diagnostic("error", where, f"negative {name} rate"))
            if r.utilize_per_qubit > r.on_demand_per_qubit:
                out.append(
                    Diagnostic(
                        "warning", where, "utilization rate exceeds on-demand rate"
                    )
                )
            if r.reserve_per_qubit >= r.on_demand_per_qubit:
                out.append(
                    Diagnostic(
                        "warning",
                        where,
                        "reservation rate is not below the on-demand rate",
                    )
                )

    for c in instance.circuits:
        for m in instance.machines:
            key = (c.circuit_id, m.provider_id, m.machine_id)
            t = instance.exec_times.entries.get(key)
            where = f"exec_times[{','.join(key)}]"
            if t is None:
                out.append(Diagnostic("error", where, "missing execution time"))
            elif t < 0:
                out.append(Diagnostic("error", where, "negative execution time"))

    return out


def write_atomic(path: str | Path, data: str) -> int:
    """Write text to ``path`` atomically (temp file + rename). Returns bytes."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    encoded = data.encode("utf-8")
    with open(tmp, "wb") as handle:
        handle.write(encoded)
    os.replace(tmp, path)
    return len(encoded)
