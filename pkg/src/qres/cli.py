"""Command-line interface: validate, solve, sweep, surface, export-lp, eval.

Data outputs are plain CSV (or LP text) with no timestamps, so identical
inputs give byte-identical outputs. Exit codes: 0 success, 1 validation
or model error, 2 usage error. ``QRES_THREADS`` caps the number of worker
threads used to solve independent triples.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import random
import sys
from decimal import Decimal
from pathlib import Path

from .extform import LpParseError, build_extensive_form, render_lp
from .instance import (
    Instance,
    InstanceError,
    instance_from_document,
    load_instance,
    validate,
    write_atomic,
)
from .scenarios import ScenarioError
from .solver import (
    ModelError,
    Solution,
    TripleKey,
    brute_force_triple,
    expected_cost,
    per_triple_costs,
    solve_instance,
)
from .sweep import (
    min_capacity,
    render_csv,
    sweep_reservation,
    sweep_reservation_waiting,
)
from .units import UnitError, format_micro, parse_seconds

SPOT_CHECK_VECTORS = 20


class UsageError(ValueError):
    pass


def _parse_int_grid(spec: str) -> list[int]:
    """Parse 'lo:hi[:step]' into an inclusive integer grid."""
    parts = spec.split(":")
    if len(parts) not in (2, 3):
        raise UsageError(f"grid must be lo:hi[:step], got {spec!r}")
    try:
        lo, hi = int(parts[0]), int(parts[1])
        step = int(parts[2]) if len(parts) == 3 else 1
    except ValueError as exc:
        raise UsageError(f"grid must be integers: {spec!r}") from exc
    if step <= 0 or hi < lo:
        raise UsageError(f"grid needs lo <= hi and step > 0: {spec!r}")
    return list(range(lo, hi + 1, step))


def _parse_wait_grid(spec: str, instance: Instance) -> list[int]:
    """Parse 'lo:hi[:step]' in seconds; step defaults to the smallest
    gap found in the instance's wait sets."""
    parts = spec.split(":")
    if len(parts) not in (2, 3):
        raise UsageError(f"waits must be lo:hi[:step], got {spec!r}")
    try:
        lo = parse_seconds(parts[0])
        hi = parse_seconds(parts[1])
        step = parse_seconds(parts[2]) if len(parts) == 3 else _min_wait_gap(instance)
    except UnitError as exc:
        raise UsageError(f"waits: {exc}") from exc
    if step <= 0 or hi < lo or lo < 0:
        raise UsageError(f"waits needs 0 <= lo <= hi and step > 0: {spec!r}")
    return list(range(lo, hi + 1, step))


def _min_wait_gap(instance: Instance) -> int:
    gaps = [
        b - a
        for waits in instance.wait_sets.values()
        for a, b in zip(waits, sorted(waits)[1:])
    ]
    gaps = [g for g in gaps if g > 0]
    if not gaps:
        raise UsageError("no wait-set gap to derive a step from; pass lo:hi:step")
    return min(gaps)


def _write_output(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        write_atomic(path, text)


def _thread_count() -> int:
    raw = os.environ.get("QRES_THREADS", "1")
    try:
        value = int(raw)
    except ValueError as exc:
        raise UsageError(f"QRES_THREADS must be an integer, got {raw!r}") from exc
    return max(1, value)


def _solution_csv(instance: Instance, solution: Solution) -> str:
    rows = per_triple_costs(instance, solution.reservations)
    lines = [
        "circuit_id,provider_id,machine_id,reserved,"
        "first_stage,second_stage,penalty,total"
    ]
    for row in rows:
        lines.append(
            f"{row.key.circuit_id},{row.key.provider_id},{row.key.machine_id},"
            f"{row.reserved},{format_micro(row.first_stage)},"
            f"{format_micro(row.second_stage)},{format_micro(row.penalty)},"
            f"{format_micro(row.total)}"
        )
    lines.append(
        f"TOTAL,,,{sum(r.reserved for r in rows)},"
        f"{format_micro(solution.expected_first_stage)},"
        f"{format_micro(solution.expected_second_stage)},"
        f"{format_micro(solution.expected_penalty)},"
        f"{format_micro(solution.expected_total)}"
    )
    return "\n".join(lines) + "\n"


def _solution_table(instance: Instance, solution: Solution) -> str:
    text = _solution_csv(instance, solution)
    grid = [line.split(",") for line in text.strip().splitlines()]
    widths = [max(len(row[i]) for row in grid) for i in range(len(grid[0]))]
    out = []
    for row in grid:
        out.append(
            "  ".join(cell.rjust(w) for cell, w in zip(row, widths)).rstrip()
        )
    return "\n".join(out) + "\n"


def _load(path: str) -> Instance:
    return load_instance(path)


def _cmd_validate(args: argparse.Namespace) -> int:
    path = Path(args.instance)
    with open(path, "r", encoding="utf-8") as handle:
        doc = json.load(handle, parse_float=Decimal)
    instance = instance_from_document(doc, base_dir=path.parent, check=False)
    diagnostics = validate(instance)
    lines = [str(d) for d in diagnostics]
    if lines:
        _write_output("\n".join(lines) + "\n", args.output)
    return 1 if any(d.severity == "error" for d in diagnostics) else 0


def _verify_solution(instance: Instance, solution: Solution, seed: int | None) -> None:
    """Re-derive every reservation by brute force; raise on any mismatch."""
    rows = per_triple_costs(instance, solution.reservations)
    for row in rows:
        key = row.key
        rates = instance.rate(key.circuit_id, key.provider_id)
        machine = instance.machine(key.provider_id, key.machine_id)
        best_x, best_cost = brute_force_triple(
            rates,
            instance.demand_sets[key.circuit_id],
            instance.wait_sets[key.circuit_id],
            instance.exec_time(*key),
            machine.capacity_qubits,
            instance.demand_probs.get(key.circuit_id),
            instance.wait_probs.get(key.circuit_id),
        )
        if best_x != row.reserved or best_cost != row.total:
            raise ModelError(
                f"oracle mismatch on {key}: solver ({row.reserved}, "
                f"{format_micro(row.total)}) vs brute force ({best_x}, "
                f"{format_micro(best_cost)})"
            )
    if seed is not None:
        rng = random.Random(seed)
        triples = [TripleKey(*key) for key in instance.triples()]
        caps = {
            key: instance.machine(key.provider_id, key.machine_id).capacity_qubits
            for key in triples
        }
        for _ in range(SPOT_CHECK_VECTORS):
            vector = {key: rng.randint(0, caps[key]) for key in triples}
            cost = expected_cost(instance, vector).expected_total
            if cost < solution.expected_total:
                raise ModelError(
                    f"random vector {vector} beats the solver: "
                    f"{format_micro(cost)} < {format_micro(solution.expected_total)}"
                )


def _cmd_solve(args: argparse.Namespace) -> int:
    instance = _load(args.instance)
    solution = solve_instance(instance, max_workers=_thread_count())
    if args.oracle:
        _verify_solution(instance, solution, args.seed)
        if args.verbose:
            print("oracle: brute force agrees on every triple", file=sys.stderr)
    render = _solution_table if args.human else _solution_csv
    _write_output(render(instance, solution), args.output)
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    instance = _load(args.instance)
    reservations: dict[TripleKey, int] = {}
    with open(args.reservations, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        expected = {"circuit_id", "provider_id", "machine_id", "reserved"}
        if reader.fieldnames is None or not expected.issubset(reader.fieldnames):
            raise InstanceError(
                "reservations CSV needs columns circuit_id,provider_id,"
                "machine_id,reserved"
            )
        for record in reader:
            key = TripleKey(
                record["circuit_id"], record["provider_id"], record["machine_id"]
            )
            try:
                reservations[key] = int(record["reserved"])
            except ValueError as exc:
                raise InstanceError(
                    f"bad reserved value {record['reserved']!r} for {key}"
                ) from exc
    solution = expected_cost(instance, reservations)
    render = _solution_table if args.human else _solution_csv
    _write_output(render(instance, solution), args.output)
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    instance = _load(args.instance)
    grid = _parse_int_grid(args.grid or f"0:{min_capacity(instance)}")
    curve = sweep_reservation(instance, grid)
    if args.verbose:
        print(f"swept {len(curve.points)} reservation levels", file=sys.stderr)
    _write_output(render_csv(curve), args.output)
    return 0


def _cmd_surface(args: argparse.Namespace) -> int:
    instance = _load(args.instance)
    grid = _parse_int_grid(args.grid or f"0:{min_capacity(instance)}")
    waits = _parse_wait_grid(args.waits, instance)
    surface = sweep_reservation_waiting(instance, grid, waits)
    if args.verbose:
        print(f"evaluated {len(surface.rows)} grid cells", file=sys.stderr)
    _write_output(render_csv(surface), args.output)
    return 0


def _cmd_export_lp(args: argparse.Namespace) -> int:
    instance = _load(args.instance)
    form = build_extensive_form(instance)
    if args.verbose:
        print(
            f"{len(form.variables)} variables, {len(form.constraints)} rows",
            file=sys.stderr,
        )
    _write_output(render_lp(form), args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qres",
        description="Reserved/on-demand qubit provisioning under uncertain "
        "demand and waiting time.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("instance", help="instance JSON file")
        p.add_argument(
            "-o", "--output", default=None, help="output file (default: stdout)"
        )
        p.add_argument(
            "-v", "--verbose", action="store_true", help="progress notes on stderr"
        )

    p = sub.add_parser("validate", help="check an instance, print diagnostics")
    common(p)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("solve", help="optimal reservations and cost breakdown")
    common(p)
    p.add_argument(
        "--oracle",
        action="store_true",
        help="re-verify every reservation level by brute-force scan",
    )
    p.add_argument(
        "--seed",
        type=int,
        default=None,
        help="with --oracle: also spot-check optimality against random "
        "reservation vectors",
    )
    p.add_argument("--human", action="store_true", help="aligned table output")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("eval", help="cost breakdown of a given reservation vector")
    common(p)
    p.add_argument(
        "--reservations",
        required=True,
        help="CSV with circuit_id,provider_id,machine_id,reserved",
    )
    p.add_argument("--human", action="store_true", help="aligned table output")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="cost curve over forced reservation levels")
    common(p)
    p.add_argument(
        "--grid",
        default=None,
        help="reservation grid lo:hi[:step] (default 0:min capacity)",
    )
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser(
        "surface", help="cost over (reservation level, arranged waiting time)"
    )
    common(p)
    p.add_argument(
        "--grid",
        default=None,
        help="reservation grid lo:hi[:step] (default 0:min capacity)",
    )
    p.add_argument(
        "--waits",
        required=True,
        help="arranged-wait grid lo:hi[:step] in seconds "
        "(step defaults to the smallest wait-set gap)",
    )
    p.set_defaults(func=_cmd_surface)

    p = sub.add_parser("export-lp", help="write the deterministic equivalent as LP")
    common(p)
    p.set_defaults(func=_cmd_export_lp)

    return parser


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed its message
        code = exc.code
        return code if isinstance(code, int) else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (
        InstanceError,
        ScenarioError,
        ModelError,
        LpParseError,
        UnitError,
        OSError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
