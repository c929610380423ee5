"""Two-stage provisioning of reserved, utilized, and on-demand qubits.

Given finite uncertainty sets for each circuit's qubit demand and waiting
time, the package decides how many qubits to reserve per (circuit,
provider, machine) so that the expected total of reservation, utilization,
on-demand, and over-waiting-penalty cost is minimal. It ships an exact
solver with brute-force oracles, an extensive-form MILP exporter in LP
text format, experiment sweeps, and a CLI.
"""

from .extform import (
    ExtensiveForm,
    LpParseError,
    Row,
    Variable,
    build_extensive_form,
    export_lp,
    parse_lp,
    solve_enumerative,
)
from .instance import (
    CostRates,
    Circuit,
    Diagnostic,
    ExecTimeTable,
    Instance,
    InstanceError,
    Machine,
    instance_from_document,
    load_exec_times,
    load_instance,
    parse_instance,
    serialize_instance,
    synth_exec_time,
    validate,
)
from .recourse import RecourseDecision, optimal_recourse, penalty_time
from .scenarios import (
    Scenario,
    ScenarioError,
    ScenarioSpace,
    build_space,
    expectation,
    space_for_circuit,
)
from .solver import (
    CapacityError,
    GuardError,
    ModelError,
    Solution,
    TripleKey,
    brute_force_triple,
    expected_cost,
    joint_enumeration_oracle,
    per_triple_costs,
    solve_instance,
    solve_triple,
)
from .sweep import (
    CostCurve,
    CostSurface,
    emit_csv,
    sweep_reservation,
    sweep_reservation_waiting,
    with_wait_singleton,
)

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "Circuit",
    "CostCurve",
    "CostRates",
    "CostSurface",
    "Diagnostic",
    "ExecTimeTable",
    "ExtensiveForm",
    "GuardError",
    "Instance",
    "InstanceError",
    "LpParseError",
    "Machine",
    "ModelError",
    "RecourseDecision",
    "Row",
    "Scenario",
    "ScenarioError",
    "ScenarioSpace",
    "Solution",
    "TripleKey",
    "Variable",
    "build_extensive_form",
    "build_space",
    "emit_csv",
    "expectation",
    "expected_cost",
    "export_lp",
    "instance_from_document",
    "joint_enumeration_oracle",
    "load_exec_times",
    "load_instance",
    "optimal_recourse",
    "parse_instance",
    "parse_lp",
    "penalty_time",
    "per_triple_costs",
    "serialize_instance",
    "solve_enumerative",
    "solve_instance",
    "solve_triple",
    "space_for_circuit",
    "brute_force_triple",
    "sweep_reservation",
    "sweep_reservation_waiting",
    "synth_exec_time",
    "validate",
    "with_wait_singleton",
]
