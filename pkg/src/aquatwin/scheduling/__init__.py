"""Single-crew maintenance scheduling with release times, dependencies and preemption."""

from .model import (Breakdown, Infeasible, InstanceError, ScheduleSolution, SchedulingInstance, Segment, TaskSpec,
                    VehicleSpec, Violation, dependency_indicators, instance_from_dict, instance_to_dict,
                    load_instance, metrics, objective, travel_co2, travel_fuel, validate)
from .solvers import brute_force, solve_baseline, solve_exact
from .experiments import ComparisonResult, compare_runs, format_table, gantt_csv, random_instance, solution_json

__all__ = [
    "Breakdown", "ComparisonResult", "Infeasible", "InstanceError", "ScheduleSolution", "SchedulingInstance",
    "Segment", "TaskSpec", "VehicleSpec", "Violation", "brute_force", "compare_runs", "dependency_indicators",
    "format_table", "gantt_csv", "instance_from_dict", "instance_to_dict", "load_instance", "metrics",
    "objective", "random_instance", "solution_json", "solve_baseline", "solve_exact", "travel_co2",
    "travel_fuel", "validate",
]
