"""Random instance generation, baseline-vs-exact comparison and report emission."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np
import pandas as pd

from .model import (Infeasible, ScheduleSolution, SchedulingInstance, TaskSpec, VehicleSpec, metrics,
                    objective)
from .solvers import solve_baseline, solve_exact

VEHICLES = {
    "Van": VehicleSpec("Van", Fraction(12), Fraction("2.64")),
    "Small Truck": VehicleSpec("Small Truck", Fraction(8), Fraction("2.68")),
}

# Row labels, units and direction (+1: lower is better, -1: higher is better).
TABLE_ROWS = (
    ("Total Completion Time (E[C_max])", "c_max", "hours", 1),
    ("Delays and Penalties (E[D_total])", "d_total", "hours", 1),
    ("CO2 Emissions (E[C_total])", "c_total", "kg", 1),
    ("Fuel Consumption (E[F_total])", "f_total", "Litres", 1),
    ("Efficiency and Utilization (E[E_eff])", "e_eff", "%", -1),
)
TABLE_COLUMNS = ("Metric", "Conventional Method", "Proposed Model", "Improvement (%)")


def random_instance(rng: np.random.Generator, n_tasks: int | tuple[int, int] = (4, 6),
                    emergency_rate: float = 0.3, dependency_rate: float = 0.2,
                    max_preemptions: int = 2, slack_hours: float = 4.0) -> SchedulingInstance:
    """A feasible-looking random day on a 20 km square with two vehicle types.

    Processing times are multiples of half an hour; travel time is distance
    at 20 km/h rounded to 0.1 h. Dependencies only point from lower to
    higher ids, so the graph is acyclic.
    """
    n = int(n_tasks) if np.isscalar(n_tasks) else int(rng.integers(n_tasks[0], n_tasks[1] + 1))
    xy = rng.uniform(0.0, 20.0, size=(n, 2))
    tasks = []
    for k in range(n):
        p = Fraction(int(rng.integers(1, 7)), 2)
        vehicle = "Van" if rng.random() < 0.6 else "Small Truck"
        fuel = p * Fraction(5, 2)
        release = Fraction(int(rng.integers(1, 7)), 2) if rng.random() < emergency_rate else Fraction(0)
        tasks.append(TaskSpec(
            id=k + 1, processing_time=p, fuel=fuel, co2=fuel * VEHICLES[vehicle].emission_factor,
            location=(round(float(xy[k, 0]), 3), round(float(xy[k, 1]), 3)),
            priority=int(rng.integers(1, 6)), release_time=release, vehicle=vehicle,
            max_preemptions=int(rng.integers(1, max_preemptions + 1)),
        ))
    deps = tuple((i + 1, j + 1) for i in range(n) for j in range(i + 1, n) if rng.random() < dependency_rate)
    times, dists = {}, {}
    for i in range(n):
        for j in range(n):
            if i != j:
                km = Fraction(max(1, int(round(float(np.hypot(*(xy[i] - xy[j])))))))
                dists[(i + 1, j + 1)] = km
                times[(i + 1, j + 1)] = Fraction(round(km / 20 * 10), 10)
    start = Fraction(8)
    busy = sum((t.processing_time for t in tasks), Fraction(0))
    latest = max(t.release_time for t in tasks)
    end = start + busy + latest + Fraction(n) + Fraction(slack_hours).limit_denominator(2)
    return SchedulingInstance(tuple(tasks), deps, times, dists, dict(VEHICLES), start, end)


@dataclass
class ComparisonResult:
    runs: pd.DataFrame
    table: pd.DataFrame
    regenerated: int

    @property
    def mean_z_improvement(self) -> float:
        return float(self.runs["z_improvement_pct"].mean())


def _run_metrics(inst: SchedulingInstance, sol: ScheduleSolution) -> dict[str, float]:
    b = objective(inst, sol)
    m = metrics(inst, sol)
    return {"c_max": float(b.c_max - inst.start), "d_total": float(b.d_total), "c_total": float(b.c_total),
            "f_total": float(b.f_total), "e_eff": float(m["e_eff"]), "z": float(b.z)}


def _improvement(base: float, new: float, direction: int) -> float:
    if base == 0:
        return 0.0 if new == 0 else math.nan
    return direction * (base - new) / abs(base) * 100.0


def compare_runs(generator: Callable[[np.random.Generator], SchedulingInstance], n_runs: int = 20,
                 seed: int = 0, time_budget: float = 10.0, max_attempts: int = 1000) -> ComparisonResult:
    """Solve ``n_runs`` generated instances with both solvers and average the metrics.

    Instances on which either solver is infeasible are regenerated; the
    count is reported.
    """
    rng = np.random.default_rng(seed)
    rows, regenerated, attempts = [], 0, 0
    while len(rows) < n_runs:
        attempts += 1
        if attempts > max_attempts:
            raise RuntimeError(f"generator produced {regenerated} infeasible instances in a row")
        inst = generator(rng)
        try:
            base = solve_baseline(inst)
            exact = solve_exact(inst, time_budget=time_budget)
        except Infeasible:
            regenerated += 1
            continue
        mb, me = _run_metrics(inst, base), _run_metrics(inst, exact)
        row = {"run": len(rows), "n_tasks": len(inst.tasks), "optimal": exact.optimal}
        row.update({f"baseline_{k}": v for k, v in mb.items()})
        row.update({f"exact_{k}": v for k, v in me.items()})
        row["z_improvement_pct"] = _improvement(mb["z"], me["z"], 1)
        rows.append(row)
    runs = pd.DataFrame(rows)
    table_rows = []
    for label, key, unit, direction in TABLE_ROWS:
        b, e = float(runs[f"baseline_{key}"].mean()), float(runs[f"exact_{key}"].mean())
        table_rows.append({"Metric": label, "Conventional Method": b, "Proposed Model": e,
                           "Improvement (%)": _improvement(b, e, direction), "unit": unit})
    return ComparisonResult(runs, pd.DataFrame(table_rows), regenerated)


def single_comparison(inst: SchedulingInstance, baseline: ScheduleSolution, exact: ScheduleSolution) -> pd.DataFrame:
    """The five-row comparison table for one instance."""
    mb, me = _run_metrics(inst, baseline), _run_metrics(inst, exact)
    return pd.DataFrame([{"Metric": label, "Conventional Method": mb[key], "Proposed Model": me[key],
                          "Improvement (%)": _improvement(mb[key], me[key], d), "unit": unit}
                         for label, key, unit, d in TABLE_ROWS])


def format_table(table: pd.DataFrame) -> str:
    """Aligned text in the comparison-table layout: value + unit, rounded percent."""
    cells = [list(TABLE_COLUMNS)]
    for _, r in table.iterrows():
        unit = r["unit"]
        fmt = (lambda v: f"{v:.2f}%") if unit == "%" else (lambda v, u=unit: f"{v:.2f} {u}")
        imp = "n/a" if math.isnan(r["Improvement (%)"]) else f"{r['Improvement (%)']:.0f}%"
        cells.append([r["Metric"], fmt(r["Conventional Method"]), fmt(r["Proposed Model"]), imp])
    widths = [max(len(row[c]) for row in cells) for c in range(4)]
    lines = ["  ".join(row[c].ljust(widths[c]) for c in range(4)).rstrip() for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def table_csv(table: pd.DataFrame) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(TABLE_COLUMNS) + ["unit"])
    for _, r in table.iterrows():
        w.writerow([r["Metric"], f"{r['Conventional Method']:.6f}", f"{r['Proposed Model']:.6f}",
                    f"{r['Improvement (%)']:.6f}", r["unit"]])
    return buf.getvalue()


def _hours(x: Fraction) -> float:
    return round(float(x), 9)


def gantt_csv(sol: ScheduleSolution) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["task", "segment", "start", "end"])
    for s in sol.segments:
        w.writerow([s.task, s.index, f"{float(s.start):.6f}", f"{float(s.end):.6f}"])
    return buf.getvalue()


def solution_to_dict(inst: SchedulingInstance, sol: ScheduleSolution) -> dict:
    b = objective(inst, sol)
    m = metrics(inst, sol)
    return {
        "solver": sol.solver,
        "optimal": sol.optimal,
        "sequence": list(sol.sequence),
        "segments": [{"task": s.task, "segment": s.index, "start": _hours(s.start), "end": _hours(s.end),
                      "processing": _hours(s.length)} for s in sol.segments],
        "preempted": {str(k): v for k, v in sol.preempted.items()},
        "ranks": {str(k): v for k, v in sol.ranks.items()},
        "objective": {"c_max": _hours(b.c_max), "f_total": _hours(b.f_total), "c_total": _hours(b.c_total),
                      "d_total": _hours(b.d_total), "d_total_raw": _hours(b.d_total_raw), "z": _hours(b.z)},
        "metrics": {"d_total_metric": _hours(m["d_total_metric"]), "e_eff_pct": _hours(m["e_eff"])},
    }


def solution_json(inst: SchedulingInstance, sol: ScheduleSolution) -> str:
    return json.dumps(solution_to_dict(inst, sol), indent=2, sort_keys=True) + "\n"
