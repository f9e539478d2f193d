"""Instance and solution types for single-crew maintenance scheduling.

All times, distances and costs are exact :class:`fractions.Fraction` values
so that constraint checks never suffer rounding. Times are absolute clock
hours; release times in the instance are offsets from the start of the
working day ``S``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

DEPOT = None  # operations base, first predecessor and last successor


class InstanceError(ValueError):
    pass


class Infeasible(RuntimeError):
    """No schedule satisfies the constraints; ``reason`` explains why."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


@dataclass(frozen=True)
class VehicleSpec:
    id: str
    fuel_efficiency: Fraction  # km per liter
    emission_factor: Fraction  # kg CO2 per liter

    def __post_init__(self):
        if self.fuel_efficiency <= 0 or self.emission_factor <= 0:
            raise InstanceError(f"vehicle {self.id!r}: efficiency and emission factor must be positive")


@dataclass(frozen=True)
class TaskSpec:
    id: int
    processing_time: Fraction
    fuel: Fraction
    co2: Fraction
    location: tuple[float, float]
    priority: int
    release_time: Fraction
    vehicle: str
    max_preemptions: int = 1

    def __post_init__(self):
        if self.processing_time <= 0:
            raise InstanceError(f"task {self.id}: processing time must be positive")
        if self.fuel < 0 or self.co2 < 0:
            raise InstanceError(f"task {self.id}: fuel and CO2 must be non-negative")
        if self.release_time < 0:
            raise InstanceError(f"task {self.id}: release time must be non-negative")
        if self.max_preemptions < 1:
            raise InstanceError(f"task {self.id}: max_preemptions must be >= 1")

    @property
    def is_emergency(self) -> bool:
        return self.release_time > 0


@dataclass(frozen=True)
class SchedulingInstance:
    tasks: tuple[TaskSpec, ...]
    dependencies: tuple[tuple[int, int], ...]
    travel_time: Mapping[tuple[int, int], Fraction]
    distance: Mapping[tuple[int, int], Fraction]
    vehicles: Mapping[str, VehicleSpec]
    start: Fraction
    end: Fraction
    weights: tuple[Fraction, Fraction, Fraction, Fraction] = (Fraction(1),) * 4
    name: str = ""
    # whose vehicle drives a leg i -> j: "destination" (task j) or "origin" (task i)
    travel_vehicle: str = "destination"

    def __post_init__(self):
        ids = [t.id for t in self.tasks]
        if not ids:
            raise InstanceError("instance has no tasks")
        if len(set(ids)) != len(ids):
            raise InstanceError("duplicate task ids")
        if not self.start < self.end:
            raise InstanceError(f"work day start {self.start} must precede end {self.end}")
        if self.travel_vehicle not in ("destination", "origin"):
            raise InstanceError(f"travel_vehicle must be 'destination' or 'origin', got {self.travel_vehicle!r}")
        if any(w < 0 for w in self.weights):
            raise InstanceError("objective weights must be non-negative")
        for t in self.tasks:
            if t.vehicle not in self.vehicles:
                raise InstanceError(f"task {t.id}: unknown vehicle {t.vehicle!r}")
        known = set(ids)
        for i, j in self.dependencies:
            if i not in known or j not in known:
                raise InstanceError(f"dependency ({i}, {j}) names an unknown task")
        cycle = find_cycle(ids, self.dependencies)
        if cycle:
            raise InstanceError("dependency cycle: " + " -> ".join(map(str, cycle)))
        for i in ids:
            for j in ids:
                if i == j:
                    continue
                if (i, j) not in self.travel_time or (i, j) not in self.distance:
                    raise InstanceError(f"missing travel entry for pair ({i}, {j})")
                if self.travel_time[(i, j)] < 0 or self.distance[(i, j)] < 0:
                    raise InstanceError(f"negative travel entry for pair ({i}, {j})")

    @property
    def ids(self) -> list[int]:
        return [t.id for t in self.tasks]

    def task(self, i: int) -> TaskSpec:
        for t in self.tasks:
            if t.id == i:
                return t
        raise KeyError(f"unknown task {i}")

    def release(self, i: int) -> Fraction:
        """Absolute earliest start of task ``i``."""
        return self.start + self.task(i).release_time

    def d(self, i, j) -> Fraction:
        if i is DEPOT or i == j:
            return Fraction(0)
        return self.travel_time[(i, j)]

    def predecessors(self, j: int) -> list[int]:
        return [a for a, b in self.dependencies if b == j]

    @property
    def big_m(self) -> Fraction:
        """Strictly larger than any time difference in a feasible schedule."""
        d_max = max(self.travel_time.values(), default=Fraction(0))
        return (self.end - self.start) + d_max + sum(t.processing_time for t in self.tasks)


def find_cycle(ids: Sequence[int], deps: Iterable[tuple[int, int]]) -> list[int] | None:
    """Kahn's topological sort; returns one cycle as a closed id path, or None."""
    succ = {i: [] for i in ids}
    indeg = {i: 0 for i in ids}
    for i, j in deps:
        succ[i].append(j)
        indeg[j] += 1
    queue = [i for i in ids if indeg[i] == 0]
    seen = 0
    while queue:
        i = queue.pop()
        seen += 1
        for j in succ[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                queue.append(j)
    if seen == len(ids):
        return None
    # Walk backwards inside the residual graph until a node repeats.
    residual = {i for i in ids if indeg[i] > 0}
    pred = {j: i for i, j in deps if i in residual and j in residual}
    node, path = next(iter(sorted(residual))), []
    while node not in path:
        path.append(node)
        node = pred[node]
    cycle = path[path.index(node):][::-1]
    return cycle + [cycle[0]]


def instance_from_dict(doc: Mapping, name: str = "") -> SchedulingInstance:
    """Build an instance from the JSON document layout (see README)."""
    try:
        vehicles = {str(v["id"]): VehicleSpec(str(v["id"]), _frac(v["fuel_efficiency"]), _frac(v["emission_factor"]))
                    for v in doc["vehicles"]}
        default_k = int(doc.get("max_preemptions_default", 1))
        tasks = tuple(
            TaskSpec(
                id=int(t["id"]),
                processing_time=_frac(t["processing_time"]),
                fuel=_frac(t.get("fuel", 0)),
                co2=_frac(t.get("co2", 0)),
                location=tuple(float(c) for c in t.get("location", (0.0, 0.0))),
                priority=int(t.get("priority", 0)),
                release_time=_frac(t.get("release_time", 0)),
                vehicle=str(t["vehicle"]),
                max_preemptions=int(t.get("max_preemptions", default_k)),
            )
            for t in doc["tasks"]
        )
        deps = tuple((int(a), int(b)) for a, b in doc.get("dependencies", []))
        times, dists = {}, {}
        for leg in doc.get("travel", []):
            key = (int(leg["from"]), int(leg["to"]))
            times[key] = _frac(leg["time"])
            dists[key] = _frac(leg["distance"])
        for (i, j) in list(times):
            times.setdefault((j, i), times[(i, j)])
            dists.setdefault((j, i), dists[(i, j)])
        wd = doc["work_day"]
        w = doc.get("weights", {})
        weights = tuple(_frac(w.get(k, 1)) for k in ("w_t", "w_f", "w_c", "w_d"))
        return SchedulingInstance(tasks, deps, times, dists, vehicles, _frac(wd["S"]), _frac(wd["E"]),
                                  weights, name or str(doc.get("name", "")),
                                  str(doc.get("travel_vehicle", "destination")))
    except (KeyError, TypeError) as exc:
        raise InstanceError(f"malformed instance document: {exc!r}") from exc


def load_instance(path) -> SchedulingInstance:
    """Read a JSON instance file (or a directory holding ``instance.json``)."""
    path = Path(path)
    if path.is_dir():
        path = path / "instance.json"
    try:
        doc = json.loads(path.read_text(encoding="utf-8"), parse_float=Fraction)
    except (OSError, json.JSONDecodeError) as exc:
        raise InstanceError(f"cannot read {path}: {exc}") from exc
    return instance_from_dict(doc, name=path.stem)


def _num(x: Fraction):
    return int(x) if x.denominator == 1 else float(x)


def instance_to_dict(inst: SchedulingInstance) -> dict:
    travel = [{"from": i, "to": j, "time": _num(inst.travel_time[(i, j)]), "distance": _num(inst.distance[(i, j)])}
              for (i, j) in sorted(inst.travel_time) if i < j]
    return {
        "name": inst.name,
        "work_day": {"S": _num(inst.start), "E": _num(inst.end)},
        "travel_vehicle": inst.travel_vehicle,
        "weights": dict(zip(("w_t", "w_f", "w_c", "w_d"), map(_num, inst.weights))),
        "vehicles": [{"id": v.id, "fuel_efficiency": _num(v.fuel_efficiency), "emission_factor": _num(v.emission_factor)}
                     for v in inst.vehicles.values()],
        "tasks": [{"id": t.id, "processing_time": _num(t.processing_time), "fuel": _num(t.fuel), "co2": _num(t.co2),
                   "location": list(t.location), "priority": t.priority, "release_time": _num(t.release_time),
                   "vehicle": t.vehicle, "max_preemptions": t.max_preemptions} for t in inst.tasks],
        "dependencies": [list(p) for p in inst.dependencies],
        "travel": travel,
    }


def leg_vehicle(inst: SchedulingInstance, i: int, j: int) -> VehicleSpec:
    """The vehicle driven from task ``i`` to task ``j`` under the instance's travel policy."""
    owner = j if inst.travel_vehicle == "destination" else i
    return inst.vehicles[inst.task(owner).vehicle]


def travel_fuel(inst: SchedulingInstance, i: int, j: int) -> Fraction:
    """Liters burnt driving from task ``i`` to task ``j``."""
    if i == j:
        return Fraction(0)
    if (i, j) not in inst.distance:
        raise KeyError(f"no travel entry for pair ({i}, {j})")
    return inst.distance[(i, j)] / leg_vehicle(inst, i, j).fuel_efficiency


def travel_co2(inst: SchedulingInstance, i: int, j: int) -> Fraction:
    return travel_fuel(inst, i, j) * leg_vehicle(inst, i, j).emission_factor


@dataclass(frozen=True)
class Segment:
    task: int
    index: int  # 1-based segment number k
    start: Fraction
    end: Fraction

    @property
    def length(self) -> Fraction:
        return self.end - self.start


@dataclass(frozen=True)
class Breakdown:
    c_max: Fraction
    f_total: Fraction
    c_total: Fraction
    d_total: Fraction
    d_total_raw: Fraction
    z: Fraction


@dataclass
class ScheduleSolution:
    """Segments in visiting order; everything else is derived from them."""

    segments: tuple[Segment, ...]
    solver: str = ""
    optimal: bool = False
    nodes: int = 0
    solver_cost: Fraction | None = None
    extra: dict = field(default_factory=dict)

    @property
    def visits(self) -> tuple[int, ...]:
        return tuple(s.task for s in self.segments)

    @property
    def sequence(self) -> tuple[int, ...]:
        """Order of first visits (the open path depot -> ... -> depot)."""
        seen = []
        for s in self.segments:
            if s.task not in seen:
                seen.append(s.task)
        return tuple(seen)

    @property
    def ranks(self) -> dict[int, int]:
        """Subtour-elimination ranks u_i = 1..n along the sequence."""
        return {t: k + 1 for k, t in enumerate(self.sequence)}

    def segments_of(self, i: int) -> list[Segment]:
        return [s for s in self.segments if s.task == i]

    def completion(self, i: int) -> Fraction:
        return max(s.end for s in self.segments_of(i))

    def first_start(self, i: int) -> Fraction:
        return min(s.start for s in self.segments_of(i))

    @property
    def preempted(self) -> dict[int, bool]:
        return {t: len(self.segments_of(t)) > 1 for t in self.sequence}

    def legs(self) -> list[tuple[int, int]]:
        """Travel legs between consecutive visits, including resumption legs."""
        v = self.visits
        return [(a, b) for a, b in zip(v, v[1:]) if a != b]


def dependency_indicators(inst: SchedulingInstance) -> dict[tuple[int, int], int]:
    return {(i, j): int((i, j) in set(inst.dependencies)) for i in inst.ids for j in inst.ids if i != j}


def objective(inst: SchedulingInstance, sol: ScheduleSolution) -> Breakdown:
    """Weighted span, fuel, CO2 and emergency-delay cost of a complete schedule."""
    if set(sol.sequence) != set(inst.ids):
        missing = sorted(set(inst.ids) - set(sol.sequence))
        raise ValueError(f"incomplete solution: tasks {missing} unscheduled")
    c_max = max(s.end for s in sol.segments)
    legs = sol.legs()
    fuel = sum((t.fuel for t in inst.tasks), Fraction(0)) + sum((travel_fuel(inst, a, b) for a, b in legs), Fraction(0))
    co2 = sum((t.co2 for t in inst.tasks), Fraction(0)) + sum((travel_co2(inst, a, b) for a, b in legs), Fraction(0))
    emergency = [t for t in inst.tasks if t.is_emergency]
    raw = sum((sol.completion(t.id) - inst.start - t.release_time for t in emergency), Fraction(0))
    clamped = sum((max(Fraction(0), sol.completion(t.id) - inst.start - t.release_time) for t in emergency), Fraction(0))
    w_t, w_f, w_c, w_d = inst.weights
    z = w_t * (c_max - inst.start) + w_f * fuel + w_c * co2 + w_d * clamped
    return Breakdown(c_max, fuel, co2, clamped, raw, z)


def metrics(inst: SchedulingInstance, sol: ScheduleSolution) -> dict[str, Fraction]:
    """Delay beyond release over all tasks and processing share of the span (percent)."""
    c_max = max(s.end for s in sol.segments)
    span = c_max - inst.start
    if span <= 0:
        raise ValueError("efficiency undefined for a zero-length schedule")
    delay = sum((max(Fraction(0), sol.completion(t.id) - inst.start - t.release_time) for t in inst.tasks), Fraction(0))
    busy = sum((t.processing_time for t in inst.tasks), Fraction(0))
    return {"d_total_metric": delay, "e_eff": busy / span * 100}


@dataclass(frozen=True)
class Violation:
    constraint: str
    message: str

    def __str__(self) -> str:
        return f"{self.constraint}: {self.message}"


def validate(inst: SchedulingInstance, sol: ScheduleSolution) -> list[Violation]:
    """Check every constraint class; an empty list means the schedule is feasible."""
    out: list[Violation] = []

    def bad(kind, msg):
        out.append(Violation(kind, msg))

    known = set(inst.ids)
    for s in sol.segments:
        if s.task not in known:
            bad("sequencing", f"segment for unknown task {s.task}")
    segs = [s for s in sol.segments if s.task in known]

    for t in inst.tasks:
        mine = [s for s in segs if s.task == t.id]
        if not mine:
            bad("processing_time", f"task {t.id} is never processed")
            continue
        for s in mine:
            if s.end - s.start <= 0:
                bad("segment_completion", f"task {t.id} segment {s.index} has non-positive length")
        total = sum((s.end - s.start for s in mine), Fraction(0))
        if total != t.processing_time:
            bad("processing_time", f"task {t.id} processed {total} h, needs {t.processing_time} h")
        if [s.index for s in mine] != list(range(1, len(mine) + 1)):
            bad("segment_completion", f"task {t.id} segments are not numbered 1..K in time order")
        if len(mine) > t.max_preemptions:
            bad("preemption_limit", f"task {t.id} has {len(mine)} segments, limit {t.max_preemptions}")
        for s in mine:
            if s.start < inst.release(t.id):
                bad("release_time", f"task {t.id} segment {s.index} starts {s.start} before release {inst.release(t.id)}")
            if s.start < inst.start or s.end > inst.end:
                bad("work_hours", f"task {t.id} segment {s.index} [{s.start}, {s.end}] outside [{inst.start}, {inst.end}]")

    done = {t.id for t in inst.tasks if any(s.task == t.id for s in segs)}
    for i, j in inst.dependencies:
        if i in done and j in done and sol.first_start(j) < sol.completion(i):
            bad("precedence", f"task {j} starts {sol.first_start(j)} before task {i} completes {sol.completion(i)}")

    for a, b in zip(segs, segs[1:]):
        if b.start < a.end:
            continue  # reported as an overlap below
        need = a.end + inst.d(a.task, b.task)
        if b.start < need:
            bad("travel_time", f"task {b.task} starts {b.start}, travel from task {a.task} allows {need}")
        if a.task == b.task:
            bad("sequencing", f"task {a.task} has back-to-back segments {a.index} and {b.index}")

    big_m = inst.big_m
    for x, a in enumerate(segs):
        for b in segs[x + 1:]:
            if a.end > b.start and b.end > a.start:
                bad("non_overlap", f"task {a.task} seg {a.index} overlaps task {b.task} seg {b.index}")
                continue
            # big-M disjunction with the ordering indicator set from the realized order
            before = a.end <= b.start
            ok1 = b.start >= a.end - big_m * (0 if before else 1)
            ok2 = a.start >= b.end - big_m * (1 if before else 0)
            if not (ok1 and ok2):
                bad("non_overlap", f"big-M disjunction fails for task {a.task} / task {b.task}")
    for x, a in enumerate(segs):
        if x and a.start < segs[x - 1].start:
            bad("sequencing", "segments are not listed in chronological order")
            break

    seq = sol.sequence
    if sorted(seq) != sorted(known):
        bad("sequencing", f"sequence {seq} does not visit every task exactly once")
    else:
        succ = {DEPOT: seq[0]}
        succ.update({a: b for a, b in zip(seq, seq[1:])})
        succ[seq[-1]] = DEPOT
        indeg = {}
        for b in succ.values():
            indeg[b] = indeg.get(b, 0) + 1
        if any(v != 1 for v in indeg.values()) or len(succ) != len(seq) + 1:
            bad("sequencing", "sequence is not a single path through the depot")
        n = len(seq)
        u = sol.ranks
        for a, b in zip(seq, seq[1:]):
            # u_b >= u_a + 1 - n(1 - y_ab) with y_ab = 1 on consecutive pairs
            if not (1 <= u[a] <= n and 1 <= u[b] <= n and u[b] >= u[a] + 1):
                bad("subtour_elimination", f"rank of task {b} does not exceed rank of task {a}")
    return out
