"""Exact branch-and-bound, greedy baseline and brute-force oracle.

Every solver builds schedules the same way: visits happen in some order,
each visit starts as early as travel, release time and dependencies allow,
and a visit may be cut short only when a pending emergency task is
released mid-segment, in which case the crew goes to that emergency next.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from fractions import Fraction

from .model import (DEPOT, Infeasible, ScheduleSolution, SchedulingInstance, Segment, objective,
                    travel_co2, travel_fuel, validate)

ZERO = Fraction(0)


@dataclass
class _Tables:
    """Per-instance constants indexed by task position."""

    ids: list[int]
    p: list[Fraction]
    release: list[Fraction]
    offset: list[Fraction]
    emergency: list[bool]
    max_k: list[int]
    priority: list[int]
    preds: list[list[int]]
    d: list[list[Fraction]]
    leg_cost: list[list[Fraction]]
    min_in_d: list[Fraction]
    min_in_cost: list[Fraction]

    @classmethod
    def build(cls, inst: SchedulingInstance) -> "_Tables":
        ids = inst.ids
        pos = {t: k for k, t in enumerate(ids)}
        n = len(ids)
        _, w_f, w_c, _ = inst.weights
        d = [[inst.d(a, b) for b in ids] for a in ids]
        leg = [[ZERO if a == b else w_f * travel_fuel(inst, a, b) + w_c * travel_co2(inst, a, b)
                for b in ids] for a in ids]
        min_d = [min((d[a][b] for a in range(n) if a != b), default=ZERO) for b in range(n)]
        min_c = [min((leg[a][b] for a in range(n) if a != b), default=ZERO) for b in range(n)]
        tasks = [inst.task(t) for t in ids]
        return cls(
            ids=ids,
            p=[t.processing_time for t in tasks],
            release=[inst.release(t.id) for t in tasks],
            offset=[t.release_time for t in tasks],
            emergency=[t.is_emergency for t in tasks],
            max_k=[t.max_preemptions for t in tasks],
            priority=[t.priority for t in tasks],
            preds=[[pos[i] for i in inst.predecessors(t.id)] for t in tasks],
            d=d, leg_cost=leg, min_in_d=min_d, min_in_cost=min_c,
        )


def _check_feasible_at_all(inst: SchedulingInstance, tab: _Tables) -> None:
    n = len(tab.ids)
    for k in range(n):
        if tab.release[k] + tab.p[k] > inst.end:
            raise Infeasible(f"task {tab.ids[k]} released at {float(tab.release[k]):g} h cannot finish "
                             f"its {float(tab.p[k]):g} h before the day ends at {float(inst.end):g} h")
    need = sum(tab.p, ZERO) + (sum(sorted(tab.min_in_d)[:n - 1], ZERO) if n > 1 else ZERO)
    if need > inst.end - inst.start:
        raise Infeasible(f"processing plus minimum travel needs {float(need):g} h but the working day "
                         f"lasts {float(inst.end - inst.start):g} h")


def _build_solution(inst, tab, visits, solver, optimal=False, nodes=0, cost=None) -> ScheduleSolution:
    counts: dict[int, int] = {}
    segs = []
    for k, s, e in visits:
        tid = tab.ids[k]
        counts[tid] = counts.get(tid, 0) + 1
        segs.append(Segment(tid, counts[tid], s, e))
    return ScheduleSolution(tuple(segs), solver=solver, optimal=optimal, nodes=nodes, solver_cost=cost)


def _finish(inst, tab, visits, solver, **kw) -> ScheduleSolution:
    sol = _build_solution(inst, tab, visits, solver, **kw)
    problems = validate(inst, sol)
    if problems:  # solver bug, never data
        raise AssertionError("solver produced an invalid schedule: " + "; ".join(map(str, problems)))
    return sol


def solve_baseline(inst: SchedulingInstance) -> ScheduleSolution:
    """Conventional-operator proxy: highest priority first, nearest on ties, never preempt.

    Idles until the next release when nothing is available.
    """
    tab = _Tables.build(inst)
    n = len(tab.ids)
    t, loc = inst.start, None
    done = [False] * n
    visits = []
    while not all(done):
        ready = [k for k in range(n) if not done[k] and all(done[q] for q in tab.preds[k])]
        released = [k for k in ready if tab.release[k] <= t]
        if not released:
            t = min(tab.release[k] for k in ready)
            continue
        d_from = (lambda k: ZERO) if loc is None else (lambda k: tab.d[loc][k])
        k = min(released, key=lambda k: (-tab.priority[k], d_from(k), tab.ids[k]))
        s = max(t + d_from(k), tab.release[k])
        e = s + tab.p[k]
        if e > inst.end:
            raise Infeasible(f"baseline cannot finish task {tab.ids[k]} before the day ends "
                             f"({float(e):g} h > {float(inst.end):g} h)")
        visits.append((k, s, e))
        done[k] = True
        t, loc = e, k
    return _finish(inst, tab, visits, "baseline", optimal=False)


def _z_of(inst, sol) -> Fraction:
    return objective(inst, sol).z


def solve_exact(inst: SchedulingInstance, time_budget: float = 60.0, allow_preemption: bool = True,
                use_baseline: bool = True) -> ScheduleSolution:
    """Depth-first branch and bound over segment visit orders.

    Children are explored by priority; a node is pruned when its lower bound
    exceeds the incumbent or an equivalent state was reached no later and no
    costlier by a lexicographically smaller visit prefix. Ties in Z go to
    the lexicographically smallest visit sequence. ``optimal`` is false when
    the budget ran out.
    """
    tab = _Tables.build(inst)
    _check_feasible_at_all(inst, tab)
    n = len(tab.ids)
    S, E = inst.start, inst.end
    w_t, w_f, w_c, w_d = inst.weights
    fixed = w_f * sum((t.fuel for t in inst.tasks), ZERO) + w_c * sum((t.co2 for t in inst.tasks), ZERO)

    best = {"key": None, "visits": None}
    if use_baseline:
        try:
            base = solve_baseline(inst)
            pos = {t: k for k, t in enumerate(tab.ids)}
            best["visits"] = [(pos[s.task], s.start, s.end) for s in base.segments]
            best["key"] = (_z_of(inst, base), tuple(s.task for s in base.segments))
        except Infeasible:
            pass

    deadline = time.monotonic() + time_budget
    stats = {"nodes": 0, "timeout": False}
    memo: dict = {}
    rem = list(tab.p)
    segs = [0] * n
    path: list[tuple[int, Fraction, Fraction]] = []

    def bound(t, loc, partial) -> Fraction:
        open_ = [k for k in range(n) if rem[k] > 0]
        if not open_:
            return partial + fixed + w_t * (t - S)
        leg_d = [tab.min_in_d[k] for k in open_]
        leg_c = [tab.min_in_cost[k] for k in open_]
        if loc is None:  # the first visit leaves the depot for free
            leg_d.remove(max(leg_d))
            leg_c.remove(max(leg_c))
        finish = t + sum((rem[k] for k in open_), ZERO) + sum(leg_d, ZERO)
        for k in open_:
            if segs[k] == 0:
                finish = max(finish, tab.release[k] + rem[k])
        delay = ZERO
        if w_d:
            for k in open_:
                if tab.emergency[k]:
                    arrive = t + (ZERO if loc is None else tab.min_in_d[k])
                    c = max(arrive, tab.release[k]) + rem[k]
                    delay += max(ZERO, c - S - tab.offset[k])
        return partial + fixed + w_t * (finish - S) + sum(leg_c, ZERO) + w_d * delay

    def dominated(t, loc, partial, forced) -> bool:
        key = (loc, tuple(rem), tuple(segs), forced)
        prefix = tuple(tab.ids[v[0]] for v in path)
        entries = memo.setdefault(key, [])
        for t2, c2, p2 in entries:
            same_time = t2 == t if allow_preemption else t2 <= t
            if same_time and c2 <= partial and p2 <= prefix:
                return True
        entries.append((t, partial, prefix))
        return False

    def ready(k) -> bool:
        return rem[k] > 0 and all(rem[q] == 0 for q in tab.preds[k])

    def dfs(t, loc, partial, forced):
        stats["nodes"] += 1
        if stats["nodes"] % 256 == 0 and time.monotonic() > deadline:
            stats["timeout"] = True
        if stats["timeout"]:
            return
        if all(r == 0 for r in rem):
            z = partial + fixed + w_t * (t - S)
            key = (z, tuple(tab.ids[v[0]] for v in path))
            if best["key"] is None or key < best["key"]:
                best["key"], best["visits"] = key, list(path)
            return
        if best["key"] is not None and bound(t, loc, partial) > best["key"][0]:
            return
        if dominated(t, loc, partial, forced):
            return
        cands = [forced] if forced is not None else [k for k in range(n) if ready(k) and k != loc]
        cands.sort(key=lambda k: (-tab.priority[k], ZERO if loc is None else tab.d[loc][k], tab.ids[k]))
        for k in cands:
            travel = ZERO if loc is None else tab.d[loc][k]
            leg = ZERO if loc is None else tab.leg_cost[loc][k]
            s = max(t + travel, tab.release[k])
            end = s + rem[k]
            if segs[k] + 1 > tab.max_k[k]:
                continue
            options = []
            if end <= E:
                options.append((end, None))
            if allow_preemption and segs[k] + 2 <= tab.max_k[k]:
                for e in range(n):
                    if (e != k and tab.emergency[e] and segs[e] == 0 and s < tab.release[e] < end
                            and all(rem[q] == 0 for q in tab.preds[e])):
                        options.append((tab.release[e], e))
            for stop, nxt in options:
                old = rem[k]
                rem[k] = old - (stop - s)
                segs[k] += 1
                gain = ZERO
                if rem[k] == 0 and tab.emergency[k]:
                    gain = w_d * max(ZERO, stop - S - tab.offset[k])
                path.append((k, s, stop))
                dfs(stop, k, partial + leg + gain, nxt)
                path.pop()
                segs[k] -= 1
                rem[k] = old

    dfs(S, None, ZERO, None)
    if best["visits"] is None:
        if stats["timeout"]:
            raise Infeasible(f"no feasible schedule found within the {time_budget:g} s budget")
        raise Infeasible("no ordering of the tasks fits the working day")
    return _finish(inst, tab, best["visits"], "exact", optimal=not stats["timeout"],
                   nodes=stats["nodes"], cost=best["key"][0])


def brute_force(inst: SchedulingInstance, max_tasks: int = 5) -> ScheduleSolution:
    """Enumerate every dependency-respecting order with earliest timing (no preemption)."""
    if len(inst.tasks) > max_tasks:
        raise ValueError(f"brute force is limited to {max_tasks} tasks, got {len(inst.tasks)}")
    tab = _Tables.build(inst)
    n = len(tab.ids)
    best_key, best_visits = None, None
    for order in itertools.permutations(range(n)):
        where = {k: x for x, k in enumerate(order)}
        if any(where[q] > where[k] for k in range(n) for q in tab.preds[k]):
            continue
        t, loc, visits, ok = inst.start, None, [], True
        for k in order:
            s = max(t + (ZERO if loc is None else tab.d[loc][k]), tab.release[k])
            e = s + tab.p[k]
            if e > inst.end:
                ok = False
                break
            visits.append((k, s, e))
            t, loc = e, k
        if not ok:
            continue
        sol = _build_solution(inst, tab, visits, "brute_force")
        key = (_z_of(inst, sol), sol.visits)
        if best_key is None or key < best_key:
            best_key, best_visits = key, visits
    if best_visits is None:
        raise Infeasible("no ordering of the tasks fits the working day")
    return _finish(inst, tab, best_visits, "brute_force", optimal=True, cost=best_key[0])
