"""Logic-based Benders decomposition for the two-stage problem.

The master holds the intermodal block (compartment loading, flow, forbidden
co-assignments, service counts, order-to-service links) plus three
relaxation families that keep a lower bound on last-mile cost inside it:

* ``Cs[s] >= sum_n cmin_n * h[n,s]``: every visited point is entered once,
  by its cheapest incoming leg at best;
* ``Ts[n] >= (arrival_s + c_ln - t_n)/24 * h[n,s]``: earliest delivery;
* ``z >= f(x) + sum_n w_n Ts[n] + sum_s Cs[s]``.

Each iteration solves the master, rebuilds the order sets ``N_s`` of the used
satellite-bound services, solves one exact route subproblem per service and
appends, for every ``s``::

    zr[r,s] >= zeta_s - zeta_s * (|N_s| - sum_{n in N_s} h[n,s])
    z       >= sum_s zr[r,s] + f(x)

The cut pool only grows.  The loop stops when the master's own value already
covers the evaluated cost of its solution, when the gap target is met, at the
iteration cap, or when the wall-clock budget runs out.
"""
from __future__ import annotations

import csv
import math
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping

from .backend import INT_TOL, OBJ_TOL, Limits, Model, SolveOutcome, Status, quicksum, solve
from .costs import Penalty, compute_gap
from .instance import Instance, require_valid
from .monolithic import add_intermodal_block, decode_intermodal, hn, transport_cost, xn, yn
from .plan import Plan
from .report import SolutionReport
from .routing import RouteLimits, RouteSolution, RouteTask, solve_route


@dataclass
class MasterModel:
    model: Model
    instance: Instance
    counts: dict[str, int] = field(default_factory=dict)
    n_cuts: int = 0
    iterations: int = 0


def c_min(instance: Instance, n: str) -> float:
    return instance.min_incoming_distance(n)


def tardiness_lb_coef(instance: Instance, n: str, s: str) -> float:
    sv = instance.service[s]
    return (sv.arrival + instance.distances.from_satellite(sv.destination, n)
            - instance.order[n].due_time) / 24.0


def build_master(instance: Instance) -> MasterModel:
    require_valid(instance, reachability=False)
    inst = instance
    m = Model(f"master:{inst.name}")
    counts = add_intermodal_block(m, inst)
    S_L = inst.satellite_services
    z = m.continuous("z", 0.0)
    cs = {s.id: m.continuous(f"Cs[{s.id}]") for s in S_L}
    ts = {n.id: m.integer(f"Ts[{n.id}]", 0) for n in inst.orders}
    cmin = {n.id: c_min(inst, n.id) for n in inst.orders}
    for s in S_L:                                                       # route length lower bounds
        m.add_constr(cs[s.id] >= quicksum(cmin[n.id] * m.var(hn(n.id, s.id)) for n in inst.orders),
                     f"route_lb[{s.id}]")
    counts["route_lb"] = len(S_L)
    k = 0
    for n in inst.orders:                                               # tardiness lower bounds
        for s in S_L:
            coef = tardiness_lb_coef(inst, n.id, s.id)
            if coef <= 0:
                continue    # Ts >= 0 already dominates
            m.add_constr(ts[n.id] >= coef * m.var(hn(n.id, s.id)), f"late_lb[{n.id},{s.id}]")
            k += 1
    counts["late_lb"] = k
    m.add_constr(z >= transport_cost(m, inst) + quicksum(n.weight * ts[n.id] for n in inst.orders)
                 + quicksum(cs.values()), "master_obj")
    counts["master_obj"] = 1
    m.minimize(z)
    counts["variables"] = m.num_vars
    counts["rows"] = m.num_rows
    return MasterModel(m, inst, counts)


@dataclass
class Assignment:
    # satellite-bound service -> orders it delivers
    sets: dict[str, frozenset[str]]
    values: dict[str, float]
    transport: float

    @property
    def services(self) -> list[str]:
        return sorted(self.sets)


def extract_assignment(instance: Instance, outcome: SolveOutcome) -> Assignment:
    """Order sets N_s read from the master's compartment loading and routing.

    The sets come from y (order -> compartment) and x (compartment -> final
    service), which fix exactly where each order is unloaded; h is only bounded
    from below in the master and is not trusted on its own.
    """
    if not outcome.status.has_values:
        raise ValueError(f"master outcome has no solution ({outcome.status.value})")
    model = outcome.model
    for i, t in enumerate(model.vtype):
        if t.value != "C":
            v = outcome.values[i]
            if abs(v - round(v)) > INT_TOL:
                raise ValueError(f"fractional value {v:.6g} for {model.var_names[i]}")
    values = outcome.named_values()
    sets: dict[str, set[str]] = {}
    S_L = [s.id for s in instance.satellite_services]
    for g in instance.compartments:
        if values.get(f"e[{g.id}]", 0.0) < 0.5:
            continue
        final = [s for s in S_L if values.get(xn(g.id, s), 0.0) > 0.5]
        orders = [n.id for n in instance.orders if values.get(yn(n.id, g.id), 0.0) > 0.5]
        if len(final) != 1 and orders:
            raise ValueError(f"compartment {g.id} reaches {len(final)} satellites")
        if orders:
            sets.setdefault(final[0], set()).update(orders)
    for s, orders in sets.items():
        for n in orders:
            if values.get(hn(n, s), 0.0) < 0.5:
                raise ValueError(f"h[{n},{s}] is 0 although {n} is shipped by {s}")
    transport = sum(s.travel_cost * values[f"V[{s.id}]"] + s.fixed_cost * values[f"v[{s.id}]"]
                    for s in instance.services)
    return Assignment({s: frozenset(o) for s, o in sets.items()}, values, transport)


def _solve_task(args):
    task, limits = args
    return solve_route(task, limits)


class SubproblemSolver:
    """Solves the route family of one assignment; memoises (service, order set)."""

    def __init__(self, instance: Instance, limits: RouteLimits | None = None,
                 penalty: Penalty = Penalty.LINEAR, workers: int = 1):
        self.instance = instance
        self.limits = limits or RouteLimits()
        self.penalty = penalty
        self.workers = max(1, int(workers))
        self.cache: dict[tuple[str, frozenset], RouteSolution] = {}
        self._pool = None

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def solve(self, sets: Mapping[str, frozenset[str]]) -> dict[str, RouteSolution]:
        todo = [(s, orders) for s, orders in sorted(sets.items()) if (s, orders) not in self.cache]
        tasks = [(RouteTask.from_instance(self.instance, s, sorted(o), self.penalty), self.limits)
                 for s, o in todo]
        if self.workers > 1 and len(tasks) > 1:
            if self._pool is None:
                self._pool = ProcessPoolExecutor(self.workers)
            results = list(self._pool.map(_solve_task, tasks))
        else:
            results = [_solve_task(t) for t in tasks]
        for key, sol in zip(todo, results):
            self.cache[key] = sol
        # deterministic reduction in service-id order
        return {s: self.cache[s, sets[s]] for s in sorted(sets)}


def evaluate_subproblems(instance: Instance, assignment: Assignment,
                         solver: SubproblemSolver | None = None) -> tuple[dict[str, RouteSolution], float]:
    solver = solver or SubproblemSolver(instance)
    sols = solver.solve(assignment.sets)
    return sols, sum(sol.objective for sol in sols.values())


def add_optimality_cuts(master: MasterModel, assignment: Assignment, zetas: Mapping[str, float],
                        iteration: int) -> int:
    """Append one per-service cut for each used service and one aggregating cut."""
    m = master.model
    zr = []
    for s in sorted(assignment.sets):
        zeta = float(zetas[s])
        if zeta < 0:
            raise ValueError("subproblem cost must be nonnegative")
        orders = sorted(assignment.sets[s])
        var = m.continuous(f"zr[{iteration},{s}]")
        miss = len(orders) - quicksum(m.var(hn(n, s)) for n in orders)
        m.add_constr(var >= zeta - zeta * miss, f"cut[{iteration},{s}]")
        zr.append(var)
    m.add_constr(m.var("z") >= quicksum(zr) + transport_cost(m, master.instance), f"cut_total[{iteration}]")
    added = len(zr) + 1
    master.n_cuts += added
    master.iterations = max(master.iterations, iteration)
    return added


# -- replay helpers (used by the property checks) --------------------------

MASTER_VAR_PREFIXES = ("x[", "y[", "h[", "e[", "E[", "v[", "V[")


def fixed_values(values: Mapping[str, float]) -> dict[str, float]:
    """The x-group (x, y, h, e, E, v, V) of a value snapshot."""
    return {k: v for k, v in values.items() if k.startswith(MASTER_VAR_PREFIXES)}


def plan_master_values(instance: Instance, plan: Plan) -> dict[str, float]:
    """x-group values encoding ``plan`` (every variable of the group set, 0 by default)."""
    vals: dict[str, float] = {}
    for g in instance.compartments:
        vals[f"e[{g.id}]"] = 0.0
        vals[f"E[{g.id}]"] = 0.0
        for s in instance.services:
            vals[xn(g.id, s.id)] = 0.0
    for n in instance.orders:
        for g in instance.compartments:
            if g.dc_hub == n.dc_hub:
                vals[yn(n.id, g.id)] = 0.0
        for s in instance.satellite_services:
            vals[hn(n.id, s.id)] = 0.0
    for s in instance.services:
        vals[f"v[{s.id}]"] = 0.0
        vals[f"V[{s.id}]"] = 0.0
    for cp in plan.compartments:
        if not cp.orders:
            continue
        vals[f"e[{cp.compartment}]"] = 1.0
        vals[f"E[{cp.compartment}]"] = float(sum(instance.order[n].quantity for n in cp.orders))
        for n in cp.orders:
            vals[yn(n, cp.compartment)] = 1.0
            vals[hn(n, cp.services[-1])] = 1.0
        for s in cp.services:
            vals[xn(cp.compartment, s)] = 1.0
            vals[f"v[{s}]"] = 1.0
            vals[f"V[{s}]"] += 1.0
    return vals


_CUT_ROW = re.compile(r"^(?:cut|cut_sat|cut_total|nogood)\[(\d+)[,\]]")


def master_at(master: MasterModel, iteration: int) -> MasterModel:
    """Copy of ``master`` holding only the cuts added in iterations <= ``iteration``."""
    m = master.model.copy()
    keep = []
    for row in m.rows:
        hit = _CUT_ROW.match(row.name)
        if hit is None or int(hit.group(1)) <= iteration:
            keep.append(row)
    m.rows = keep
    return replace(master, model=m)


def replay(master: MasterModel, values: Mapping[str, float], limits: Limits | None = None,
           backend: str = "highs") -> SolveOutcome:
    """Solve a copy of the master with its x-group pinned to ``values``."""
    m = master.model.copy()
    m.fix({k: v for k, v in fixed_values(values).items() if m.has_var(k)})
    return solve(m, limits, backend)


# -- the loop ------------------------------------------------------------------

@dataclass
class LbbdLimits:
    master_time: float = 900.0
    max_iters: int = 20
    gap: float = 1.0          # percent
    total_time: float = math.inf
    mip_rel_gap: float = 1e-6
    route: RouteLimits = field(default_factory=RouteLimits)
    workers: int = 1
    backend: str = "highs"


@dataclass
class IterationRecord:
    iteration: int
    master_objective: float
    master_bound: float
    lower_bound: float
    transport: float
    epsilon: float
    candidate: float
    upper_bound: float
    gap: float | None
    cuts: int
    services: int
    master_time: float
    sub_time: float
    master_status: str
    note: str = ""


@dataclass
class LbbdReport(SolutionReport):
    trace: list[IterationRecord] = field(default_factory=list)
    stop_reason: str = ""
    # x-group of each master solution, in iteration order (for replay checks)
    snapshots: list[dict[str, float]] = field(default_factory=list, repr=False)
    master: MasterModel | None = field(default=None, repr=False)

    def to_dict(self):
        d = super().to_dict()
        d["stop_reason"] = self.stop_reason
        d["iterations"] = len(self.trace)
        d["trace"] = [asdict(r) for r in self.trace]
        return d

    def write_trace_csv(self, path: str | Path) -> None:
        cols = ["iteration", "lower_bound", "upper_bound", "gap", "cuts", "master_time", "sub_time",
                "master_objective", "transport", "epsilon"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.trace:
                w.writerow([getattr(r, c) if getattr(r, c) is not None else "" for c in cols])


def _unrounded_gap(lb: float, ub: float) -> float:
    if not math.isfinite(ub) or ub <= 0:
        return math.inf if ub > lb + OBJ_TOL else 0.0
    return 100.0 * (ub - lb) / ub


def _route_plan(assignment: Assignment, sols: Mapping[str, RouteSolution], instance: Instance,
                penalty: Penalty) -> Plan:
    comps = decode_intermodal(instance, assignment.values)
    return Plan(comps, {s: list(sol.sequence) for s, sol in sols.items()}, penalty)


def run_lbbd(instance: Instance, limits: LbbdLimits | None = None, keep_master: bool = False,
             on_iteration=None) -> LbbdReport:
    limits = limits or LbbdLimits()
    t0 = time.perf_counter()
    master = build_master(instance)
    rep = LbbdReport("lbbd", Status.OPTIMAL, meta={"backend": limits.backend, "counts": master.counts,
                                                   "limits": {"master_time": limits.master_time,
                                                              "max_iters": limits.max_iters,
                                                              "gap": limits.gap,
                                                              "total_time": limits.total_time}})
    lb, ub = -math.inf, math.inf
    cuts = 0
    with SubproblemSolver(instance, limits.route, Penalty.LINEAR, limits.workers) as sub:
        for r in range(1, limits.max_iters + 1):
            remaining = limits.total_time - (time.perf_counter() - t0)
            if remaining <= 0:
                rep.stop_reason = "time"
                break
            out = solve(master.model, Limits(min(limits.master_time, remaining), limits.mip_rel_gap),
                        limits.backend)
            if out.status is Status.ERROR:
                raise RuntimeError(f"backend error: {out.message}")
            if out.status in (Status.INFEASIBLE, Status.UNBOUNDED):
                rep.status = Status.INFEASIBLE if out.status is Status.INFEASIBLE else out.status
                rep.stop_reason = "infeasible"
                break
            if out.best_bound is not None:
                lb = max(lb, out.best_bound)
            if not out.status.has_values:
                rep.stop_reason = "time"
                break
            z_hat = out.objective
            assignment = extract_assignment(instance, out)
            rep.snapshots.append(fixed_values(assignment.values))
            ts = time.perf_counter()
            sols = sub.solve(assignment.sets)
            sub_time = time.perf_counter() - ts
            eps = sum(s.objective for s in sols.values())
            cand = assignment.transport + eps
            if cand < ub - 1e-9:
                ub = cand
                rep.plan = _route_plan(assignment, sols, instance, Penalty.LINEAR)
            rec = IterationRecord(r, z_hat, out.best_bound, lb, assignment.transport, eps, cand, ub,
                                  compute_gap(lb, ub), cuts, len(sols), out.wall_time, sub_time,
                                  out.status.value)
            rep.trace.append(rec)
            if on_iteration:
                on_iteration(rec)
            if cand <= z_hat + OBJ_TOL and out.status is Status.OPTIMAL:
                rep.stop_reason = "converged"
                break
            if _unrounded_gap(lb, ub) <= limits.gap:
                rep.stop_reason = "gap"
                break
            if r == limits.max_iters:
                rep.stop_reason = "iterations"
                break
            bounds = {s: sol.bound for s, sol in sols.items()}
            cuts += add_optimality_cuts(master, assignment, bounds, r)
            rec.cuts = cuts
    rep.time = time.perf_counter() - t0
    if math.isfinite(ub):
        rep.upper_bound = ub
        rep.lower_bound = min(lb, ub)
        if rep.status is Status.OPTIMAL and rep.stop_reason != "converged" and ub - lb > OBJ_TOL:
            rep.status = Status.FEASIBLE_TIME_LIMIT if rep.stop_reason == "time" else Status.FEASIBLE
    else:
        rep.lower_bound = lb if math.isfinite(lb) else None
        if rep.status is Status.OPTIMAL:
            rep.status = Status.NO_SOLUTION_TIME_LIMIT
    rep.meta["iterations"] = len(rep.trace)
    rep.meta["cuts"] = cuts
    if keep_master:
        rep.master = master
    return rep
