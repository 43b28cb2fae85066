"""Last-mile route subproblem for one satellite-bound service.

A single vehicle leaves the satellite at the service's arrival time and visits
every shipped order once.  Cost = route length (first leg plus inter-order
legs; the closing leg back to the satellite is not charged) plus weighted
tardiness days, either linear (w*T) or quadratic (w*T^2).

Three exact solvers are provided:

* :func:`solve_route_dp` -- bitmask dynamic program over (visited set, last
  order) whose state value is a Pareto front of (length so far, penalty so far).
* :func:`solve_route_milp` -- the open-route MILP with MTZ-style time
  propagation, solved through :mod:`intermodal_lbbd.backend`.
* :func:`brute_force_route` -- permutation enumeration, used as a test oracle.

Among equal-cost routes the lexicographically smallest order-id sequence wins.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

from . import backend as bk
from .costs import Penalty, penalty_cost, tardiness_days
from .instance import Instance

_EPS = 1e-9
BRUTE_FORCE_MAX = 9


class RouteSizeError(ValueError):
    pass


@dataclass(frozen=True)
class RouteTask:
    satellite: str
    release: float
    order_ids: tuple[str, ...]
    due: tuple[float, ...]
    weight: tuple[float, ...]
    from_satellite: tuple[float, ...]
    legs: tuple[tuple[float, ...], ...]
    penalty: Penalty = Penalty.LINEAR

    def __post_init__(self):
        if not self.order_ids:
            raise ValueError("route task needs at least one order")
        if self.release < 0:
            raise ValueError("release must be nonnegative")
        # canonical order: sorted ids, so index order == lexicographic id order
        perm = sorted(range(len(self.order_ids)), key=lambda i: self.order_ids[i])
        if perm != list(range(len(perm))):
            set_ = object.__setattr__
            set_(self, "order_ids", tuple(self.order_ids[i] for i in perm))
            set_(self, "due", tuple(self.due[i] for i in perm))
            set_(self, "weight", tuple(self.weight[i] for i in perm))
            set_(self, "from_satellite", tuple(self.from_satellite[i] for i in perm))
            set_(self, "legs", tuple(tuple(self.legs[i][j] for j in perm) for i in perm))

    @property
    def size(self) -> int:
        return len(self.order_ids)

    @classmethod
    def from_instance(cls, instance: Instance, service_id: str, order_ids: Sequence[str],
                      penalty: Penalty = Penalty.LINEAR) -> "RouteTask":
        s = instance.service[service_id]
        ids = sorted(order_ids)
        d = instance.distances
        return cls(
            satellite=s.destination,
            release=float(s.arrival),
            order_ids=tuple(ids),
            due=tuple(float(instance.order[n].due_time) for n in ids),
            weight=tuple(float(instance.order[n].weight) for n in ids),
            from_satellite=tuple(d.from_satellite(s.destination, n) for n in ids),
            legs=tuple(tuple(d.between(n, m) for m in ids) for n in ids),
            penalty=penalty,
        )

    def to_dict(self) -> dict:
        return {"satellite": self.satellite, "release": self.release, "orders": list(self.order_ids),
                "due": list(self.due), "weight": list(self.weight),
                "from_satellite": list(self.from_satellite), "legs": [list(r) for r in self.legs],
                "penalty": self.penalty.value}


@dataclass
class RouteSolution:
    sequence: list[str]
    delivery_times: dict[str, float]
    tardiness: dict[str, int]
    route_cost: float
    objective: float
    # proven lower bound on the optimum (== objective when exact)
    bound: float = field(default=math.nan)
    exact: bool = True
    method: str = ""

    def __post_init__(self):
        if math.isnan(self.bound):
            self.bound = self.objective


def evaluate_sequence(task: RouteTask, order: Sequence[int], method: str = "") -> RouteSolution:
    """Delivery times and cost of visiting task orders in the index sequence ``order``."""
    t = task.release
    length = 0.0
    pen = 0.0
    times, late = {}, {}
    prev = None
    for i in order:
        leg = task.from_satellite[i] if prev is None else task.legs[prev][i]
        length += leg
        t += leg
        days = tardiness_days(t, task.due[i])
        pen += penalty_cost(days, task.weight[i], task.penalty)
        nid = task.order_ids[i]
        times[nid] = t
        late[nid] = days
        prev = i
    return RouteSolution([task.order_ids[i] for i in order], times, late, length, length + pen,
                         method=method)


def brute_force_route(task: RouteTask) -> RouteSolution:
    """Exhaustive minimum over all visiting orders (test oracle, at most 9 orders)."""
    if task.size > BRUTE_FORCE_MAX:
        raise RouteSizeError(f"brute force limited to {BRUTE_FORCE_MAX} orders, got {task.size}")
    best = None
    # permutations() of range(n) is emitted in lexicographic order, so the
    # first strict improvement rule keeps the smallest sequence among ties
    for perm in itertools.permutations(range(task.size)):
        sol = evaluate_sequence(task, perm, "brute_force")
        if best is None or sol.objective < best.objective - _EPS:
            best = sol
    return best


def _penalty_at(task: RouteTask, i: int, t: float) -> float:
    return penalty_cost(tardiness_days(t, task.due[i]), task.weight[i], task.penalty)


def _insert(front: list, label: tuple) -> None:
    cost, pen, seq = label
    keep = []
    for f in front:
        fc, fp, fs = f
        if fc <= cost + _EPS and fp <= pen + _EPS:
            same = abs(fc - cost) <= _EPS and abs(fp - pen) <= _EPS
            if not same or fs <= seq:
                return
        if not (cost <= fc + _EPS and pen <= fp + _EPS):
            keep.append(f)
    keep.append(label)
    front[:] = keep


def _nearest_neighbour(task: RouteTask) -> RouteSolution:
    left = set(range(task.size))
    cur = min(left, key=lambda j: (task.from_satellite[j], j))
    seq = [cur]
    left.remove(cur)
    while left:
        cur = min(left, key=lambda j: (task.legs[cur][j], j))
        seq.append(cur)
        left.remove(cur)
    return evaluate_sequence(task, seq)


def solve_route_dp(task: RouteTask) -> RouteSolution:
    """Exact bitmask DP with Pareto labels (length, penalty) per (visited, last).

    A label with strictly larger length or penalty than another label at the
    same state can never end in a cheaper route, because delivery times (and
    hence penalties) are nondecreasing in the time already spent.
    """
    n = task.size
    full = (1 << n) - 1
    # cheapest way into each order; bounds the length still to be driven
    min_in = [min([task.from_satellite[j]] + [task.legs[i][j] for i in range(n) if i != j])
              for j in range(n)]
    remaining = [sum(min_in[j] for j in range(n) if not mask >> j & 1) for mask in range(full + 1)]
    incumbent = _nearest_neighbour(task).objective + _EPS
    fronts: dict[tuple[int, int], list] = {}
    for i in range(n):
        c = task.from_satellite[i]
        fronts[(1 << i, i)] = [(c, _penalty_at(task, i, task.release + c), (i,))]
    for mask in range(1, full + 1):
        for last in range(n):
            front = fronts.get((mask, last))
            if not front or mask == full:
                continue
            for j in range(n):
                if mask >> j & 1:
                    continue
                leg = task.legs[last][j]
                nmask = mask | 1 << j
                key = (nmask, j)
                dest = None
                for cost, pen, seq in front:
                    nc = cost + leg
                    npen = pen + _penalty_at(task, j, task.release + nc)
                    if nc + npen + remaining[nmask] > incumbent:
                        continue
                    if dest is None:
                        dest = fronts.setdefault(key, [])
                    _insert(dest, (nc, npen, seq + (j,)))
            # state fully expanded; free memory
            del fronts[(mask, last)]
    best = None
    for last in range(n):
        for cost, pen, seq in fronts.get((full, last), ()):
            val = cost + pen
            if best is None or val < best[0] - _EPS or (abs(val - best[0]) <= _EPS and seq < best[1]):
                best = (val, seq)
    return evaluate_sequence(task, best[1], "dp")


def build_route_model(task: RouteTask) -> tuple[bk.Model, dict]:
    """Open-route MILP: first/last indicators, successor arcs, big-M time propagation."""
    m = bk.Model("route")
    n = task.size
    big_m = task.release + sum(task.from_satellite) + sum(map(sum, task.legs)) + 1.0
    first = [m.binary(f"first[{i}]") for i in range(n)]
    last = [m.binary(f"last[{i}]") for i in range(n)]
    arc = {(i, j): m.binary(f"arc[{i},{j}]") for i in range(n) for j in range(n) if i != j}
    C = [m.continuous(f"C[{i}]", 0.0, big_m) for i in range(n)]
    cmax = m.continuous("Cmax")
    zeta = m.continuous("zeta")
    m.add_constr(bk.quicksum(first) == 1, "one_first")
    m.add_constr(bk.quicksum(last) == 1, "one_last")
    for i in range(n):
        m.add_constr(bk.quicksum(arc[i, j] for j in range(n) if j != i) + last[i] == 1, f"out[{i}]")
        m.add_constr(bk.quicksum(arc[j, i] for j in range(n) if j != i) + first[i] == 1, f"in[{i}]")
    for (i, j), a in arc.items():
        m.add_constr(C[i] + task.legs[i][j] - C[j] <= big_m * (1 - a), f"prop[{i},{j}]")
    for i in range(n):
        m.add_constr(task.release + task.from_satellite[i] - C[i] <= big_m * (1 - first[i]),
                     f"start[{i}]")
    m.add_constr(cmax == bk.quicksum(task.legs[i][j] * a for (i, j), a in arc.items())
                 + bk.quicksum(task.from_satellite[i] * first[i] for i in range(n)), "length")
    penalty = bk.LinExpr()
    if task.penalty is Penalty.LINEAR:
        for i in range(n):
            T = m.integer(f"T[{i}]", 0.0)
            m.add_constr(T * 24.0 >= C[i] - task.due[i], f"late[{i}]")
            penalty += T * task.weight[i]
    else:
        # one-hot delay days: sum_d tau = 1, sum_d d*tau >= (C - t)/24, cost w*d^2
        for i in range(n):
            horizon = max(0, math.ceil((big_m - task.due[i]) / 24.0))
            tau = [m.binary(f"tau[{i},{d}]") for d in range(horizon + 1)]
            m.add_constr(bk.quicksum(tau) == 1, f"onehot[{i}]")
            m.add_constr(bk.quicksum(d * 24.0 * tau[d] for d in range(horizon + 1)) >= C[i] - task.due[i],
                         f"late[{i}]")
            penalty += bk.quicksum(task.weight[i] * d * d * tau[d] for d in range(horizon + 1))
    m.add_constr(zeta >= cmax + penalty, "objective")
    m.minimize(zeta)
    return m, {"first": first, "arc": arc}


def solve_route_milp(task: RouteTask, time_limit: float = math.inf,
                     backend: str = bk.DEFAULT_BACKEND) -> RouteSolution:
    model, v = build_route_model(task)
    out = bk.solve(model, bk.Limits(time_limit=time_limit), backend)
    if not out.status.has_values:
        raise RuntimeError(f"route MILP failed: {out.status.value} {out.message}")
    vals = out.values
    n = task.size
    cur = next(i for i in range(n) if vals[v["first"][i].index] > 0.5)
    seq = [cur]
    while len(seq) < n:
        cur = next(j for j in range(n) if j != cur and vals[v["arc"][cur, j].index] > 0.5)
        seq.append(cur)
    sol = evaluate_sequence(task, seq, "milp")
    sol.exact = out.status is bk.Status.OPTIMAL
    if not sol.exact:
        sol.bound = min(sol.objective, out.best_bound if out.best_bound is not None else 0.0)
    return sol


@dataclass(frozen=True)
class RouteLimits:
    #: tasks up to this size use the DP; larger ones go to the MILP
    dp_max: int = 14
    #: hard cap for exact DP solves when no MILP fallback is allowed
    exact_cap: int = 18
    milp_fallback: bool = True
    time_limit: float = math.inf
    backend: str = bk.DEFAULT_BACKEND


def solve_route(task: RouteTask, limits: RouteLimits | None = None) -> RouteSolution:
    """Optimal route for ``task`` (DP for small tasks, MILP above ``limits.dp_max``)."""
    limits = limits or RouteLimits()
    if task.size <= limits.dp_max:
        return solve_route_dp(task)
    if limits.milp_fallback:
        return solve_route_milp(task, limits.time_limit, limits.backend)
    if task.size <= limits.exact_cap:
        return solve_route_dp(task)
    raise RouteSizeError(f"{task.size} orders exceed the exact-solve cap of {limits.exact_cap}")
