"""Three-stage variant: first-mile collection, connected-hubs last mile, squared tardiness.

Extension data lives in the instance's ``extension`` payload::

    "firstmile_routes":   [{"id": "f001", "dc_hub": "J1", "orders": ["o001", "o002"],
                            "departure": 3, "arrival": 9, "cost": 61.5}, ...],
    "lastmile_templates": [{"id": "r0001", "satellite": "L2", "orders": ["o001", "o003"]}, ...],
    "resources":          {"dc_trucks": {"J1": 2}, "satellite_vehicles": {"L2": 1}},
    "pickup_points":      {"p001": {"coordinates": [x, y], "ready": 3}, ...}   # enumeration input

Satellite-bound services carry ``delivery``: orders unloaded from a
``connected_hubs`` service are re-consolidated into last-mile templates
(at most three stops, one satellite each) driven by a limited fleet; orders
from ``hub_and_spoke`` services keep one route per service.

Scheduling semantics used throughout (subproblem, brute-force oracle and plan
evaluator):

* a selected first-mile route ``r`` runs on one of ``K_j`` trucks of its DC
  during ``[start, start + duration)``, ``start >= departure_r``, and must end
  no later than the departure of the first intermodal leg of every order it
  collects;
* a template runs on one of ``K_l`` vehicles during ``[start, start + length)``
  with ``start >= max arrival`` of the services that brought its orders; an
  order is delivered when the vehicle reaches it; the closing leg back to the
  satellite is neither costed nor scheduled.

Master additions: exact cover by first-mile routes ``f``, squared-delay bound
``Ts2``, first-mile/intermodal succession rows, and first-leg indicators
``u[n,s]`` (order ``n`` leaves its DC on ``s``).  The indicators make the
feasibility no-good exact: first-mile feasibility depends on *when* each order
leaves its DC, which the arrival-side ``h`` variables do not determine.
"""
from __future__ import annotations

import itertools
import math
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .backend import INT_TOL, OBJ_TOL, Limits, Status, quicksum, solve, Model, SolveOutcome
from .costs import Penalty, compute_gap, penalty_cost, tardiness_days
from .instance import Delivery, Instance, InstanceError, require_valid
from .lbbd import (IterationRecord, LbbdLimits, LbbdReport, MasterModel, SubproblemSolver,
                   _unrounded_gap, c_min, fixed_values)
from .monolithic import add_intermodal_block, decode_intermodal, hn, transport_cost, xn, yn
from .plan import Plan, ScheduledTemplate


class EnumerationError(RuntimeError):
    pass


class SubproblemLimitError(RuntimeError):
    pass


# -- extension data ----------------------------------------------------------

@dataclass(frozen=True)
class FirstMileRoute:
    id: str
    dc_hub: str
    orders: tuple[str, ...]
    departure: int
    arrival: int
    cost: float

    @property
    def duration(self) -> int:
        return self.arrival - self.departure

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "dc_hub": self.dc_hub, "orders": list(self.orders),
                "departure": self.departure, "arrival": self.arrival, "cost": self.cost}


@dataclass(frozen=True)
class LastMileTemplate:
    id: str
    satellite: str
    orders: tuple[str, ...]
    # arrival offsets at each stop, relative to the start
    offsets: tuple[float, ...] = ()
    length: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "satellite": self.satellite, "orders": list(self.orders)}


@dataclass(frozen=True)
class Resources:
    dc_trucks: Mapping[str, int]
    satellite_vehicles: Mapping[str, int]

    def trucks(self, j: str) -> int:
        return int(self.dc_trucks.get(j, 1))

    def vehicles(self, l: str) -> int:
        return int(self.satellite_vehicles.get(l, 1))


def make_template(instance: Instance, tid: str, satellite: str, orders: Sequence[str]) -> LastMileTemplate:
    d = instance.distances
    t, offs, prev = 0.0, [], None
    for n in orders:
        t += d.from_satellite(satellite, n) if prev is None else d.between(prev, n)
        offs.append(t)
        prev = n
    return LastMileTemplate(tid, satellite, tuple(orders), tuple(offs), t)


@dataclass
class ExtensionData:
    firstmile: list[FirstMileRoute]
    templates: list[LastMileTemplate]
    resources: Resources

    @classmethod
    def from_instance(cls, instance: Instance) -> "ExtensionData":
        ext = instance.extension or {}
        if "firstmile_routes" not in ext:
            raise InstanceError("instance has no firstmile_routes section")
        fm = [FirstMileRoute(str(r["id"]), str(r["dc_hub"]), tuple(r["orders"]), int(r["departure"]),
                             int(r["arrival"]), float(r["cost"])) for r in ext["firstmile_routes"]]
        tm = [make_template(instance, str(r["id"]), str(r["satellite"]), list(r["orders"]))
              for r in ext.get("lastmile_templates", [])]
        res = ext.get("resources", {})
        data = cls(fm, tm, Resources(dict(res.get("dc_trucks", {})), dict(res.get("satellite_vehicles", {}))))
        problems = validate_extension(instance, data)
        if problems:
            raise InstanceError("invalid extension data: " + "; ".join(problems[:5]))
        return data

    def to_payload(self) -> dict[str, Any]:
        return {"firstmile_routes": [r.to_dict() for r in self.firstmile],
                "lastmile_templates": [t.to_dict() for t in self.templates],
                "resources": {"dc_trucks": dict(self.resources.dc_trucks),
                              "satellite_vehicles": dict(self.resources.satellite_vehicles)}}


def validate_extension(instance: Instance, data: ExtensionData) -> list[str]:
    v = []
    ids = set()
    for r in data.firstmile:
        if r.id in ids:
            v.append(f"duplicate route id {r.id}")
        ids.add(r.id)
        if not r.orders:
            v.append(f"first-mile route {r.id} covers no order")
        for n in r.orders:
            if n not in instance.order:
                v.append(f"first-mile route {r.id}: unknown order {n}")
            elif instance.order[n].dc_hub != r.dc_hub:
                v.append(f"first-mile route {r.id} covers orders of another DC hub")
        if r.duration < 0:
            v.append(f"first-mile route {r.id}: arrival before departure")
    covered = {n for r in data.firstmile for n in r.orders}
    for n in instance.order:
        if n not in covered:
            v.append(f"order {n} is covered by no first-mile route")
    for t in data.templates:
        if t.id in ids:
            v.append(f"duplicate route id {t.id}")
        ids.add(t.id)
        if not 1 <= len(t.orders) <= 3:
            v.append(f"template {t.id} must have 1..3 stops")
        if len(set(t.orders)) != len(t.orders):
            v.append(f"template {t.id} repeats an order")
        if not instance.is_satellite(t.satellite):
            v.append(f"template {t.id}: {t.satellite} is not a satellite")
    for k in list(data.resources.dc_trucks.values()) + list(data.resources.satellite_vehicles.values()):
        if int(k) < 1:
            v.append("resource counts must be >= 1")
    return v


# -- enumeration ---------------------------------------------------------------

@dataclass(frozen=True)
class EnumerationCaps:
    max_stops: int = 3
    firstmile_max_orders: int = 2
    truck_capacity: int = 10000
    speed: float = 1.0            # grid units per hour
    cost_per_unit: float = 10.0
    fixed_cost: float = 20.0
    max_routes: int = 20000


def enumerate_lastmile_templates(instance: Instance, satellites: Sequence[str],
                                 caps: EnumerationCaps = EnumerationCaps()) -> list[LastMileTemplate]:
    """Every ordered tuple of 1..max_stops distinct orders, per satellite."""
    if not 1 <= caps.max_stops <= 3:
        raise ValueError("templates carry at most three orders")
    ids = sorted(instance.order)
    n = len(ids)
    count = len(satellites) * sum(math.perm(n, k) for k in range(1, min(caps.max_stops, n) + 1))
    if count > caps.max_routes:
        raise EnumerationError(f"{count} last-mile templates exceed the cap of {caps.max_routes}")
    out = []
    for l in sorted(satellites):
        for k in range(1, min(caps.max_stops, n) + 1):
            for seq in itertools.permutations(ids, k):
                out.append(make_template(instance, f"r{len(out) + 1:04d}", l, seq))
    return out


def enumerate_firstmile_routes(instance: Instance, pickups: Mapping[str, Mapping[str, Any]],
                               caps: EnumerationCaps = EnumerationCaps()) -> list[FirstMileRoute]:
    """Collection routes over orders of one DC, at most ``firstmile_max_orders`` stops.

    Pickups are visited in the shortest order (ties: lexicographic); the route
    leaves when the last of its orders is ready and ends at the DC.
    """
    out = []
    for j in instance.dcs:
        hub = instance.hub[j]
        if hub.coordinates is None:
            raise InstanceError(f"DC {j} needs coordinates for first-mile enumeration")
        orders = sorted(n.id for n in instance.orders_at(j))
        for k in range(1, min(caps.firstmile_max_orders, len(orders)) + 1):
            for subset in itertools.combinations(orders, k):
                if sum(instance.order[n].quantity for n in subset) > caps.truck_capacity:
                    continue
                best = None
                for seq in itertools.permutations(subset):
                    pts = [pickups[instance.order[n].pickup_point]["coordinates"] for n in seq]
                    dist = sum(math.dist(a, b) for a, b in zip(pts, pts[1:])) + math.dist(pts[-1], hub.coordinates)
                    if best is None or dist < best[0] - 1e-12:
                        best = (dist, seq)
                dist, _ = best
                dep = max(int(pickups[instance.order[n].pickup_point]["ready"]) for n in subset)
                dur = max(1, math.ceil(dist / caps.speed - 1e-9))
                out.append(FirstMileRoute(f"f{len(out) + 1:03d}", j, tuple(subset), dep, dep + dur,
                                          round(caps.fixed_cost + caps.cost_per_unit * dist, 6)))
                if len(out) > caps.max_routes:
                    raise EnumerationError(f"more than {caps.max_routes} first-mile routes")
    return out


def enumerate_route_templates(instance: Instance, caps: EnumerationCaps = EnumerationCaps()):
    """(first-mile routes, last-mile templates) from the instance's pickup data."""
    ext = instance.extension or {}
    pickups = ext.get("pickup_points")
    if pickups is None:
        raise InstanceError("instance has no pickup_points section")
    fm = enumerate_firstmile_routes(instance, pickups, caps)
    ch_sats = sorted({s.destination for s in instance.satellite_services
                      if s.delivery is Delivery.CONNECTED_HUBS})
    return fm, enumerate_lastmile_templates(instance, ch_sats, caps)


# -- extended master ----------------------------------------------------------

def fname(r: str) -> str:
    return f"f[{r}]"


def uname(n: str, s: str) -> str:
    return f"u[{n},{s}]"


def squared_delay_coef(instance: Instance, n: str, s: str) -> int:
    """ceil(delay days)^2 for a positive arrival-side delay, else 0."""
    delay = (instance.service[s].arrival - instance.order[n].due_time) / 24.0
    if delay <= 0:
        return 0
    k = math.ceil(delay - 1e-9)
    return k * k


@dataclass
class ExtendedMaster(MasterModel):
    data: ExtensionData | None = None

    def cost_expr(self):
        """f(x) of the extended problem: intermodal plus first-mile costs."""
        m = self.model
        return transport_cost(m, self.instance) + quicksum(r.cost * m.var(fname(r.id)) for r in self.data.firstmile)


def build_extended_master(instance: Instance, data: ExtensionData) -> ExtendedMaster:
    require_valid(instance, reachability=False)
    inst = instance
    m = Model(f"ext-master:{inst.name}")
    counts = add_intermodal_block(m, inst)
    S_L = inst.satellite_services
    z = m.continuous("z", 0.0)
    cs = {s.id: m.continuous(f"Cs[{s.id}]") for s in S_L}
    tau = {n.id: m.integer(f"Ts2[{n.id}]", 0) for n in inst.orders}
    f = {r.id: m.binary(fname(r.id)) for r in data.firstmile}
    cmin = {n.id: c_min(inst, n.id) for n in inst.orders}
    for s in S_L:                                                       # route length lower bounds
        m.add_constr(cs[s.id] >= quicksum(cmin[n.id] * m.var(hn(n.id, s.id)) for n in inst.orders),
                     f"route_lb[{s.id}]")
    counts["route_lb"] = len(S_L)
    for n in inst.orders:                                               # exact first-mile cover
        m.add_constr(quicksum(f[r.id] for r in data.firstmile if n.id in r.orders) == 1, f"cover[{n.id}]")
    counts["cover"] = len(inst.orders)
    k = 0
    for n in inst.orders:                                               # squared tardiness lower bounds
        for s in S_L:
            coef = squared_delay_coef(inst, n.id, s.id)
            if coef > 0:
                m.add_constr(tau[n.id] >= coef * m.var(hn(n.id, s.id)), f"late2_lb[{n.id},{s.id}]")
                k += 1
    counts["late2_lb"] = k
    k = 0
    for n in inst.orders:                                               # pickup before first leg
        j = n.dc_hub
        out_j = inst.delta_out(j)
        for r in data.firstmile:
            if n.id not in r.orders:
                continue
            late = [s for s in out_j if s.departure >= r.arrival]
            for g in inst.compartments_at(j):
                m.add_constr(quicksum(m.var(xn(g.id, s.id)) for s in late) + 1
                             >= f[r.id] + m.var(yn(n.id, g.id)), f"pickup_first[{n.id},{r.id},{g.id}]")
                k += 1
    counts["pickup_first"] = k
    k = 0
    for n in inst.orders:                                               # first-leg indicators
        j = n.dc_hub
        for s in inst.delta_out(j):
            u = m.binary(uname(n.id, s.id))
            for g in inst.compartments_at(j):
                m.add_constr(u + 1 >= m.var(xn(g.id, s.id)) + m.var(yn(n.id, g.id)),
                             f"leg[{n.id},{s.id},{g.id}]")
                k += 1
    counts["leg"] = k
    master = ExtendedMaster(m, inst, counts, data=data)
    m.add_constr(z >= master.cost_expr() + quicksum(n.weight * tau[n.id] for n in inst.orders)
                 + quicksum(cs.values()), "master_obj")
    counts["master_obj"] = 1
    m.minimize(z)
    counts["variables"] = m.num_vars
    counts["rows"] = m.num_rows
    return master


@dataclass
class ExtendedAssignment:
    hs_sets: dict[str, frozenset[str]]              # hub-and-spoke service -> orders
    ch: dict[str, dict[str, str]]                   # satellite -> {order: arrival service}
    firstmile: list[str]                            # selected first-mile route ids
    first_leg: dict[str, str]                       # order -> service leaving its DC
    arrival: dict[str, str]                         # order -> satellite-bound service
    values: dict[str, float]
    transport: float                                # intermodal + first-mile cost


def extract_extended_assignment(master: ExtendedMaster, outcome: SolveOutcome) -> ExtendedAssignment:
    inst = master.instance
    if not outcome.status.has_values:
        raise ValueError(f"master outcome has no solution ({outcome.status.value})")
    model = outcome.model
    for i, t in enumerate(model.vtype):
        if t.value != "C" and abs(outcome.values[i] - round(outcome.values[i])) > INT_TOL:
            raise ValueError(f"fractional value for {model.var_names[i]}")
    values = outcome.named_values()
    comps = decode_intermodal(inst, values)
    arrival, first_leg = {}, {}
    for cp in comps:
        for n in cp.orders:
            arrival[n] = cp.services[-1]
            first_leg[n] = cp.services[0]
    hs, ch = defaultdict(set), defaultdict(dict)
    for n, s in arrival.items():
        sv = inst.service[s]
        if sv.delivery is Delivery.CONNECTED_HUBS:
            ch[sv.destination][n] = s
        else:
            hs[s].add(n)
    fm = [r.id for r in master.data.firstmile if values.get(fname(r.id), 0.0) > 0.5]
    transport = (sum(s.travel_cost * values[f"V[{s.id}]"] + s.fixed_cost * values[f"v[{s.id}]"]
                     for s in inst.services)
                 + sum(r.cost for r in master.data.firstmile if r.id in fm))
    return ExtendedAssignment({s: frozenset(o) for s, o in hs.items()}, dict(ch), fm, first_leg,
                              arrival, values, transport)


# -- connected-hubs subproblem --------------------------------------------------

def schedule_firstmile(jobs: Sequence[tuple[str, int, int, float]], trucks: int,
                       node_limit: int = 2_000_000) -> dict[str, float] | None:
    """Start times for (id, release, duration, deadline) jobs on ``trucks`` machines, or None.

    Exact: some list schedule (jobs taken in a fixed order, each placed on the
    earliest-free machine at the earliest moment) is feasible whenever any
    schedule is, so a depth-first search over job orders decides feasibility.
    """
    jobs = sorted(jobs, key=lambda j: (j[3], j[1], j[0]))
    if any(r + p > d + 1e-9 for _, r, p, d in jobs):
        return None
    if trucks >= len(jobs):
        return {jid: float(r) for jid, r, _, _ in jobs}
    n = len(jobs)
    seen = set()
    nodes = 0
    starts: dict[str, float] = {}

    def dfs(mask: int, free: tuple[float, ...]) -> bool:
        nonlocal nodes
        if mask == (1 << n) - 1:
            return True
        key = (mask, free)
        if key in seen:
            return False
        seen.add(key)
        nodes += 1
        if nodes > node_limit:
            raise SubproblemLimitError("first-mile scheduling search exceeded its node limit")
        earliest = free[0]
        for i in range(n):
            if mask >> i & 1:
                continue
            _, r, p, d = jobs[i]
            if max(earliest, r) + p > d + 1e-9:
                return False    # some job can no longer meet its deadline
        for i in range(n):
            if mask >> i & 1:
                continue
            jid, r, p, d = jobs[i]
            st = max(earliest, r)
            nf = tuple(sorted(free[1:] + (st + p,)))
            starts[jid] = st
            if dfs(mask | 1 << i, nf):
                return True
        return False

    return dict(starts) if dfs(0, tuple([0.0] * trucks)) else None


@dataclass
class SatelliteSolution:
    cost: float
    schedule: list[tuple[str, float]]         # (template id, start)
    delivery_times: dict[str, float]


def _template_cost(instance: Instance, t: LastMileTemplate, start: float, penalty: Penalty) -> float:
    c = t.length
    for n, off in zip(t.orders, t.offsets):
        o = instance.order[n]
        c += penalty_cost(tardiness_days(start + off, o.due_time), o.weight, penalty)
    return c


def solve_satellite(instance: Instance, satellite: str, release: Mapping[str, float],
                    templates: Sequence[LastMileTemplate], vehicles: int,
                    penalty: Penalty = Penalty.QUADRATIC, node_limit: int = 2_000_000,
                    time_limit: float = math.inf) -> SatelliteSolution | None:
    """Cheapest exact cover of the orders in ``release`` by templates, scheduled on the fleet.

    Returns None when no template cover exists.  Penalties are nondecreasing in
    start times, so list schedules again contain an optimum; the search is a
    branch and bound over template orders, bounded below by the best cover
    with every template started at its release.
    """
    ids = sorted(release)
    if not ids:
        return SatelliteSolution(0.0, [], {})
    pos = {n: i for i, n in enumerate(ids)}
    full = (1 << len(ids)) - 1
    cand = []
    for t in sorted(templates, key=lambda t: t.id):
        if t.satellite != satellite or any(n not in pos for n in t.orders):
            continue
        rel = max(release[n] for n in t.orders)
        mask = 0
        for n in t.orders:
            mask |= 1 << pos[n]
        cand.append((t, mask, rel, _template_cost(instance, t, rel, penalty)))
    # best cover ignoring the fleet limit, for every subset
    best0 = [math.inf] * (full + 1)
    best0[0] = 0.0
    by_low = defaultdict(list)
    for c in cand:
        low = c[1] & -c[1]
        by_low[low].append(c)
    for mask in range(1, full + 1):
        low = mask & -mask
        b = math.inf
        for (_, tm, _, c0) in by_low[low]:
            if tm & mask == tm:
                b = min(b, c0 + best0[mask ^ tm])
        best0[mask] = b
    if not math.isfinite(best0[full]):
        return None
    t0 = time.perf_counter()
    incumbent = [math.inf, None]
    memo: dict[tuple[int, tuple[float, ...]], float] = {}
    nodes = 0
    trail: list[tuple[LastMileTemplate, float]] = []

    def dfs(mask: int, free: tuple[float, ...], g: float) -> None:
        nonlocal nodes
        if mask == full:
            if g < incumbent[0] - 1e-9:
                incumbent[0] = g
                incumbent[1] = list(trail)
            return
        if g + best0[full ^ mask] >= incumbent[0] - 1e-9:
            return
        key = (mask, free)
        if memo.get(key, math.inf) <= g + 1e-12:
            return
        memo[key] = g
        nodes += 1
        if nodes > node_limit or (nodes & 1023 == 0 and time.perf_counter() - t0 > time_limit):
            raise SubproblemLimitError("connected-hubs search exceeded its limit")
        for t, tm, rel, _ in cand:
            if tm & mask:
                continue
            st = max(free[0], rel)
            c = _template_cost(instance, t, st, penalty)
            trail.append((t, st))
            dfs(mask | tm, tuple(sorted(free[1:] + (st + t.length,))), g + c)
            trail.pop()

    if vehicles >= len(ids):
        # every template of any cover gets its own vehicle: starts at release
        mask, sched = full, []
        while mask:
            low = mask & -mask
            for (t, tm, rel, c0) in by_low[low]:
                if tm & mask == tm and abs(c0 + best0[mask ^ tm] - best0[mask]) <= 1e-9:
                    sched.append((t, rel))
                    mask ^= tm
                    break
        incumbent = [best0[full], sched]
    else:
        dfs(0, tuple([0.0] * vehicles), 0.0)
    times = {}
    for t, st in incumbent[1]:
        for n, off in zip(t.orders, t.offsets):
            times[n] = st + off
    return SatelliteSolution(incumbent[0], [(t.id, st) for t, st in incumbent[1]], times)


@dataclass
class ConnectedHubsResult:
    feasible: bool
    zeta: dict[str, float] = field(default_factory=dict)          # satellite -> cost
    firstmile_starts: dict[str, float] = field(default_factory=dict)
    lastmile: list[ScheduledTemplate] = field(default_factory=list)
    witness: tuple[str, str] | None = None                       # ("dc", j) or ("satellite", l)


def solve_connected_hubs_subproblem(instance: Instance, data: ExtensionData, assignment: ExtendedAssignment,
                                    penalty: Penalty = Penalty.QUADRATIC,
                                    time_limit: float = 900.0) -> ConnectedHubsResult:
    fm = {r.id: r for r in data.firstmile}
    res = ConnectedHubsResult(True)
    per_dc = defaultdict(list)
    for rid in assignment.firstmile:
        r = fm[rid]
        deadline = min(instance.service[assignment.first_leg[n]].departure for n in r.orders)
        per_dc[r.dc_hub].append((rid, r.departure, r.duration, deadline))
    for j in sorted(per_dc):
        starts = schedule_firstmile(per_dc[j], data.resources.trucks(j))
        if starts is None:
            return ConnectedHubsResult(False, witness=("dc", j))
        res.firstmile_starts.update(starts)
    for l in sorted(assignment.ch):
        rel = {n: float(instance.service[s].arrival) for n, s in assignment.ch[l].items()}
        sol = solve_satellite(instance, l, rel, data.templates, data.resources.vehicles(l), penalty,
                              time_limit=time_limit)
        if sol is None:
            return ConnectedHubsResult(False, witness=("satellite", l))
        res.zeta[l] = sol.cost
        res.lastmile.extend(ScheduledTemplate(tid, st) for tid, st in sol.schedule)
    return res


# -- cuts -----------------------------------------------------------------------

def feasibility_cut_vars(instance: Instance, data: ExtensionData, assignment: ExtendedAssignment,
                         witness: tuple[str, str] | None) -> list[str]:
    """One-valued master variables that fix the infeasible part of the subproblem.

    DC witness: the selected first-mile routes of that DC and the first legs of
    its orders.  Satellite witness: the arrival services of its connected-hubs
    orders.  Without a witness, every selected route, first leg and arrival.
    """
    fm = {r.id: r for r in data.firstmile}
    out = []
    if witness is None or witness[0] == "dc":
        for rid in assignment.firstmile:
            if witness is None or fm[rid].dc_hub == witness[1]:
                out.append(fname(rid))
        for n, s in sorted(assignment.first_leg.items()):
            if witness is None or instance.order[n].dc_hub == witness[1]:
                out.append(uname(n, s))
    if witness is None or witness[0] == "satellite":
        for l, orders in sorted(assignment.ch.items()):
            if witness is None or l == witness[1]:
                out.extend(hn(n, s) for n, s in sorted(orders.items()))
    return out


def add_feasibility_cut(master: MasterModel, ones: Sequence[str], tag: str = "") -> int:
    """No-good: at least one of the given one-valued variables must drop to 0."""
    m = master.model
    if not ones:
        raise ValueError("feasibility cut needs at least one variable")
    m.add_constr(quicksum(m.var(v) for v in ones) <= len(ones) - 1, f"nogood[{tag}]")
    master.n_cuts += 1
    return 1


def add_extended_optimality_cuts(master: ExtendedMaster, assignment: ExtendedAssignment,
                                 zeta_s: Mapping[str, float], zeta_l: Mapping[str, float],
                                 iteration: int) -> int:
    m = master.model
    terms = []
    for s in sorted(assignment.hs_sets):                                # hub-and-spoke routes
        zeta = float(zeta_s[s])
        orders = sorted(assignment.hs_sets[s])
        var = m.continuous(f"zr[{iteration},{s}]")
        m.add_constr(var >= zeta - zeta * (len(orders) - quicksum(m.var(hn(n, s)) for n in orders)),
                     f"cut[{iteration},{s}]")
        terms.append(var)
    for l in sorted(assignment.ch):                                     # connected-hubs satellites
        zeta = float(zeta_l.get(l, 0.0))
        pairs = sorted(assignment.ch[l].items())
        var = m.continuous(f"zl[{iteration},{l}]")
        m.add_constr(var >= zeta - zeta * (len(pairs) - quicksum(m.var(hn(n, s)) for n, s in pairs)),
                     f"cut_sat[{iteration},{l}]")
        terms.append(var)
    m.add_constr(m.var("z") >= quicksum(terms) + master.cost_expr(), f"cut_total[{iteration}]")
    added = len(terms) + 1
    master.n_cuts += added
    return added


# -- loop -----------------------------------------------------------------------

@dataclass
class ExtendedLimits(LbbdLimits):
    sub_time: float = 900.0


def extended_plan_values(instance: Instance, data: ExtensionData, plan: Plan) -> dict[str, float]:
    """Master x-group values (plus f and u) encoding an extended plan."""
    from .lbbd import plan_master_values
    vals = plan_master_values(instance, plan)
    for r in data.firstmile:
        vals[fname(r.id)] = 1.0 if r.id in plan.firstmile else 0.0
    for n in instance.orders:
        for s in instance.delta_out(n.dc_hub):
            vals[uname(n.id, s.id)] = 0.0
    for cp in plan.compartments:
        for n in cp.orders:
            vals[uname(n, cp.services[0])] = 1.0
    return vals


def ext_fixed_values(values: Mapping[str, float]) -> dict[str, float]:
    out = fixed_values(values)
    out.update({k: v for k, v in values.items() if k.startswith(("f[", "u["))})
    return out


def run_extended_lbbd(instance: Instance, limits: ExtendedLimits | None = None,
                      data: ExtensionData | None = None, keep_master: bool = False,
                      on_iteration=None) -> LbbdReport:
    limits = limits or ExtendedLimits()
    t0 = time.perf_counter()
    data = data or ExtensionData.from_instance(instance)
    master = build_extended_master(instance, data)
    rep = LbbdReport("lbbd-ext", Status.OPTIMAL, meta={"backend": limits.backend, "counts": master.counts,
                                                       "limits": {"master_time": limits.master_time,
                                                                  "sub_time": limits.sub_time,
                                                                  "max_iters": limits.max_iters,
                                                                  "gap": limits.gap}})
    lb, ub = -math.inf, math.inf
    cuts = fcuts = 0
    with SubproblemSolver(instance, limits.route, Penalty.QUADRATIC, limits.workers) as sub:
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
                rep.status = Status.INFEASIBLE
                rep.stop_reason = "globally infeasible" if fcuts else "infeasible"
                break
            if out.best_bound is not None:
                lb = max(lb, out.best_bound)
            if not out.status.has_values:
                rep.stop_reason = "time"
                break
            z_hat = out.objective
            asg = extract_extended_assignment(master, out)
            rep.snapshots.append(ext_fixed_values(asg.values))
            ts = time.perf_counter()
            chres = solve_connected_hubs_subproblem(instance, data, asg, Penalty.QUADRATIC, limits.sub_time)
            if not chres.feasible:
                ones = feasibility_cut_vars(instance, data, asg, chres.witness)
                fcuts += add_feasibility_cut(master, ones, str(r))
                rec = IterationRecord(r, z_hat, out.best_bound, lb, asg.transport, math.nan, math.nan,
                                      ub, compute_gap(lb, ub) if math.isfinite(ub) else None, cuts + fcuts,
                                      0, out.wall_time, time.perf_counter() - ts, out.status.value,
                                      f"feasibility cut ({chres.witness[0]} {chres.witness[1]})")
                rep.trace.append(rec)
                if on_iteration:
                    on_iteration(rec)
                if r == limits.max_iters:
                    rep.stop_reason = "iterations"
                continue
            sols = sub.solve(asg.hs_sets)
            eps = sum(s.objective for s in sols.values()) + sum(chres.zeta.values())
            sub_time = time.perf_counter() - ts
            cand = asg.transport + eps
            if cand < ub - 1e-9:
                ub = cand
                comps = decode_intermodal(instance, asg.values)
                rep.plan = Plan(comps, {s: list(sol.sequence) for s, sol in sols.items()}, Penalty.QUADRATIC,
                                sorted(asg.firstmile), dict(chres.firstmile_starts), list(chres.lastmile))
            rec = IterationRecord(r, z_hat, out.best_bound, lb, asg.transport, eps, cand, ub,
                                  compute_gap(lb, ub), cuts + fcuts, len(sols) + len(chres.zeta),
                                  out.wall_time, sub_time, out.status.value)
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
            cuts += add_extended_optimality_cuts(master, asg, bounds, chres.zeta, r)
            rec.cuts = cuts + fcuts
    rep.time = time.perf_counter() - t0
    rep.meta.update({"iterations": len(rep.trace), "optimality_cuts": cuts, "feasibility_cuts": fcuts})
    if math.isfinite(ub):
        rep.upper_bound = ub
        rep.lower_bound = min(lb, ub)
        if rep.status is Status.OPTIMAL and rep.stop_reason != "converged" and ub - lb > OBJ_TOL:
            rep.status = Status.FEASIBLE_TIME_LIMIT if rep.stop_reason == "time" else Status.FEASIBLE
    else:
        rep.lower_bound = lb if math.isfinite(lb) else None
        if rep.status is Status.OPTIMAL:
            rep.status = Status.NO_SOLUTION_TIME_LIMIT
    if keep_master:
        rep.master = master
    return rep
