"""Decoded solutions and the independent cost evaluator.

A :class:`Plan` is solver-free: which orders ride in which compartment, the
service chain of every used compartment, the visiting sequence behind every
hub-and-spoke service, and (for the three-stage extension) the selected
first-mile routes, their start times and the scheduled connected-hubs
templates.  :func:`evaluate_plan` recomputes every cost component from the
instance data alone and lists structural violations.
"""
from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .costs import Penalty, penalty_cost, tardiness_days
from .instance import Delivery, Instance

_TOL = 1e-6


@dataclass
class CompartmentPlan:
    compartment: str
    orders: list[str]
    services: list[str]


@dataclass
class ScheduledTemplate:
    template: str
    start: float


@dataclass
class Plan:
    compartments: list[CompartmentPlan]
    # hub-and-spoke: satellite-bound service id -> visiting sequence
    routes: dict[str, list[str]] = field(default_factory=dict)
    penalty: Penalty = Penalty.LINEAR
    # three-stage extension
    firstmile: list[str] = field(default_factory=list)
    firstmile_starts: dict[str, float] = field(default_factory=dict)
    lastmile: list[ScheduledTemplate] = field(default_factory=list)

    def arrival_service(self) -> dict[str, str]:
        """order id -> the satellite-bound service that delivers it."""
        return {n: cp.services[-1] for cp in self.compartments for n in cp.orders if cp.services}

    def departure_service(self) -> dict[str, str]:
        """order id -> the service that carries it out of its DC."""
        return {n: cp.services[0] for cp in self.compartments for n in cp.orders if cp.services}

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "compartments": [{"compartment": c.compartment, "orders": c.orders, "services": c.services}
                             for c in self.compartments],
            "routes": self.routes,
            "penalty": self.penalty.value,
        }
        if self.firstmile:
            out["firstmile"] = self.firstmile
            out["firstmile_starts"] = self.firstmile_starts
        if self.lastmile:
            out["lastmile"] = [{"template": t.template, "start": t.start} for t in self.lastmile]
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Plan":
        return cls(
            [CompartmentPlan(c["compartment"], list(c["orders"]), list(c["services"]))
             for c in d["compartments"]],
            {s: list(seq) for s, seq in d.get("routes", {}).items()},
            Penalty(d.get("penalty", "linear")),
            list(d.get("firstmile", [])),
            {k: float(v) for k, v in d.get("firstmile_starts", {}).items()},
            [ScheduledTemplate(t["template"], float(t["start"])) for t in d.get("lastmile", [])],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Plan":
        data = json.loads(Path(path).read_text())
        return cls.from_dict(data.get("plan", data))


@dataclass
class Evaluation:
    total: float = 0.0
    intermodal: float = 0.0
    lastmile: float = 0.0
    penalty: float = 0.0
    firstmile: float = 0.0
    delivery_times: dict[str, float] = field(default_factory=dict)
    tardiness: dict[str, int] = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict[str, Any]:
        return {"total": self.total, "firstmile": self.firstmile, "intermodal": self.intermodal,
                "lastmile": self.lastmile, "penalty": self.penalty,
                "tardiness": self.tardiness, "delivery_times": self.delivery_times,
                "violations": self.violations}


def _max_overlap(intervals: list[tuple[float, float]]) -> int:
    events = []
    for a, b in intervals:
        if b > a + _TOL:
            events.append((a, 1))
            events.append((b, -1))
    # ends sort before starts at equal times: touching intervals do not overlap
    events.sort(key=lambda e: (e[0] + (_TOL if e[1] > 0 else 0.0), e[1]))
    cur = best = 0
    for _, d in events:
        cur += d
        best = max(best, cur)
    return best


def evaluate_plan(instance: Instance, plan: Plan) -> Evaluation:
    ev = Evaluation()
    bad = ev.violations
    seen = Counter()
    comp_ids = {g.id: g for g in instance.compartments}
    use = Counter()
    used_comp = set()
    for cp in plan.compartments:
        g = comp_ids.get(cp.compartment)
        if g is None:
            bad.append(f"unknown compartment {cp.compartment}")
            continue
        if cp.compartment in used_comp:
            bad.append(f"compartment {g.id} listed twice")
        used_comp.add(cp.compartment)
        for n in cp.orders:
            seen[n] += 1
            if n not in instance.order:
                bad.append(f"unknown order {n}")
            elif instance.order[n].dc_hub != g.dc_hub:
                bad.append(f"order {n} and compartment {g.id} belong to different DCs")
        load = sum(instance.order[n].quantity for n in cp.orders if n in instance.order)
        if load > g.capacity:
            bad.append(f"compartment {g.id} overloaded ({load} > {g.capacity})")
        if not cp.orders:
            continue
        chain = cp.services
        if not chain or any(s not in instance.service for s in chain):
            bad.append(f"compartment {g.id}: invalid service chain {chain}")
            continue
        svc = [instance.service[s] for s in chain]
        if svc[0].origin != g.dc_hub:
            bad.append(f"compartment {g.id}: chain does not start at its DC")
        for a, b in zip(svc, svc[1:]):
            if a.destination != b.origin:
                bad.append(f"compartment {g.id}: chain breaks between {a.id} and {b.id}")
            if b.departure < a.arrival:
                bad.append(f"compartment {g.id}: {b.id} departs before {a.id} arrives")
            if instance.is_satellite(a.destination):
                bad.append(f"compartment {g.id}: chain continues past satellite")
        if not instance.is_satellite(svc[-1].destination):
            bad.append(f"compartment {g.id}: chain does not end at a satellite")
        for i, s in enumerate(chain):
            for t in chain[i + 1:]:
                if t in instance.forbidden[s] or s in instance.forbidden[t]:
                    bad.append(f"compartment {g.id}: forbidden co-assignment {s}/{t}")
        for s in chain:
            use[s] += 1
    for n in instance.order:
        if seen[n] != 1:
            bad.append(f"order {n} assigned to {seen[n]} compartments")
    for s, k in use.items():
        sv = instance.service[s]
        if k > sv.capacity:
            bad.append(f"service {s} carries {k} compartments > capacity {sv.capacity}")
        ev.intermodal += sv.fixed_cost + sv.travel_cost * k

    arrive = plan.arrival_service()
    shipped_by = defaultdict(set)
    for n, s in arrive.items():
        shipped_by[s].add(n)
    d = instance.distances
    ch_orders = set()
    for s, orders in shipped_by.items():
        sv = instance.service[s]
        if sv.delivery is Delivery.CONNECTED_HUBS:
            ch_orders |= orders
            continue
        seq = plan.routes.get(s)
        if seq is None or sorted(seq) != sorted(orders):
            bad.append(f"route of service {s} does not visit exactly its shipped orders")
            continue
        t = float(sv.arrival)
        prev = None
        for n in seq:
            leg = d.from_satellite(sv.destination, n) if prev is None else d.between(prev, n)
            ev.lastmile += leg
            t += leg
            ev.delivery_times[n] = t
            prev = n
    for s in plan.routes:
        if s not in shipped_by:
            bad.append(f"route given for unused service {s}")

    ext = instance.extension or {}
    if plan.firstmile or plan.lastmile or ext:
        _evaluate_extension(instance, plan, ev, ch_orders, arrive)

    for n, t in ev.delivery_times.items():
        order = instance.order[n]
        days = tardiness_days(t, order.due_time)
        ev.tardiness[n] = days
        ev.penalty += penalty_cost(days, order.weight, plan.penalty)
    ev.total = ev.firstmile + ev.intermodal + ev.lastmile + ev.penalty
    return ev


def _evaluate_extension(instance: Instance, plan: Plan, ev: Evaluation, ch_orders: set[str],
                        arrive: dict[str, str]) -> None:
    ext = instance.extension or {}
    bad = ev.violations
    routes = {r["id"]: r for r in ext.get("firstmile_routes", [])}
    templates = {r["id"]: r for r in ext.get("lastmile_templates", [])}
    res = ext.get("resources", {})
    dc_trucks = res.get("dc_trucks", {})
    sat_vehicles = res.get("satellite_vehicles", {})
    d = instance.distances

    if routes:
        cover = Counter()
        depart = plan.departure_service()
        per_dc = defaultdict(list)
        for rid in plan.firstmile:
            r = routes.get(rid)
            if r is None:
                bad.append(f"unknown first-mile route {rid}")
                continue
            ev.firstmile += float(r["cost"])
            for n in r["orders"]:
                cover[n] += 1
            start = plan.firstmile_starts.get(rid, float(r["departure"]))
            end = start + (r["arrival"] - r["departure"])
            if start < r["departure"] - _TOL:
                bad.append(f"first-mile route {rid} starts before its release")
            for n in r["orders"]:
                s = depart.get(n)
                if s is not None and end > instance.service[s].departure + _TOL:
                    bad.append(f"first-mile route {rid} ends after order {n} is shipped")
            per_dc[r["dc_hub"]].append((start, end))
        for n in instance.order:
            if cover[n] != 1:
                bad.append(f"order {n} covered by {cover[n]} first-mile routes")
        for j, iv in per_dc.items():
            if _max_overlap(iv) > int(dc_trucks.get(j, 10 ** 9)):
                bad.append(f"DC {j}: more than {dc_trucks.get(j)} first-mile routes at once")

    covered = Counter()
    per_sat = defaultdict(list)
    for st in plan.lastmile:
        r = templates.get(st.template)
        if r is None:
            bad.append(f"unknown last-mile template {st.template}")
            continue
        l, seq = r["satellite"], list(r["orders"])
        release = max((instance.service[arrive[n]].arrival for n in seq if n in arrive), default=0)
        if st.start < release - _TOL:
            bad.append(f"template {st.template} starts before its orders arrive")
        t = st.start
        prev = None
        for n in seq:
            covered[n] += 1
            if n not in ch_orders or instance.service[arrive[n]].destination != l:
                bad.append(f"template {st.template} serves order {n} not unloaded at {l}")
            leg = d.from_satellite(l, n) if prev is None else d.between(prev, n)
            ev.lastmile += leg
            t += leg
            ev.delivery_times[n] = t
            prev = n
        per_sat[l].append((st.start, t))
    for n in ch_orders:
        if covered[n] != 1:
            bad.append(f"connected-hubs order {n} covered by {covered[n]} templates")
    for l, iv in per_sat.items():
        if _max_overlap(iv) > int(sat_vehicles.get(l, 10 ** 9)):
            bad.append(f"satellite {l}: more than {sat_vehicles.get(l)} vehicles at once")
