"""Problem data: hubs, orders, compartments, timetabled services, distances.

An :class:`Instance` is immutable after construction.  Derived index sets
(``S_L``, ``delta_out``/``delta_in``, forbidden co-assignment sets, big-M) are
computed once in ``__post_init__``.

JSON layout (ids are strings, times integer hours from the horizon start)::

    {
      "hubs":         [{"id": "J1", "kind": "DC"}, {"id": "L1", "kind": "Satellite",
                       "coordinates": [3.1, 7.5]}, ...],
      "orders":       [{"id": "o001", "dc_hub": "J1", "quantity": 2300, "due_time": 192,
                        "weight": 4, "delivery_point": [1.0, 2.0]}, ...],
      "compartments": [{"id": "g001", "dc_hub": "J1", "capacity": 5000}, ...],
      "services":     [{"id": "s001", "origin": "J1", "destination": "L1",
                        "departure": 9, "arrival": 90, "mode": "roadway",
                        "travel_cost": 81.0, "fixed_cost": 250, "capacity": 3}, ...],
      "distances":    {"orders": {"o001": {"o002": 4.2, ...}, ...},
                       "satellites": {"L1": {"o001": 3.3, ...}, ...}}
    }

The three-stage extension adds ``firstmile_routes``, ``lastmile_templates``
and ``resources`` sections (see :mod:`intermodal_lbbd.extension`), an optional
``delivery`` field on satellite-bound services (``hub_and_spoke`` or
``connected_hubs``) and optional ``pickup_point``/``customs_office`` on orders.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping


class HubKind(str, Enum):
    DC = "DC"
    INTERMEDIATE = "Intermediate"
    SATELLITE = "Satellite"


class Mode(str, Enum):
    ROADWAY = "roadway"
    RAILWAY = "railway"
    SEAWAY = "seaway"


class Delivery(str, Enum):
    HUB_AND_SPOKE = "hub_and_spoke"
    CONNECTED_HUBS = "connected_hubs"


class InstanceError(ValueError):
    pass


def _int_time(value: Any, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InstanceError(f"{what}: time must be an integer, got {value!r}")
    if isinstance(value, float) and not value.is_integer():
        raise InstanceError(f"{what}: fractional time {value!r} rejected (hour granularity)")
    return int(value)


@dataclass(frozen=True)
class Hub:
    id: str
    kind: HubKind
    coordinates: tuple[float, float] | None = None


@dataclass(frozen=True)
class Order:
    id: str
    dc_hub: str
    quantity: int
    due_time: int
    weight: int
    delivery_point: tuple[float, float] = (0.0, 0.0)
    pickup_point: str | None = None
    customs_office: str | None = None


@dataclass(frozen=True)
class Compartment:
    id: str
    dc_hub: str
    capacity: int


@dataclass(frozen=True)
class Service:
    id: str
    origin: str
    destination: str
    departure: int
    arrival: int
    mode: Mode
    travel_cost: float
    fixed_cost: float
    capacity: int
    delivery: Delivery = Delivery.HUB_AND_SPOKE

    @property
    def duration(self) -> int:
        return self.arrival - self.departure


@dataclass(frozen=True)
class DistanceMatrix:
    """Last-mile leg costs: order-to-order and satellite-to-order."""

    orders: Mapping[str, Mapping[str, float]]
    satellites: Mapping[str, Mapping[str, float]]

    def between(self, n: str, m: str) -> float:
        return 0.0 if n == m else self.orders[n][m]

    def from_satellite(self, l: str, n: str) -> float:
        return self.satellites[l][n]

    def total(self) -> float:
        return (sum(sum(row.values()) for row in self.orders.values())
                + sum(sum(row.values()) for row in self.satellites.values()))


def compute_forbidden_coassignments(services: Iterable[Service]) -> dict[str, frozenset[str]]:
    """Services that may not share an intermodal route with each service.

    For every ordered pair (s, p), p is forbidden for s when p departs or
    arrives during s, leaves the destination of s before s arrives, or reaches
    the origin of s after s departs.  Inequalities are applied literally; the
    relation is not symmetrised.
    """
    services = list(services)
    out: dict[str, frozenset[str]] = {}
    for s in services:
        bad = set()
        for p in services:
            if p.id == s.id:
                continue
            overlap = (s.departure <= p.departure < s.arrival
                       or s.departure < p.arrival <= s.arrival)
            leaves_early = p.origin == s.destination and p.departure < s.arrival
            arrives_late = p.destination == s.origin and p.arrival > s.departure
            if overlap or leaves_early or arrives_late:
                bad.add(p.id)
        out[s.id] = frozenset(bad)
    return out


@dataclass(frozen=True, eq=False)
class Instance:
    hubs: tuple[Hub, ...]
    orders: tuple[Order, ...]
    compartments: tuple[Compartment, ...]
    services: tuple[Service, ...]
    distances: DistanceMatrix
    name: str = "instance"
    # three-stage extension payload, kept as plain data (see extension module)
    extension: Mapping[str, Any] | None = None

    hub: dict[str, Hub] = field(init=False, repr=False)
    order: dict[str, Order] = field(init=False, repr=False)
    service: dict[str, Service] = field(init=False, repr=False)
    forbidden: dict[str, frozenset[str]] = field(init=False, repr=False)
    big_m: float = field(init=False, repr=False)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "hubs", tuple(self.hubs))
        set_(self, "orders", tuple(self.orders))
        set_(self, "compartments", tuple(self.compartments))
        set_(self, "services", tuple(self.services))
        set_(self, "hub", {h.id: h for h in self.hubs})
        set_(self, "order", {n.id: n for n in self.orders})
        set_(self, "service", {s.id: s for s in self.services})
        set_(self, "forbidden", compute_forbidden_coassignments(self.services))
        max_arr = max((s.arrival for s in self.services), default=0)
        set_(self, "big_m", float(max_arr + self.distances.total() + 1.0))

    # -- index sets -----------------------------------------------------
    def hubs_of(self, kind: HubKind) -> list[str]:
        return [h.id for h in self.hubs if h.kind is kind]

    @property
    def dcs(self) -> list[str]:
        return self.hubs_of(HubKind.DC)

    @property
    def satellites(self) -> list[str]:
        return self.hubs_of(HubKind.SATELLITE)

    @property
    def intermediates(self) -> list[str]:
        return self.hubs_of(HubKind.INTERMEDIATE)

    def is_satellite(self, hub_id: str) -> bool:
        h = self.hub.get(hub_id)
        return h is not None and h.kind is HubKind.SATELLITE

    @property
    def satellite_services(self) -> list[Service]:
        """S_L: services arriving at a satellite hub."""
        return [s for s in self.services if self.is_satellite(s.destination)]

    def delta_out(self, hub_id: str) -> list[Service]:
        return [s for s in self.services if s.origin == hub_id]

    def delta_in(self, hub_id: str) -> list[Service]:
        return [s for s in self.services if s.destination == hub_id]

    def orders_at(self, dc: str) -> list[Order]:
        return [n for n in self.orders if n.dc_hub == dc]

    def compartments_at(self, dc: str) -> list[Compartment]:
        return [g for g in self.compartments if g.dc_hub == dc]

    @property
    def capacity(self) -> int:
        return self.compartments[0].capacity if self.compartments else 0

    def min_incoming_distance(self, n: str) -> float:
        """Cheapest leg into the delivery point of ``n`` (from any order or satellite)."""
        cands = [self.distances.between(m.id, n) for m in self.orders if m.id != n]
        cands += [self.distances.from_satellite(l, n) for l in self.satellites]
        return min(cands) if cands else 0.0

    # -- (de)serialisation ---------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        hubs = []
        for h in self.hubs:
            d: dict[str, Any] = {"id": h.id, "kind": h.kind.value}
            if h.coordinates is not None:
                d["coordinates"] = list(h.coordinates)
            hubs.append(d)
        orders = []
        for n in self.orders:
            d = {"id": n.id, "dc_hub": n.dc_hub, "quantity": n.quantity, "due_time": n.due_time,
                 "weight": n.weight, "delivery_point": list(n.delivery_point)}
            if n.pickup_point is not None:
                d["pickup_point"] = n.pickup_point
            if n.customs_office is not None:
                d["customs_office"] = n.customs_office
            orders.append(d)
        services = []
        for s in self.services:
            d = {"id": s.id, "origin": s.origin, "destination": s.destination,
                 "departure": s.departure, "arrival": s.arrival, "mode": s.mode.value,
                 "travel_cost": s.travel_cost, "fixed_cost": s.fixed_cost, "capacity": s.capacity}
            if s.delivery is not Delivery.HUB_AND_SPOKE:
                d["delivery"] = s.delivery.value
            services.append(d)
        out: dict[str, Any] = {
            "name": self.name,
            "hubs": hubs,
            "orders": orders,
            "compartments": [{"id": g.id, "dc_hub": g.dc_hub, "capacity": g.capacity}
                             for g in self.compartments],
            "services": services,
            "distances": {
                "orders": {n: dict(row) for n, row in self.distances.orders.items()},
                "satellites": {l: dict(row) for l, row in self.distances.satellites.items()},
            },
        }
        if self.extension:
            out.update(json.loads(json.dumps(self.extension)))
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=False)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Instance":
        for key in ("hubs", "orders", "compartments", "services", "distances"):
            if key not in data:
                raise InstanceError(f"missing top-level key {key!r}")
        hubs = []
        for h in data["hubs"]:
            coords = h.get("coordinates")
            hubs.append(Hub(str(h["id"]), HubKind(h["kind"]),
                            tuple(map(float, coords)) if coords is not None else None))
        orders = [
            Order(str(n["id"]), str(n["dc_hub"]), int(n["quantity"]),
                  _int_time(n["due_time"], f"order {n['id']}"), int(n["weight"]),
                  tuple(map(float, n.get("delivery_point", (0.0, 0.0)))),
                  n.get("pickup_point"), n.get("customs_office"))
            for n in data["orders"]
        ]
        comps = [Compartment(str(g["id"]), str(g["dc_hub"]), int(g["capacity"]))
                 for g in data["compartments"]]
        services = [
            Service(str(s["id"]), str(s["origin"]), str(s["destination"]),
                    _int_time(s["departure"], f"service {s['id']}"),
                    _int_time(s["arrival"], f"service {s['id']}"),
                    Mode(s.get("mode", "roadway")), float(s["travel_cost"]),
                    float(s["fixed_cost"]), int(s["capacity"]),
                    Delivery(s.get("delivery", "hub_and_spoke")))
            for s in data["services"]
        ]
        dist = data["distances"]
        distances = DistanceMatrix(
            {str(n): {str(m): float(c) for m, c in row.items()} for n, row in dist["orders"].items()},
            {str(l): {str(n): float(c) for n, c in row.items()} for l, row in dist["satellites"].items()},
        )
        ext_keys = ("firstmile_routes", "lastmile_templates", "resources", "pickup_points")
        extension = {k: data[k] for k in ext_keys if k in data} or None
        return cls(tuple(hubs), tuple(orders), tuple(comps), tuple(services), distances,
                   name=str(data.get("name", "instance")), extension=extension)

    @classmethod
    def from_json(cls, text: str) -> "Instance":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | Path) -> "Instance":
        return cls.from_json(Path(path).read_text())


# -- validation ---------------------------------------------------------------

def chain_is_consistent(instance: Instance, chain: list[str]) -> bool:
    """True when no two services of ``chain`` are forbidden co-assignments."""
    for i, s in enumerate(chain):
        fs = instance.forbidden[s]
        for t in chain[i + 1:]:
            if t in fs or s in instance.forbidden[t]:
                return False
    return True


def find_satellite_path(instance: Instance, dc: str) -> list[str] | None:
    """Depth-first search for a connected, forbidden-set-respecting chain dc -> satellite."""
    best_arrival: dict[tuple[str, frozenset], int] = {}
    by_origin = defaultdict(list)
    for s in instance.services:
        by_origin[s.origin].append(s)
    for lst in by_origin.values():
        lst.sort(key=lambda s: (s.departure, s.id))

    def dfs(node: str, chain: list[str], visited: frozenset) -> list[str] | None:
        for s in by_origin.get(node, ()):
            if s.destination in visited or not chain_is_consistent(instance, chain + [s.id]):
                continue
            if instance.is_satellite(s.destination):
                return chain + [s.id]
            key = (s.destination, visited)
            if best_arrival.get(key, math.inf) <= s.arrival:
                continue
            best_arrival[key] = s.arrival
            found = dfs(s.destination, chain + [s.id], visited | {s.destination})
            if found:
                return found
        return None

    return dfs(dc, [], frozenset({dc}))


def validate_instance(instance: Instance, reachability: bool = True) -> list[str]:
    """Return human-readable invariant violations (empty list when valid).

    ``reachability=False`` skips the DC-to-satellite path check, so models can
    be built for structurally sound but infeasible instances and let the
    solver report Infeasible.
    """
    v: list[str] = []
    kinds = {h.id: h.kind for h in instance.hubs}
    if len(kinds) != len(instance.hubs):
        v.append("duplicate hub id")
    for kind in HubKind:
        if kind is not HubKind.INTERMEDIATE and not instance.hubs_of(kind):
            v.append(f"no {kind.value} hub")
    caps = {g.capacity for g in instance.compartments}
    if len(caps) > 1:
        v.append("compartment capacities differ")
    for g in instance.compartments:
        if kinds.get(g.dc_hub) is not HubKind.DC:
            v.append(f"compartment {g.id}: dc_hub {g.dc_hub!r} is not a DC")
        if g.capacity <= 0:
            v.append(f"compartment {g.id}: nonpositive capacity")
    q = max(caps) if caps else 0
    if not instance.orders:
        v.append("no orders")
    for n in instance.orders:
        if kinds.get(n.dc_hub) is not HubKind.DC:
            v.append(f"order {n.id}: dc_hub {n.dc_hub!r} is not a DC")
        if n.quantity <= 0:
            v.append(f"order {n.id}: nonpositive quantity")
        if n.quantity > q:
            v.append(f"order {n.id}: order exceeds compartment capacity")
        if n.due_time < 0:
            v.append(f"order {n.id}: negative due time")
        if n.weight < 1:
            v.append(f"order {n.id}: weight below 1")
    for j in {n.dc_hub for n in instance.orders}:
        if kinds.get(j) is HubKind.DC and not instance.compartments_at(j):
            v.append(f"DC {j}: orders but no compartments")
    for s in instance.services:
        if s.origin not in kinds or s.destination not in kinds:
            v.append(f"service {s.id}: unknown endpoint")
            continue
        if kinds[s.origin] is HubKind.SATELLITE:
            v.append(f"service {s.id}: departs from a satellite")
        if s.origin == s.destination:
            v.append(f"service {s.id}: self-loop")
        if not s.departure < s.arrival:
            v.append(f"service {s.id}: departure not before arrival")
        if s.capacity < 1:
            v.append(f"service {s.id}: capacity below 1")
        if s.travel_cost < 0 or s.fixed_cost < 0:
            v.append(f"service {s.id}: negative cost")
    ids = [n.id for n in instance.orders]
    try:
        for n in ids:
            for m in ids:
                if instance.distances.between(n, m) < 0:
                    v.append(f"distance {n}->{m} negative")
            for l in instance.satellites:
                if instance.distances.from_satellite(l, n) < 0:
                    v.append(f"distance {l}->{n} negative")
        for n in ids:
            if instance.distances.orders.get(n, {}).get(n, 0.0) != 0.0:
                v.append(f"distance {n}->{n} nonzero")
    except KeyError as exc:
        v.append(f"missing distance entry {exc}")
    if v or not reachability:
        return v
    for j in instance.dcs:
        if find_satellite_path(instance, j) is None:
            v.append(f"DC {j}: DC unreachable to satellite")
    return v


def require_valid(instance: Instance, reachability: bool = True) -> None:
    problems = validate_instance(instance, reachability)
    if problems:
        raise InstanceError("invalid instance: " + "; ".join(problems[:5])
                            + (f" (+{len(problems) - 5} more)" if len(problems) > 5 else ""))
