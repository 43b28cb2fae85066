"""Seeded random instances following the benchmark family.

The random stream is numpy's PCG64 bit generator seeded with the config seed,
consumed in a fixed order (accessibility, services, orders, coordinates,
cost-per-km), so the same config always yields a byte-identical instance.

Timetable: one week.  Roadway departs on days 0, 2, 4, 6 at 09:00, railway on
days 1, 3, 5 at 13:00, seaway on days 0, 2, 4 at 10:00.  A batch of services
i -> j (i a DC or intermediate hub, j any other hub) exists for every mode both
endpoints are accessible by.  Roadway reaches every hub and the intermediate
hub is reachable by every mode.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .instance import (Compartment, DistanceMatrix, Hub, HubKind, Instance, Mode, Order,
                       Service)

CAPACITY = 5000

DEPARTURE_DAYS = {Mode.ROADWAY: (0, 2, 4, 6), Mode.RAILWAY: (1, 3, 5), Mode.SEAWAY: (0, 2, 4)}
DEPARTURE_HOUR = {Mode.ROADWAY: 9, Mode.RAILWAY: 13, Mode.SEAWAY: 10}
# destination class -> (min days, max days, extra hours)
ARRIVAL_OFFSET = {HubKind.DC: (0, 3, 21), HubKind.INTERMEDIATE: (1, 3, 29),
                  HubKind.SATELLITE: (2, 5, 33)}
SERVICE_CAPACITY = {Mode.ROADWAY: (2, 4), Mode.RAILWAY: (3, 6), Mode.SEAWAY: (5, 10)}
COST_PER_HOUR = {Mode.ROADWAY: 1.0, Mode.RAILWAY: 0.8, Mode.SEAWAY: 0.6}
FIXED_COST = {Mode.ROADWAY: (200, 300), Mode.RAILWAY: (300, 500), Mode.SEAWAY: (500, 700)}
QUANTITY = (1000, 5000)
DUE_DAYS = (7, 10)
WEIGHT = (1, 10)
GRID = (0.0, 20.0)
COST_PER_KM = (0.1, 1.0)

SUITE_DCS = (2, 3)
SUITE_SATELLITES = (2, 3)
SUITE_ORDERS = (60, 80, 100, 120, 140, 160)


@dataclass(frozen=True)
class GeneratorConfig:
    n_dc: int = 2
    n_satellite: int = 2
    n_orders: int = 60
    seed: int = 0
    n_intermediate: int = 1

    def __post_init__(self):
        if min(self.n_dc, self.n_satellite, self.n_orders, self.n_intermediate) < 1:
            raise ValueError("all hub and order counts must be >= 1")


def integer(rng: np.random.Generator, lo: int, hi: int) -> int:
    """Integer-uniform on the closed range [lo, hi]."""
    return int(rng.integers(lo, hi + 1))


def uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(rng.uniform(lo, hi))


def sample_accessible(rng) -> bool:
    return bool(integer(rng, 0, 1))


def sample_arrival(rng, departure: int, dest_kind: HubKind) -> int:
    lo, hi, extra = ARRIVAL_OFFSET[dest_kind]
    return departure + 24 * integer(rng, lo, hi) + extra


def sample_service_capacity(rng, mode: Mode) -> int:
    return integer(rng, *SERVICE_CAPACITY[mode])


def sample_fixed_cost(rng, mode: Mode) -> int:
    return integer(rng, *FIXED_COST[mode])


def sample_quantity(rng) -> int:
    return integer(rng, *QUANTITY)


def sample_due_time(rng) -> int:
    return 24 * integer(rng, *DUE_DAYS)


def sample_weight(rng) -> int:
    return integer(rng, *WEIGHT)


def sample_point(rng) -> tuple[float, float]:
    return (uniform(rng, *GRID), uniform(rng, *GRID))


def sample_cost_per_km(rng) -> float:
    return uniform(rng, *COST_PER_KM)


def departure_time(mode: Mode, day: int) -> int:
    return 24 * day + DEPARTURE_HOUR[mode]


def generate(config: GeneratorConfig) -> Instance:
    rng = np.random.Generator(np.random.PCG64(config.seed))
    hubs_j = [f"J{i + 1}" for i in range(config.n_dc)]
    hubs_k = [f"K{i + 1}" for i in range(config.n_intermediate)]
    hubs_l = [f"L{i + 1}" for i in range(config.n_satellite)]
    kind = {**{h: HubKind.DC for h in hubs_j}, **{h: HubKind.INTERMEDIATE for h in hubs_k},
            **{h: HubKind.SATELLITE for h in hubs_l}}
    all_hubs = hubs_j + hubs_k + hubs_l

    access: dict[str, dict[Mode, bool]] = {}
    for h in all_hubs:
        access[h] = {Mode.ROADWAY: True}
        for m in (Mode.RAILWAY, Mode.SEAWAY):
            drawn = sample_accessible(rng)
            access[h][m] = True if kind[h] is HubKind.INTERMEDIATE else drawn

    services: list[Service] = []
    for i in hubs_j + hubs_k:
        for j in all_hubs:
            if i == j:
                continue
            for mode in Mode:
                if not (access[i][mode] and access[j][mode]):
                    continue
                for day in DEPARTURE_DAYS[mode]:
                    dep = departure_time(mode, day)
                    arr = sample_arrival(rng, dep, kind[j])
                    cap = sample_service_capacity(rng, mode)
                    fixed = sample_fixed_cost(rng, mode)
                    travel = round((arr - dep) * COST_PER_HOUR[mode], 6)
                    services.append(Service(f"s{len(services) + 1:03d}", i, j, dep, arr, mode,
                                            travel, float(fixed), cap))

    orders: list[Order] = []
    comps: list[Compartment] = []
    width = max(3, len(str(config.n_orders)))
    for k in range(config.n_orders):
        dc = hubs_j[integer(rng, 0, config.n_dc - 1)]
        oid = f"o{k + 1:0{width}d}"
        orders.append(Order(oid, dc, sample_quantity(rng), sample_due_time(rng), sample_weight(rng),
                            sample_point(rng)))
        # one fresh compartment per order, at the order's DC
        comps.append(Compartment(f"g{k + 1:0{width}d}", dc, CAPACITY))

    sat_xy = {l: sample_point(rng) for l in hubs_l}
    per_km = sample_cost_per_km(rng)
    between = {n.id: {m.id: (0.0 if n.id == m.id else math.dist(n.delivery_point, m.delivery_point) * per_km)
                      for m in orders} for n in orders}
    from_sat = {l: {n.id: math.dist(sat_xy[l], n.delivery_point) * per_km for n in orders}
                for l in hubs_l}

    hubs = [Hub(h, kind[h], sat_xy.get(h)) for h in all_hubs]
    name = f"gen_J{config.n_dc}_L{config.n_satellite}_N{config.n_orders}_seed{config.seed}"
    return Instance(tuple(hubs), tuple(orders), tuple(comps), tuple(services),
                    DistanceMatrix(between, from_sat), name=name)


def suite_configs(base_seed: int = 0) -> list[GeneratorConfig]:
    """The 24 |J| x |L| x |N| combinations, listed in benchmark-table order."""
    out = []
    for n in SUITE_ORDERS:
        for j in SUITE_DCS:
            for l in SUITE_SATELLITES:
                out.append(GeneratorConfig(j, l, n, base_seed + len(out)))
    return out


def generate_suite(base_seed: int = 0) -> list[Instance]:
    return [generate(c) for c in suite_configs(base_seed)]


# -- three-stage fixtures -------------------------------------------------------

@dataclass(frozen=True)
class ExtendedConfig:
    """Small three-stage instances: 2 DCs, 1 intermediate hub, 2 satellites.

    Each DC has two direct services to L1 (roadway early, railway later), one
    to L2 and one to K1; K1 feeds both satellites.  Every service into a
    connected-hubs satellite gets a connected-hubs twin.  Order quantities
    exceed half a compartment, so each compartment carries one order.
    """
    n_orders: int = 4
    seed: int = 0
    dc_trucks: int = 1
    satellite_vehicles: int = 1
    ch_satellites: tuple[str, ...] = ("L2",)
    max_stops: int = 3
    firstmile_max_orders: int = 2


def generate_extended(config: ExtendedConfig) -> Instance:
    from .extension import EnumerationCaps, enumerate_route_templates
    from .instance import Delivery

    rng = np.random.Generator(np.random.PCG64(config.seed))
    dcs, sats = ["J1", "J2"], ["L1", "L2"]
    xy = {h: sample_point(rng) for h in dcs + ["K1"] + sats}
    kind = {"J1": HubKind.DC, "J2": HubKind.DC, "K1": HubKind.INTERMEDIATE,
            "L1": HubKind.SATELLITE, "L2": HubKind.SATELLITE}
    services: list[Service] = []

    def add(o, d, mode, dep, days):
        arr = dep + 24 * days + integer(rng, 0, 12)
        fixed = sample_fixed_cost(rng, mode)
        cap = integer(rng, 1, 3)
        services.append(Service(f"s{len(services) + 1:03d}", o, d, dep, arr, mode,
                                round((arr - dep) * COST_PER_HOUR[mode], 6), float(fixed), cap))

    for j in dcs:
        add(j, "L1", Mode.ROADWAY, 12, 2)
        add(j, "L1", Mode.RAILWAY, 37, 2)
        add(j, "L2", Mode.ROADWAY, 12, 3)
        add(j, "K1", Mode.ROADWAY, 10, 1)
    add("K1", "L1", Mode.SEAWAY, 58, 1)
    add("K1", "L2", Mode.SEAWAY, 58, 2)
    for s in list(services):
        if s.destination in config.ch_satellites:
            services.append(Service(s.id + "c", s.origin, s.destination, s.departure, s.arrival, s.mode,
                                    s.travel_cost, s.fixed_cost, s.capacity, Delivery.CONNECTED_HUBS))

    orders, comps, pickups = [], [], {}
    for k in range(config.n_orders):
        j = dcs[integer(rng, 0, 1)]
        oid, pid = f"o{k + 1:03d}", f"p{k + 1:03d}"
        jx, jy = xy[j]
        pickups[pid] = {"coordinates": [jx + uniform(rng, -3, 3), jy + uniform(rng, -3, 3)],
                        "ready": integer(rng, 0, 4)}
        orders.append(Order(oid, j, integer(rng, 2600, 5000), 24 * integer(rng, 3, 5),
                            sample_weight(rng), sample_point(rng), pickup_point=pid))
        comps.append(Compartment(f"g{k + 1:03d}", j, CAPACITY))
    per_km = sample_cost_per_km(rng)
    between = {n.id: {m.id: (0.0 if n.id == m.id else math.dist(n.delivery_point, m.delivery_point) * per_km)
                      for m in orders} for n in orders}
    from_sat = {l: {n.id: math.dist(xy[l], n.delivery_point) * per_km for n in orders} for l in sats}
    hubs = [Hub(h, kind[h], xy[h]) for h in dcs + ["K1"] + sats]
    name = f"ext_N{config.n_orders}_seed{config.seed}"
    base = Instance(tuple(hubs), tuple(orders), tuple(comps), tuple(services),
                    DistanceMatrix(between, from_sat), name=name, extension={"pickup_points": pickups})
    caps = EnumerationCaps(max_stops=config.max_stops, firstmile_max_orders=config.firstmile_max_orders)
    fm, templates = enumerate_route_templates(base, caps)
    ext = {
        "firstmile_routes": [r.to_dict() for r in fm],
        "lastmile_templates": [t.to_dict() for t in templates],
        "resources": {"dc_trucks": {j: config.dc_trucks for j in dcs},
                      "satellite_vehicles": {l: config.satellite_vehicles for l in sats}},
        "pickup_points": pickups,
    }
    return Instance(base.hubs, base.orders, base.compartments, base.services, base.distances,
                    name=name, extension=ext)


def resource_starved_instance() -> Instance:
    """Three-stage instance with no feasible plan at all.

    One DC with a single collection truck, two orders that can only be
    picked up by separate six-hour routes released at hour 2, and one
    outbound service leaving at hour 10: the second pickup cannot finish in
    time whichever order goes first.
    """
    hubs = (Hub("J1", HubKind.DC, (0.0, 0.0)), Hub("L1", HubKind.SATELLITE, (10.0, 0.0)))
    orders = (Order("o001", "J1", 3000, 72, 1, (11.0, 0.0), pickup_point="p001"),
              Order("o002", "J1", 3000, 72, 1, (12.0, 0.0), pickup_point="p002"))
    comps = (Compartment("g001", "J1", CAPACITY), Compartment("g002", "J1", CAPACITY))
    services = (Service("s001", "J1", "L1", 10, 40, Mode.ROADWAY, 30.0, 200.0, 2),)
    dist = DistanceMatrix({"o001": {"o001": 0.0, "o002": 1.0}, "o002": {"o001": 1.0, "o002": 0.0}},
                          {"L1": {"o001": 1.0, "o002": 2.0}})
    ext = {
        "firstmile_routes": [
            {"id": "f001", "dc_hub": "J1", "orders": ["o001"], "departure": 2, "arrival": 8, "cost": 50.0},
            {"id": "f002", "dc_hub": "J1", "orders": ["o002"], "departure": 2, "arrival": 8, "cost": 50.0},
        ],
        "lastmile_templates": [],
        "resources": {"dc_trucks": {"J1": 1}, "satellite_vehicles": {"L1": 1}},
    }
    return Instance(hubs, orders, comps, services, dist, name="resource_starved", extension=ext)
