"""The full problem as a single MILP (the baseline).

Variable names are shared with the LBBD master (``x[g,s]``, ``y[n,g]``,
``h[n,s]``, ``e[g]``, ``E[g]``, ``v[s]``, ``V[s]``) so values can be moved
between models by name.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from .backend import INT_TOL, Limits, Model, SolveOutcome, Status, quicksum, solve
from .costs import Penalty
from .instance import Instance, require_valid
from .plan import CompartmentPlan, Plan
from .report import SolutionReport


def xn(g: str, s: str) -> str:
    return f"x[{g},{s}]"


def yn(n: str, g: str) -> str:
    return f"y[{n},{g}]"


def hn(n: str, s: str) -> str:
    return f"h[{n},{s}]"


@dataclass
class MonolithicModel:
    model: Model
    instance: Instance
    counts: dict[str, int] = field(default_factory=dict)


def add_intermodal_block(m: Model, inst: Instance) -> dict[str, int]:
    """Compartment loading and routing: variables x, y, h, e, E, v, V and rows (1)-(10).

    y is created only for same-DC (order, compartment) pairs; the remaining
    pairs are fixed to zero by omission.  Returns per-family row counts.
    """
    q = inst.capacity
    S_L = inst.satellite_services
    rows = {}

    def count(tag, k=1):
        rows[tag] = rows.get(tag, 0) + k

    x = {(g.id, s.id): m.binary(xn(g.id, s.id)) for g in inst.compartments for s in inst.services}
    y = {(n.id, g.id): m.binary(yn(n.id, g.id))
         for n in inst.orders for g in inst.compartments if g.dc_hub == n.dc_hub}
    h = {(n.id, s.id): m.binary(hn(n.id, s.id)) for n in inst.orders for s in S_L}
    e = {g.id: m.binary(f"e[{g.id}]") for g in inst.compartments}
    E = {g.id: m.integer(f"E[{g.id}]", 0, q) for g in inst.compartments}
    v = {s.id: m.binary(f"v[{s.id}]") for s in inst.services}
    V = {s.id: m.integer(f"V[{s.id}]", 0, s.capacity) for s in inst.services}

    by_order = {}
    for (n, g), var in y.items():
        by_order.setdefault(n, []).append((g, var))
    for n in inst.orders:
        m.add_constr(quicksum(var for _, var in by_order.get(n.id, [])) == 1, f"assign[{n.id}]")
        count("assign")
    for g in inst.compartments:
        m.add_constr(E[g.id] == quicksum(inst.order[n].quantity * var
                                        for (n, gg), var in y.items() if gg == g.id), f"load[{g.id}]")
        count("load")
    for (n, g), var in y.items():
        m.add_constr(e[g] >= var, f"use[{n},{g}]")
        count("use")

    out_of = {h_: inst.delta_out(h_) for h_ in inst.hub}
    into = {h_: inst.delta_in(h_) for h_ in inst.hub}
    sats = inst.satellites
    for g in inst.compartments:
        j = g.dc_hub
        m.add_constr(quicksum(x[g.id, s.id] for s in out_of[j]) == e[g.id], f"leave[{g.id}]")
        count("leave")
        for i in inst.hub:
            if i == j or inst.is_satellite(i):
                continue
            if not out_of[i] and not into[i]:
                continue
            m.add_constr(quicksum(x[g.id, s.id] for s in out_of[i])
                         - quicksum(x[g.id, s.id] for s in into[i]) == 0, f"flow[{g.id},{i}]")
            count("flow")
        m.add_constr(quicksum(x[g.id, s.id] for l in sats for s in into[l]) == e[g.id],
                     f"reach[{g.id}]")
        count("reach")

    # the row x_gs + x_gt <= 1 is symmetric in (s, t), emit each pair once
    pairs = sorted({tuple(sorted((s, t))) for s, ts in inst.forbidden.items() for t in ts})
    for g in inst.compartments:
        for s, t in pairs:
            m.add_constr(x[g.id, s] + x[g.id, t] <= 1, f"forbid[{g.id},{s},{t}]")
    count("forbid", len(pairs) * len(inst.compartments))
    for s in inst.services:
        m.add_constr(V[s.id] == quicksum(x[g.id, s.id] for g in inst.compartments), f"count[{s.id}]")
        count("count")
        for g in inst.compartments:
            m.add_constr(v[s.id] >= x[g.id, s.id], f"open[{s.id},{g.id}]")
            count("open")
    for (n, g), var in y.items():
        for s in S_L:
            m.add_constr(h[n, s.id] + 1 >= x[g, s.id] + var, f"link[{n},{g},{s.id}]")
            count("link")
    return rows


def transport_cost(m: Model, inst: Instance):
    """f(x): travel plus fixed cost of the used services, as a linear expression."""
    return quicksum(s.travel_cost * m.var(f"V[{s.id}]") + s.fixed_cost * m.var(f"v[{s.id}]")
                    for s in inst.services)


def build_monolithic(instance: Instance) -> MonolithicModel:
    require_valid(instance, reachability=False)
    inst = instance
    m = Model(f"monolithic:{inst.name}")
    rows = add_intermodal_block(m, inst)
    S_L = inst.satellite_services
    N = [n.id for n in inst.orders]
    d = inst.distances
    M = inst.big_m

    def count(tag, k=1):
        rows[tag] = rows.get(tag, 0) + k

    T = {n: m.integer(f"T[{n}]", 0) for n in N}
    cmax = {}
    for s in S_L:
        l = s.destination
        h = {n: m.var(hn(n, s.id)) for n in N}
        vs = m.var(f"v[{s.id}]")
        gp = {n: m.binary(f"gp[{s.id},{n}]") for n in N}
        gm = {n: m.binary(f"gm[{s.id},{n}]") for n in N}
        gam = {(a, b): m.binary(f"gam[{s.id},{a},{b}]") for a in N for b in N if a != b}
        C = {n: m.continuous(f"C[{s.id},{n}]") for n in N}
        cmax[s.id] = m.continuous(f"Cmax[{s.id}]")
        m.add_constr(quicksum(gp.values()) == vs, f"start[{s.id}]")
        m.add_constr(quicksum(gm.values()) == vs, f"end[{s.id}]")
        count("start")
        count("end")
        for n in N:
            m.add_constr(quicksum(gam[n, b] for b in N if b != n) + gm[n] == h[n], f"out[{s.id},{n}]")
            m.add_constr(quicksum(gam[a, n] for a in N if a != n) + gp[n] == h[n], f"in[{s.id},{n}]")
            m.add_constr(gp[n] <= h[n], f"gp_h[{s.id},{n}]")
            m.add_constr(gm[n] <= h[n], f"gm_h[{s.id},{n}]")

            m.add_constr(s.arrival * h[n] + d.from_satellite(l, n) - C[n] <= M * (1 - gp[n]),
                         f"first[{s.id},{n}]")

            t_n = inst.order[n].due_time
            m.add_constr(24 * T[n] >= C[n] - t_n, f"late[{s.id},{n}]")
            count("out"), count("in"), count("gp_h"), count("gm_h"), count("first"), count("late")
        for (a, b), g in gam.items():
            m.add_constr(g <= h[a], f"gam_h1[{s.id},{a},{b}]")
            m.add_constr(g <= h[b], f"gam_h2[{s.id},{a},{b}]")
            m.add_constr(C[a] + d.between(a, b) - C[b] <= M * (1 - g), f"seq[{s.id},{a},{b}]")
            count("gam_h1"), count("gam_h2"), count("seq")
        m.add_constr(cmax[s.id] == quicksum(d.between(a, b) * g for (a, b), g in gam.items())
                     + quicksum(d.from_satellite(l, n) * gp[n] for n in N), f"cmax[{s.id}]")
        count("cmax")

    m.minimize(transport_cost(m, inst) + quicksum(cmax.values())
               + quicksum(inst.order[n].weight * T[n] for n in N))
    rows["variables"] = m.num_vars
    rows["rows"] = m.num_rows
    return MonolithicModel(m, inst, rows)


def _on(values: dict[str, float], name: str) -> bool:
    return values.get(name, 0.0) > 0.5


def decode_intermodal(inst: Instance, values: dict[str, float]) -> list[CompartmentPlan]:
    """Compartment contents and service chains from x, y values (shared with the master)."""
    out = []
    for g in inst.compartments:
        if not _on(values, f"e[{g.id}]"):
            continue
        orders = [n.id for n in inst.orders if _on(values, yn(n.id, g.id))]
        used = {s.id for s in inst.services if _on(values, xn(g.id, s.id))}
        chain = []
        node, ready = g.dc_hub, -1
        while used and not inst.is_satellite(node):
            nxt = sorted((s for s in inst.delta_out(node) if s.id in used and s.departure >= ready),
                         key=lambda s: (s.departure, s.id))
            if not nxt:
                break
            s = nxt[0]
            chain.append(s.id)
            used.discard(s.id)
            node, ready = s.destination, s.arrival
        out.append(CompartmentPlan(g.id, orders, chain))
    return out


def _decode_route(inst: Instance, values: dict[str, float], s: str, orders: set[str]) -> list[str]:
    N = [n.id for n in inst.orders]
    start = [n for n in N if _on(values, f"gp[{s},{n}]")]
    seq = []
    cur = start[0] if start else None
    while cur is not None and cur not in seq:
        seq.append(cur)
        nxt = [b for b in N if b != cur and _on(values, f"gam[{s},{cur},{b}]")]
        cur = nxt[0] if nxt else None
    if sorted(seq) != sorted(orders):
        # fall back to delivery-time order
        seq = sorted(orders, key=lambda n: (values.get(f"C[{s},{n}]", 0.0), n))
    return seq


def decode_plan(inst: Instance, outcome: SolveOutcome) -> Plan:
    values = outcome.named_values()
    comps = decode_intermodal(inst, values)
    routes = {}
    for cp in comps:
        if cp.services:
            routes.setdefault(cp.services[-1], set()).update(cp.orders)
    return Plan(comps, {s: _decode_route(inst, values, s, orders) for s, orders in sorted(routes.items())},
                Penalty.LINEAR)


def check_integral(outcome: SolveOutcome) -> None:
    model = outcome.model
    for i, t in enumerate(model.vtype):
        if t.value != "C":
            v = outcome.values[i]
            if abs(v - round(v)) > INT_TOL:
                raise ValueError(f"fractional value {v} for {model.var_names[i]}")


def solve_monolithic(instance: Instance, limits: Limits | None = None,
                     backend: str = "highs") -> SolutionReport:
    t0 = time.perf_counter()
    built = build_monolithic(instance)
    out = solve(built.model, limits, backend)
    meta = {"backend": backend, "counts": built.counts, "solver_message": out.message,
            "limits": vars(limits or Limits())}
    elapsed = time.perf_counter() - t0
    if out.status is Status.ERROR:
        raise RuntimeError(f"backend error: {out.message}")
    rep = SolutionReport("milp", out.status, out.best_bound, None, elapsed, meta=meta)
    if out.status.has_values:
        check_integral(out)
        rep.upper_bound = out.objective
        rep.plan = decode_plan(instance, out)
        if rep.lower_bound is None:
            rep.lower_bound = out.objective
    return rep
