import math
import random

import pytest

from builders import single_order
from intermodal_lbbd.backend import OBJ_TOL, Status, solve
from intermodal_lbbd.costs import compute_gap
from intermodal_lbbd.generator import GeneratorConfig, generate
from intermodal_lbbd.instance import (Compartment, DistanceMatrix, Hub, HubKind, Instance, Mode, Order,
                                      Service)
from intermodal_lbbd.lbbd import (Assignment, LbbdLimits, add_optimality_cuts, build_master, c_min,
                                  evaluate_subproblems, extract_assignment, master_at, plan_master_values,
                                  replay, run_lbbd, tardiness_lb_coef)
from intermodal_lbbd.monolithic import solve_monolithic
from intermodal_lbbd.plan import evaluate_plan
from oracles import base_oracle, enumerate_plans, micro_network, oracle_plan, plan_cost


def two_service_instance(cap=1):
    """Two 3000-unit orders, two identical services J1->L1 of capacity ``cap``."""
    hubs = (Hub("J1", HubKind.DC), Hub("L1", HubKind.SATELLITE, (0.0, 0.0)))
    orders = (Order("o1", "J1", 3000, 62, 3, (0.0, 1.0)), Order("o2", "J1", 3000, 62, 3, (1.0, 0.0)))
    comps = (Compartment("g1", "J1", 5000), Compartment("g2", "J1", 5000))
    svcs = (Service("s1", "J1", "L1", 9, 81, Mode.ROADWAY, 10.0, 0.0, cap),
            Service("s2", "J1", "L1", 9, 81, Mode.ROADWAY, 10.0, 0.0, cap))
    dist = DistanceMatrix({"o1": {"o1": 0.0, "o2": 50.0}, "o2": {"o1": 50.0, "o2": 0.0}},
                          {"L1": {"o1": 5.0, "o2": 5.0}})
    return Instance(hubs, orders, comps, svcs, dist, name="two_services")


def test_c_min_is_smallest_incoming_distance():
    hubs = (Hub("J1", HubKind.DC), Hub("L1", HubKind.SATELLITE, (0.0, 0.0)))
    orders = tuple(Order(f"o{i}", "J1", 100, 100, 1) for i in (1, 2, 3))
    between = {"o1": {"o1": 0.0, "o2": 1.0, "o3": 1.0},
               "o2": {"o1": 7.1, "o2": 0.0, "o3": 1.0},
               "o3": {"o1": 5.0, "o2": 1.0, "o3": 0.0}}
    inst = Instance(hubs, orders, (Compartment("g1", "J1", 5000),),
                    (Service("s1", "J1", "L1", 0, 10, Mode.ROADWAY, 1.0, 1.0, 1),),
                    DistanceMatrix(between, {"L1": {"o1": 3.2, "o2": 9.0, "o3": 9.0}}))
    assert c_min(inst, "o1") == 3.2


def test_tardiness_relaxation_forces_one_day():
    inst = single_order(arrival=81, c_ln=5.0, due=62, weight=3)
    assert tardiness_lb_coef(inst, "o1", "s1") == 1.0
    master = build_master(inst)
    out = solve(master.model)
    assert out.value("Ts[o1]") >= 1 - 1e-6
    assert out.value("Cs[s1]") >= 5.0 - 1e-6


def test_nonpositive_tardiness_rows_omitted():
    inst = single_order(arrival=20, c_ln=5.0, due=62)
    master = build_master(inst)
    assert master.counts["late_lb"] == 0


def test_extract_single_service_covers_all():
    inst = single_order()
    a = extract_assignment(inst, solve(build_master(inst).model))
    assert a.sets == {"s1": frozenset({"o1"})}


def test_extract_two_services_partition():
    inst = two_service_instance(cap=1)
    a = extract_assignment(inst, solve(build_master(inst).model))
    assert sorted(a.sets) == ["s1", "s2"]
    assert a.sets["s1"] | a.sets["s2"] == {"o1", "o2"} and not a.sets["s1"] & a.sets["s2"]


@pytest.mark.parametrize("seed", range(3))
def test_extract_partition_on_generated(seed):
    inst = generate(GeneratorConfig(2, 2, 5, seed))
    a = extract_assignment(inst, solve(build_master(inst).model))
    seen = [n for s in a.sets.values() for n in s]
    assert sorted(seen) == sorted(n.id for n in inst.orders)


def test_extract_rejects_missing_values():
    inst = single_order(services=())
    out = solve(build_master(inst).model)
    with pytest.raises(ValueError):
        extract_assignment(inst, out)


def test_subproblem_values_and_additivity():
    inst = single_order(arrival=81, c_ln=5.0, due=62, weight=3)
    _, eps = evaluate_subproblems(inst, Assignment({"s1": frozenset({"o1"})}, {}, 0.0))
    assert eps == 8
    inst2 = two_service_instance()
    a = Assignment({"s1": frozenset({"o1"}), "s2": frozenset({"o2"})}, {}, 0.0)
    sols, eps2 = evaluate_subproblems(inst2, a)
    assert eps2 == 16 and [s.objective for s in sols.values()] == [8, 8]


def _pinned_objective(master, inst, plan_services):
    """Master objective with each order pinned to (compartment, service)."""
    from intermodal_lbbd.plan import CompartmentPlan, Plan
    plan = Plan([CompartmentPlan(g, [n], [s]) for n, g, s in plan_services])
    return replay(master, plan_master_values(inst, plan))


def test_cut_active_when_assignment_kept_and_void_when_changed():
    inst = two_service_instance(cap=2)
    master = build_master(inst)
    a = Assignment({"s1": frozenset({"o1", "o2"})}, {}, 0.0)
    add_optimality_cuts(master, a, {"s1": 100.0}, 1)
    kept = _pinned_objective(master, inst, [("o1", "g1", "s1"), ("o2", "g2", "s1")])
    assert kept.value("zr[1,s1]") >= 100 - 1e-6
    assert kept.objective >= 20 + 100 - 1e-6
    moved = _pinned_objective(master, inst, [("o1", "g1", "s1"), ("o2", "g2", "s2")])
    # one order off s1: the cut row reads zr >= 0
    assert moved.objective == pytest.approx(20 + 2 * 5 + 2 * 3, abs=1e-6)


def test_single_plan_instance_converges_in_one_iteration():
    rep = run_lbbd(single_order(), LbbdLimits(gap=0.0))
    assert len(rep.trace) == 1 and rep.gap == 0.0 and rep.status is Status.OPTIMAL


@pytest.mark.parametrize("seed", range(4))
def test_lbbd_matches_oracle_on_network(seed):
    inst = micro_network(seed)
    best, *_ = base_oracle(inst)
    rep = run_lbbd(inst, LbbdLimits(gap=0.0, max_iters=50))
    assert rep.upper_bound == pytest.approx(best, abs=1e-4)
    ev = evaluate_plan(inst, rep.plan)
    assert ev.feasible and ev.total == pytest.approx(rep.upper_bound, abs=1e-4)


@pytest.mark.parametrize("seed", range(3))
def test_first_upper_bound_and_relaxed_lower_bound_bracket_optimum(seed):
    inst = micro_network(seed)
    best, *_ = base_oracle(inst)
    rep = run_lbbd(inst, LbbdLimits(gap=0.0, max_iters=1))
    first = rep.trace[0]
    assert first.candidate >= best - OBJ_TOL
    assert first.master_bound <= best + OBJ_TOL


def test_gap_values():
    assert compute_gap(100, 100) == 0.00
    assert compute_gap(0, 10) == 100.00
    assert compute_gap(7121, 7179) == 0.81
    assert compute_gap(5, None) is None


@pytest.mark.parametrize("seed", range(3))
def test_replay_bound_p1_per_iteration(seed):
    inst = micro_network(seed, 5)
    rep = run_lbbd(inst, LbbdLimits(gap=0.0, max_iters=50), keep_master=True)
    for k, rec in enumerate(rep.trace[:-1]):
        m = master_at(rep.master, rec.iteration)
        out = replay(m, rep.snapshots[k])
        assert out.objective >= rec.candidate - 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_master_bound_p2_random_feasible_plans(seed):
    """Every sampled feasible plan: cut-augmented master value <= its true cost."""
    inst = micro_network(seed)
    rep = run_lbbd(inst, LbbdLimits(gap=0.0, max_iters=50), keep_master=True)
    plans = list(enumerate_plans(inst))
    rng = random.Random(seed)
    for groups, picked in rng.sample(plans, min(25, len(plans))):
        vals = plan_master_values(inst, oracle_plan(inst, groups, picked))
        out = replay(rep.master, vals)
        assert out.status is Status.OPTIMAL
        assert out.objective <= plan_cost(inst, groups, picked) + 1e-4


def test_trace_bounds_monotone_and_csv(tmp_path):
    inst = generate(GeneratorConfig(2, 2, 5, 0))
    rep = run_lbbd(inst, LbbdLimits(gap=0.0, max_iters=50))
    lbs = [r.lower_bound for r in rep.trace]
    ubs = [r.upper_bound for r in rep.trace]
    assert lbs == sorted(lbs) and ubs == sorted(ubs, reverse=True)
    assert all(lb <= ub + 1e-6 for lb, ub in zip(lbs, ubs))
    path = tmp_path / "trace.csv"
    rep.write_trace_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("iteration,lower_bound,upper_bound,gap,cuts")
    assert len(lines) == len(rep.trace) + 1
    assert rep.upper_bound == pytest.approx(solve_monolithic(inst).upper_bound, abs=1e-4)


def test_workers_give_same_result():
    inst = micro_network(1, 5)
    a = run_lbbd(inst, LbbdLimits(gap=0.0, max_iters=50))
    b = run_lbbd(inst, LbbdLimits(gap=0.0, max_iters=50, workers=2))
    assert a.upper_bound == pytest.approx(b.upper_bound, abs=1e-9)
    assert len(a.trace) == len(b.trace)
