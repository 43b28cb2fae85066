"""Command-line entry point: gen, solve, bench, verify.

Exit codes: 0 on success, 2 when an instance (or a verified plan) is
infeasible, 1 on any error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .backend import BACKENDS, DEFAULT_BACKEND, Limits, Status
from .bench import BenchmarkConfig, micro_configs, run_benchmark, verify_plan
from .generator import ExtendedConfig, GeneratorConfig, generate, generate_extended, suite_configs
from .instance import Instance, InstanceError
from .lbbd import LbbdLimits, run_lbbd
from .report import json_safe

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2

log = logging.getLogger("intermodal_lbbd")


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="intermodal-lbbd",
                                description="Intermodal and last-mile planning: MILP and LBBD solvers.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random instance")
    g.add_argument("--dc", type=int, default=2)
    g.add_argument("--sat", type=int, default=2)
    g.add_argument("--orders", type=int, default=60)
    g.add_argument("--intermediate", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--extended", action="store_true",
                   help="three-stage fixture with first-mile routes and last-mile templates")
    g.add_argument("--dc-trucks", type=int, default=1)
    g.add_argument("--sat-vehicles", type=int, default=1)
    g.add_argument("--max-stops", type=int, default=3)
    g.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("solve", help="solve one instance")
    s.add_argument("--method", choices=["milp", "lbbd", "lbbd-ext"], default="lbbd")
    s.add_argument("--instance", type=Path, required=True)
    s.add_argument("--time-limit", type=_positive_float, default=math.inf,
                   help="MILP time limit, or total LBBD budget (s)")
    s.add_argument("--master-time", type=_positive_float, default=900.0)
    s.add_argument("--sub-time", type=_positive_float, default=900.0)
    s.add_argument("--max-iters", type=int, default=20)
    s.add_argument("--gap", type=float, default=1.0, help="LBBD stopping gap in percent")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--backend", choices=sorted(BACKENDS), default=DEFAULT_BACKEND)
    s.add_argument("--out", type=Path)
    s.add_argument("--trace", type=Path, help="iteration trace CSV (LBBD methods)")

    b = sub.add_parser("bench", help="run methods over a suite of instances")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--methods", nargs="+", choices=["milp", "lbbd"], default=["milp", "lbbd"])
    b.add_argument("--suite", choices=["table", "micro"], default="table",
                   help="the 24 benchmark sizes, or small instances")
    b.add_argument("--count", type=int, default=4, help="number of micro instances")
    b.add_argument("--instances", type=Path, nargs="*", help="instance files instead of a suite")
    b.add_argument("--time-limit", type=_positive_float, default=900.0,
                   help="per-run budget for both methods (s)")
    b.add_argument("--max-iters", type=int, default=20)
    b.add_argument("--gap", type=float, default=1.0)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--backend", choices=sorted(BACKENDS), default=DEFAULT_BACKEND)
    b.add_argument("--csv", type=Path, required=True)
    b.add_argument("--json", type=Path)

    v = sub.add_parser("verify", help="evaluate a plan against an instance")
    v.add_argument("--instance", type=Path, required=True)
    v.add_argument("--plan", type=Path, required=True, help="plan JSON or a solve report")
    v.add_argument("--out", type=Path)
    return p


def cmd_gen(args) -> int:
    if args.extended:
        inst = generate_extended(ExtendedConfig(args.orders, args.seed, args.dc_trucks, args.sat_vehicles,
                                                max_stops=args.max_stops))
    else:
        inst = generate(GeneratorConfig(args.dc, args.sat, args.orders, args.seed, args.intermediate))
    inst.save(args.out)
    print(f"{inst.name}: {len(inst.orders)} orders, {len(inst.services)} services -> {args.out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = Instance.load(args.instance)
    if args.method == "milp":
        from .monolithic import solve_monolithic
        rep = solve_monolithic(inst, Limits(args.time_limit), args.backend)
    elif args.method == "lbbd":
        lim = LbbdLimits(master_time=args.master_time, max_iters=args.max_iters, gap=args.gap,
                         total_time=args.time_limit, workers=args.workers, backend=args.backend)
        rep = run_lbbd(inst, lim)
    else:
        from .extension import ExtendedLimits, run_extended_lbbd
        lim = ExtendedLimits(master_time=args.master_time, max_iters=args.max_iters, gap=args.gap,
                             total_time=args.time_limit, workers=args.workers, backend=args.backend,
                             sub_time=args.sub_time)
        rep = run_extended_lbbd(inst, lim)
    if args.out:
        rep.save(args.out)
    if args.trace and hasattr(rep, "write_trace_csv"):
        rep.write_trace_csv(args.trace)
    gap = rep.gap
    print(f"{rep.method} {rep.status.value}: LB={rep.lower_bound} UB={rep.upper_bound} "
          f"gap={'-' if gap is None else f'{gap:.2f}%'} time={rep.time:.2f}s")
    return EXIT_INFEASIBLE if rep.status is Status.INFEASIBLE else EXIT_OK


def cmd_bench(args) -> int:
    lim = LbbdLimits(master_time=args.time_limit, max_iters=args.max_iters, gap=args.gap,
                     total_time=args.time_limit, backend=args.backend)
    config = BenchmarkConfig(args.seed, tuple(args.methods), args.time_limit, lim, args.backend, args.workers)
    if args.instances:
        instances = [Instance.load(p) for p in args.instances]
    elif args.suite == "micro":
        instances = [generate(c) for c in micro_configs(args.count, args.seed)]
    else:
        instances = [generate(c) for c in suite_configs(args.seed)]
    res = run_benchmark(config, instances)
    res.write_csv(args.csv)
    if args.json:
        res.write_json(args.json)
    print(res.summary_line())
    if any(r.status == Status.INFEASIBLE.value for r in res.rows):
        return EXIT_INFEASIBLE
    return EXIT_ERROR if any(r.error for r in res.rows) else EXIT_OK


def cmd_verify(args) -> int:
    inst = Instance.load(args.instance)
    ev = verify_plan(inst, args.plan)
    text = json.dumps(json_safe(ev.to_dict()), indent=1)
    if args.out:
        args.out.write_text(text + "\n")
    print(f"total={ev.total:.6f} firstmile={ev.firstmile:.6f} intermodal={ev.intermodal:.6f} "
          f"lastmile={ev.lastmile:.6f} penalty={ev.penalty:.6f}")
    for msg in ev.violations:
        print(f"violation: {msg}")
    return EXIT_OK if ev.feasible else EXIT_INFEASIBLE


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "bench": cmd_bench, "verify": cmd_verify}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InstanceError, OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
