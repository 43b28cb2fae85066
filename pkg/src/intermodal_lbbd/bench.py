"""Benchmark harness: run MILP and LBBD over a set of instances and tabulate.

Rows are long format, one per (instance, method), with the instance columns
first and the per-method columns (time, lower bound, upper bound, gap) after,
in the order of the published comparison table.  A missing incumbent is shown
as "-" in the CSV and as null in the JSON.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

from .backend import DEFAULT_BACKEND, Limits
from .costs import compute_gap
from .generator import GeneratorConfig, generate, suite_configs
from .instance import Instance
from .lbbd import LbbdLimits, run_lbbd
from .monolithic import solve_monolithic
from .plan import Evaluation, Plan, evaluate_plan
from .report import SolutionReport, json_safe

log = logging.getLogger(__name__)

METHODS = ("milp", "lbbd")
DASH = "-"
COLUMNS = ["instance", "J", "L", "N", "S", "method", "time", "lower_bound", "upper_bound", "gap",
           "status", "error"]


@dataclass
class BenchmarkRow:
    instance: str
    J: int
    L: int
    N: int
    S: int
    method: str
    time: float
    lower_bound: float | None
    upper_bound: float | None
    gap: float | None
    status: str
    error: str = ""

    def __post_init__(self):
        if self.upper_bound is None:
            self.gap = None

    def csv_values(self) -> list[str]:
        out = []
        for c in COLUMNS:
            v = getattr(self, c)
            if v is None:
                out.append(DASH)
            elif c == "time":
                out.append(f"{v:.2f}")
            elif c in ("lower_bound", "upper_bound"):
                out.append(f"{v:.4f}")
            elif c == "gap":
                out.append(f"{v:.2f}")
            else:
                out.append(str(v))
        return out


@dataclass
class BenchmarkConfig:
    seed: int = 0
    methods: tuple[str, ...] = METHODS
    milp_time: float = 900.0
    lbbd: LbbdLimits = field(default_factory=LbbdLimits)
    backend: str = DEFAULT_BACKEND
    workers: int = 1


@dataclass
class BenchmarkResult:
    rows: list[BenchmarkRow]
    summary: dict[str, Any]
    stamp: dict[str, Any]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(COLUMNS)
            for r in self.rows:
                w.writerow(r.csv_values())

    def to_dict(self) -> dict[str, Any]:
        return {"stamp": self.stamp, "summary": self.summary, "rows": [asdict(r) for r in self.rows]}

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(json_safe(self.to_dict()), indent=1, default=str) + "\n")

    def summary_line(self) -> str:
        parts = []
        for m, s in self.summary["methods"].items():
            g = s["mean_gap"]
            parts.append(f"{m}: mean gap {DASH if g is None else f'{g:.2f}%'}, "
                         f"incumbents {s['incumbents']}/{s['rows']}, wins {s['wins']}")
        return "; ".join(parts)


def _row(inst: Instance, method: str, rep: SolutionReport | None, elapsed: float,
         error: str = "") -> BenchmarkRow:
    base = dict(instance=inst.name, J=len(inst.dcs), L=len(inst.satellites), N=len(inst.orders),
                S=len(inst.services), method=method)
    if rep is None:
        return BenchmarkRow(**base, time=round(elapsed, 3), lower_bound=None, upper_bound=None,
                            gap=None, status="Error", error=error)
    lb = rep.lower_bound if rep.lower_bound is not None and math.isfinite(rep.lower_bound) else None
    return BenchmarkRow(**base, time=round(rep.time, 3), lower_bound=lb, upper_bound=rep.upper_bound,
                        gap=compute_gap(lb, rep.upper_bound), status=rep.status.value)


def run_method(inst: Instance, method: str, config: BenchmarkConfig) -> BenchmarkRow:
    t0 = time.perf_counter()
    try:
        if method == "milp":
            rep = solve_monolithic(inst, Limits(config.milp_time), config.backend)
        elif method == "lbbd":
            lim = config.lbbd
            if lim.backend != config.backend:
                lim = replace(lim, backend=config.backend)
            rep = run_lbbd(inst, lim)
        else:
            raise ValueError(f"unknown method {method!r}")
    except Exception as exc:
        log.warning("%s on %s failed: %s", method, inst.name, exc)
        return _row(inst, method, None, time.perf_counter() - t0,
                    f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}".strip())
    return _row(inst, method, rep, time.perf_counter() - t0)


def _run_instance(args) -> list[BenchmarkRow]:
    inst, config = args
    return [run_method(inst, m, config) for m in config.methods]


def summarize(rows: Sequence[BenchmarkRow], methods: Sequence[str]) -> dict[str, Any]:
    """Per-method mean gap over rows with a gap, and win counts.

    A method wins an instance when its gap is the smallest among the methods
    (a missing gap counts as infinite); ties credit every tied method, and an
    instance where no method has an incumbent credits nobody.
    """
    by_inst: dict[str, dict[str, BenchmarkRow]] = {}
    for r in rows:
        by_inst.setdefault(r.instance, {})[r.method] = r
    wins = {m: 0 for m in methods}
    for per in by_inst.values():
        gaps = {m: (per[m].gap if m in per and per[m].gap is not None else math.inf) for m in methods}
        best = min(gaps.values())
        if math.isinf(best):
            continue
        for m, g in gaps.items():
            if g <= best + 1e-9:
                wins[m] += 1
    out = {}
    for m in methods:
        mine = [r for r in rows if r.method == m]
        gaps = [r.gap for r in mine if r.gap is not None]
        out[m] = {"rows": len(mine), "incumbents": len(gaps), "wins": wins[m],
                  "mean_gap": round(sum(gaps) / len(gaps), 2) if gaps else None,
                  "errors": sum(1 for r in mine if r.error)}
    return {"instances": len(by_inst), "methods": out}


def run_benchmark(config: BenchmarkConfig, instances: Sequence[Instance] | None = None) -> BenchmarkResult:
    """Run every method on every instance (default: the 24-instance suite)."""
    if instances is None:
        instances = [generate(c) for c in suite_configs(config.seed)]
    jobs = [(inst, config) for inst in instances]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            chunks = list(pool.map(_run_instance, jobs))
    else:
        chunks = [_run_instance(j) for j in jobs]
    order = {m: i for i, m in enumerate(config.methods)}
    rows = sorted((r for c in chunks for r in c), key=lambda r: (r.instance, order.get(r.method, 99)))
    lbbd = config.lbbd
    stamp = {
        "seed": config.seed,
        "backend": config.backend,
        "methods": list(config.methods),
        "limits": {"milp_time": config.milp_time, "master_time": lbbd.master_time,
                   "max_iters": lbbd.max_iters, "gap": lbbd.gap,
                   "total_time": None if math.isinf(lbbd.total_time) else lbbd.total_time,
                   "mip_rel_gap": lbbd.mip_rel_gap},
    }
    return BenchmarkResult(rows, summarize(rows, config.methods), stamp)


def micro_configs(count: int, seed: int = 0, n_dc: int = 2, n_satellite: int = 2,
                  orders: Sequence[int] = (3, 4, 5)) -> list[GeneratorConfig]:
    """Small instances that the monolithic MILP solves to optimality in seconds."""
    return [GeneratorConfig(n_dc, n_satellite, orders[i % len(orders)], seed + i) for i in range(count)]


def verify_plan(instance: Instance, plan: Plan | str | Path) -> Evaluation:
    """Recompute every cost component of a plan (or a saved plan/report file)."""
    if not isinstance(plan, Plan):
        plan = Plan.load(plan)
    return evaluate_plan(instance, plan)
