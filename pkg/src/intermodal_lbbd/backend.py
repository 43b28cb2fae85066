"""Backend-agnostic MILP modelling layer.

Models are built with a small expression API (``Var``/``LinExpr``) and handed to
an exact open-source solver.  Two backends are wired: ``highs`` (highspy, the
default) and ``scipy`` (``scipy.optimize.milp``).  Neither keeps solver state
between calls; appending rows or changing bounds and calling :func:`solve`
again rebuilds the backend model from scratch.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

INF = math.inf

#: absolute tolerance used for every objective comparison in the package
OBJ_TOL = 1e-4
#: tolerance on reading binary/integer values back from a solution
INT_TOL = 1e-5


class VarType(str, Enum):
    CONTINUOUS = "C"
    INTEGER = "I"
    BINARY = "B"


class Status(str, Enum):
    OPTIMAL = "Optimal"
    # incumbent without an optimality proof, stopped for a reason other than time
    FEASIBLE = "Feasible"
    FEASIBLE_TIME_LIMIT = "FeasibleTimeLimit"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ERROR = "Error"
    # time limit hit before any incumbent was found
    NO_SOLUTION_TIME_LIMIT = "NoSolutionTimeLimit"

    @property
    def has_values(self) -> bool:
        return self in (Status.OPTIMAL, Status.FEASIBLE, Status.FEASIBLE_TIME_LIMIT)


class Var:
    __slots__ = ("model", "index")

    def __init__(self, model: "Model", index: int):
        self.model = model
        self.index = index

    @property
    def name(self) -> str:
        return self.model.var_names[self.index]

    def __repr__(self) -> str:
        return f"Var({self.name})"

    def __hash__(self) -> int:
        return hash((id(self.model), self.index))

    def _expr(self) -> "LinExpr":
        return LinExpr({self.index: 1.0})

    def __add__(self, other):
        return self._expr() + other

    __radd__ = __add__

    def __sub__(self, other):
        return self._expr() - other

    def __rsub__(self, other):
        return other - self._expr()

    def __mul__(self, k):
        return self._expr() * k

    __rmul__ = __mul__

    def __neg__(self):
        return self._expr() * -1.0

    def __le__(self, other):
        return self._expr() <= other

    def __ge__(self, other):
        return self._expr() >= other

    def __eq__(self, other):  # type: ignore[override]
        return self._expr() == other


class LinExpr:
    __slots__ = ("terms", "const")

    def __init__(self, terms: dict[int, float] | None = None, const: float = 0.0):
        self.terms = terms if terms is not None else {}
        self.const = const

    def copy(self) -> "LinExpr":
        return LinExpr(dict(self.terms), self.const)

    def add_term(self, var: Var, coef: float) -> "LinExpr":
        if coef:
            self.terms[var.index] = self.terms.get(var.index, 0.0) + coef
        return self

    def __iadd__(self, other):
        if isinstance(other, LinExpr):
            for i, c in other.terms.items():
                self.terms[i] = self.terms.get(i, 0.0) + c
            self.const += other.const
        elif isinstance(other, Var):
            self.terms[other.index] = self.terms.get(other.index, 0.0) + 1.0
        else:
            self.const += float(other)
        return self

    def __add__(self, other):
        out = self.copy()
        out += other
        return out

    __radd__ = __add__

    def __sub__(self, other):
        out = self.copy()
        out += other * -1.0 if not isinstance(other, (int, float)) else -other
        return out

    def __rsub__(self, other):
        return (self * -1.0) + other

    def __mul__(self, k):
        k = float(k)
        return LinExpr({i: c * k for i, c in self.terms.items()}, self.const * k)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __le__(self, other):
        return Constraint(self - other, -INF, 0.0)

    def __ge__(self, other):
        return Constraint(self - other, 0.0, INF)

    def __eq__(self, other):  # type: ignore[override]
        return Constraint(self - other, 0.0, 0.0)

    def value(self, values: np.ndarray) -> float:
        return self.const + sum(c * values[i] for i, c in self.terms.items())


def quicksum(items: Iterable) -> LinExpr:
    out = LinExpr()
    for it in items:
        out += it
    return out


@dataclass
class Constraint:
    """``lo <= expr <= hi`` with the expression's constant folded into the bounds."""

    expr: LinExpr
    lo: float
    hi: float

    def bounds(self) -> tuple[float, float]:
        return self.lo - self.expr.const, self.hi - self.expr.const


@dataclass
class Row:
    terms: dict[int, float]
    lo: float
    hi: float
    name: str


class Model:
    """Minimisation MILP with incremental variable/row addition."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.var_names: list[str] = []
        self.var_index: dict[str, int] = {}
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.vtype: list[VarType] = []
        self.obj: dict[int, float] = {}
        self.obj_const = 0.0
        self.rows: list[Row] = []

    # -- variables -------------------------------------------------------
    def add_var(self, name: str, lb: float = 0.0, ub: float = INF,
                vtype: VarType = VarType.CONTINUOUS) -> Var:
        if name in self.var_index:
            raise ValueError(f"duplicate variable {name!r}")
        if vtype is VarType.BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        idx = len(self.var_names)
        self.var_names.append(name)
        self.var_index[name] = idx
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.vtype.append(vtype)
        return Var(self, idx)

    def binary(self, name: str) -> Var:
        return self.add_var(name, 0.0, 1.0, VarType.BINARY)

    def integer(self, name: str, lb: float = 0.0, ub: float = INF) -> Var:
        return self.add_var(name, lb, ub, VarType.INTEGER)

    def continuous(self, name: str, lb: float = 0.0, ub: float = INF) -> Var:
        return self.add_var(name, lb, ub, VarType.CONTINUOUS)

    def var(self, name: str) -> Var:
        return Var(self, self.var_index[name])

    def has_var(self, name: str) -> bool:
        return name in self.var_index

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    # -- rows / objective -----------------------------------------------
    def add_constr(self, con: Constraint, name: str = "") -> int:
        if not isinstance(con, Constraint):
            raise TypeError("expected a Constraint (use <=, >= or == on expressions)")
        lo, hi = con.bounds()
        terms = {i: c for i, c in con.expr.terms.items() if c != 0.0}
        self.rows.append(Row(terms, lo, hi, name))
        return len(self.rows) - 1

    def minimize(self, expr) -> None:
        if isinstance(expr, Var):
            expr = expr._expr()
        self.obj = {i: c for i, c in expr.terms.items() if c}
        self.obj_const = expr.const

    def fix(self, values: Mapping[str, float]) -> None:
        """Pin variables (by name) to the given values via their bounds."""
        for name, val in values.items():
            i = self.var_index[name]
            if self.vtype[i] is not VarType.CONTINUOUS:
                val = round(val)
            self.lb[i] = self.ub[i] = float(val)

    def copy(self) -> "Model":
        m = Model(self.name)
        m.var_names = list(self.var_names)
        m.var_index = dict(self.var_index)
        m.lb, m.ub, m.vtype = list(self.lb), list(self.ub), list(self.vtype)
        m.obj, m.obj_const = dict(self.obj), self.obj_const
        m.rows = [Row(dict(r.terms), r.lo, r.hi, r.name) for r in self.rows]
        return m

    def check(self) -> None:
        n = self.num_vars
        for r in self.rows:
            for i in r.terms:
                if not 0 <= i < n:
                    raise ValueError(f"row {r.name!r} references undeclared variable {i}")
        for i, (lo, hi) in enumerate(zip(self.lb, self.ub)):
            if lo > hi:
                raise ValueError(f"empty domain for {self.var_names[i]}")

    def objective_value(self, values: np.ndarray) -> float:
        return self.obj_const + sum(c * values[i] for i, c in self.obj.items())

    def max_violation(self, values: np.ndarray) -> float:
        worst = 0.0
        for r in self.rows:
            v = sum(c * values[i] for i, c in r.terms.items())
            worst = max(worst, r.lo - v, v - r.hi)
        for i, x in enumerate(values):
            worst = max(worst, self.lb[i] - x, x - self.ub[i])
        return worst

    def _csr(self):
        starts, idx, vals = [], [], []
        for r in self.rows:
            starts.append(len(idx))
            for i, c in r.terms.items():
                idx.append(i)
                vals.append(c)
        return (np.asarray(starts, dtype=np.int32), np.asarray(idx, dtype=np.int32),
                np.asarray(vals, dtype=float))


@dataclass
class Limits:
    time_limit: float = INF
    mip_rel_gap: float = 1e-6


@dataclass
class SolveOutcome:
    status: Status
    objective: float | None = None
    best_bound: float | None = None
    values: np.ndarray | None = None
    wall_time: float = 0.0
    message: str = ""
    model: Model | None = field(default=None, repr=False)

    def value(self, name: str) -> float:
        assert self.values is not None and self.model is not None
        return float(self.values[self.model.var_index[name]])

    def named_values(self) -> dict[str, float]:
        assert self.values is not None and self.model is not None
        return dict(zip(self.model.var_names, self.values.tolist()))


def _solve_highs(model: Model, limits: Limits) -> SolveOutcome:
    import highspy

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("threads", 1)
    h.setOptionValue("random_seed", 0)
    h.setOptionValue("mip_rel_gap", float(limits.mip_rel_gap))
    if math.isfinite(limits.time_limit):
        h.setOptionValue("time_limit", max(float(limits.time_limit), 0.01))
    inf = highspy.kHighsInf
    n = model.num_vars
    lb = np.array([x if math.isfinite(x) else -inf for x in model.lb], dtype=float)
    ub = np.array([x if math.isfinite(x) else inf for x in model.ub], dtype=float)
    if n:
        h.addVars(n, lb, ub)
        cols = np.arange(n, dtype=np.int32)
        cost = np.zeros(n)
        for i, c in model.obj.items():
            cost[i] = c
        h.changeColsCost(n, cols, cost)
        ints = np.array([i for i, t in enumerate(model.vtype) if t is not VarType.CONTINUOUS],
                        dtype=np.int32)
        if len(ints):
            h.changeColsIntegrality(len(ints), ints,
                                    np.array([highspy.HighsVarType.kInteger] * len(ints)))
    if model.rows:
        starts, idx, vals = model._csr()
        lo = np.array([r.lo if math.isfinite(r.lo) else -inf for r in model.rows])
        hi = np.array([r.hi if math.isfinite(r.hi) else inf for r in model.rows])
        h.addRows(len(model.rows), lo, hi, len(idx), starts, idx, vals)
    h.run()
    ms = h.getModelStatus()
    info = h.getInfo()
    has_sol = info.primal_solution_status == 2
    S = highspy.HighsModelStatus
    if ms == S.kOptimal:
        status = Status.OPTIMAL
    elif ms == S.kInfeasible:
        status = Status.INFEASIBLE
    elif ms in (S.kUnbounded, S.kUnboundedOrInfeasible):
        status = Status.UNBOUNDED if ms == S.kUnbounded else Status.INFEASIBLE
    elif ms in (S.kTimeLimit, S.kIterationLimit, S.kInterrupt, S.kSolutionLimit):
        status = Status.FEASIBLE_TIME_LIMIT if has_sol else Status.NO_SOLUTION_TIME_LIMIT
    elif ms == S.kModelEmpty:
        status = Status.OPTIMAL
    else:
        return SolveOutcome(Status.ERROR, message=h.modelStatusToString(ms), model=model)
    out = SolveOutcome(status, model=model, message=h.modelStatusToString(ms))
    if status.has_values:
        values = np.array(h.getSolution().col_value, dtype=float) if n else np.zeros(0)
        out.values = values
        out.objective = model.objective_value(values)
        if status is Status.OPTIMAL:
            bound = out.objective
            if any(t is not VarType.CONTINUOUS for t in model.vtype):
                bound = min(out.objective, info.mip_dual_bound + model.obj_const)
            out.best_bound = bound
        else:
            out.best_bound = info.mip_dual_bound + model.obj_const
    elif status is Status.NO_SOLUTION_TIME_LIMIT:
        bound = info.mip_dual_bound
        out.best_bound = bound + model.obj_const if math.isfinite(bound) else None
    return out


def _solve_scipy(model: Model, limits: Limits) -> SolveOutcome:
    from scipy.optimize import Bounds, LinearConstraint, milp
    from scipy.sparse import csr_matrix

    n = model.num_vars
    if n == 0:
        return SolveOutcome(Status.OPTIMAL, model.obj_const, model.obj_const, np.zeros(0), model=model)
    c = np.zeros(n)
    for i, v in model.obj.items():
        c[i] = v
    integrality = np.array([0 if t is VarType.CONTINUOUS else 1 for t in model.vtype])
    constraints = []
    if model.rows:
        starts, idx, vals = model._csr()
        indptr = np.append(starts, len(idx))
        A = csr_matrix((vals, idx, indptr), shape=(len(model.rows), n))
        constraints.append(LinearConstraint(A, [r.lo for r in model.rows], [r.hi for r in model.rows]))
    options = {"mip_rel_gap": limits.mip_rel_gap, "disp": False}
    if math.isfinite(limits.time_limit):
        options["time_limit"] = max(limits.time_limit, 0.01)
    res = milp(c, integrality=integrality, bounds=Bounds(model.lb, model.ub),
               constraints=constraints, options=options)
    if res.status == 0:
        status = Status.OPTIMAL
    elif res.status == 1:
        status = Status.FEASIBLE_TIME_LIMIT if res.x is not None else Status.NO_SOLUTION_TIME_LIMIT
    elif res.status == 2:
        status = Status.INFEASIBLE
    elif res.status == 3:
        status = Status.UNBOUNDED
    else:
        return SolveOutcome(Status.ERROR, message=str(res.message), model=model)
    out = SolveOutcome(status, model=model, message=str(res.message))
    if status.has_values:
        out.values = np.asarray(res.x, dtype=float)
        out.objective = model.objective_value(out.values)
        bound = getattr(res, "mip_dual_bound", None)
        if bound is None or not math.isfinite(bound):
            bound = out.objective if status is Status.OPTIMAL else None
        else:
            bound = min(bound + model.obj_const, out.objective)
        out.best_bound = bound
    return out


BACKENDS = {"highs": _solve_highs, "scipy": _solve_scipy}
DEFAULT_BACKEND = "highs"


def solve(model: Model, limits: Limits | None = None, backend: str = DEFAULT_BACKEND) -> SolveOutcome:
    """Solve ``model`` to optimality or until ``limits.time_limit`` seconds pass."""
    limits = limits or Limits()
    try:
        fn = BACKENDS[backend]
    except KeyError:
        raise ValueError(f"unknown backend {backend!r}; choose from {sorted(BACKENDS)}") from None
    model.check()
    t0 = time.perf_counter()
    try:
        out = fn(model, limits)
    except Exception as exc:  # backend failures are reported, not raised
        out = SolveOutcome(Status.ERROR, message=f"{type(exc).__name__}: {exc}", model=model)
    out.wall_time = time.perf_counter() - t0
    return out
