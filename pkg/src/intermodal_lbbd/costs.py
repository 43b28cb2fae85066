"""Tardiness and gap arithmetic shared by models, evaluators and reports."""
from __future__ import annotations

import math
from enum import Enum

# slack on the day boundary so float noise in delivery times does not add a day
_DAY_EPS = 1e-7


class Penalty(str, Enum):
    LINEAR = "linear"
    QUADRATIC = "quadratic"


def tardiness_days(delivery: float, due: float) -> int:
    """Whole days late: ceil(max(0, (delivery - due) / 24))."""
    late = (delivery - due) / 24.0
    if late <= _DAY_EPS:
        return 0
    return int(math.ceil(late - _DAY_EPS))


def penalty_cost(days: int, weight: float, kind: Penalty = Penalty.LINEAR) -> float:
    if kind is Penalty.QUADRATIC:
        return weight * days * days
    return weight * days


def compute_gap(lb: float | None, ub: float | None) -> float | None:
    """Relative gap in percent, 100 * (ub - lb) / ub, rounded to 2 decimals.

    Returns None when there is no upper bound (no incumbent).
    """
    if ub is None or lb is None:
        return None
    if ub <= 0:
        if abs(ub - lb) <= 1e-9:
            return 0.0
        raise ValueError("gap undefined for nonpositive upper bound")
    return round(100.0 * (ub - lb) / ub + 0.0, 2)
