"""Result records shared by the MILP baseline, the LBBD engines and the bench."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .backend import Status
from .costs import compute_gap
from .plan import Plan


def json_safe(obj: Any) -> Any:
    """Replace non-finite floats by None so the output is strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    return obj


@dataclass
class SolutionReport:
    method: str
    status: Status
    lower_bound: float | None = None
    upper_bound: float | None = None
    time: float = 0.0
    plan: Plan | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def gap(self) -> float | None:
        return compute_gap(self.lower_bound, self.upper_bound)

    @property
    def has_incumbent(self) -> bool:
        return self.upper_bound is not None

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "status": self.status.value,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "gap": self.gap,
            "time": round(self.time, 3),
            "meta": self.meta,
            "plan": self.plan.to_dict() if self.plan else None,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(json_safe(self.to_dict()), indent=1, default=str) + "\n")
