"""Named numeric checks recorded by scenario runs and the CLI manifest."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Check:
    """``value <op> threshold`` with ``op`` one of ``"<="`` or ``">="``.

    Checks with ``enforced=False`` are diagnostics: they are reported but never
    fail a run.
    """

    name: str
    value: float
    threshold: float
    op: str = "<="
    enforced: bool = True

    @property
    def passed(self) -> bool:
        if math.isnan(self.value):
            return False
        if self.op == "<=":
            return self.value <= self.threshold
        if self.op == ">=":
            return self.value >= self.threshold
        raise ValueError(f"unknown comparison {self.op!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "threshold": self.threshold,
            "op": self.op,
            "passed": self.passed,
            "enforced": self.enforced,
        }


def all_enforced_pass(checks) -> bool:
    return all(c.passed for c in checks if c.enforced)
