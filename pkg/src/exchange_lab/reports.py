"""Replication-aggregated experiment reports and their CSV/JSON writers.

Output is deterministic: floats are formatted with 17 significant digits
in CSV, and JSON uses round-trip float representation.  Wall-clock timing
never enters the written files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field


def fmt_float(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return ""
    return format(x, ".17g")


def bound_margin(estimate: float, bound: float, se: float | None) -> tuple[float, bool]:
    """Slack of a Monte Carlo estimate against a closed-form bound.

    The estimate passes when it does not exceed the bound by more than
    three standard errors: margin = bound + 3*SE - estimate >= 0.
    """
    margin = bound + 3.0 * (se or 0.0) - estimate
    return margin, margin >= 0.0


@dataclass
class ExperimentReport:
    subcommand: str
    columns: list
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    passed: bool = True

    def add_row(self, **values) -> None:
        self.rows.append(values)

    def _cell(self, value) -> str:
        if value is None:
            return ""
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, float):
            return fmt_float(value)
        return str(value)

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(self._cell(row.get(c)) for c in self.columns))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = {
            "subcommand": self.subcommand,
            "metadata": self.metadata,
            "pass": self.passed,
            "rows": [{c: row.get(c) for c in self.columns} for row in self.rows],
        }
        return json.dumps(payload, indent=2, sort_keys=False, allow_nan=True) + "\n"

    def render(self, fmt: str) -> str:
        if fmt == "csv":
            return self.to_csv()
        if fmt == "json":
            return self.to_json()
        raise ValueError(f"unknown format: {fmt!r}")
