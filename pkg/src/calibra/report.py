"""Run checks on a scenario and assemble the JSON report."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

from calibra.checks import CheckRecord, UnknownCheckError, check_ids, run_check
from calibra.scenarios import Scenario

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_HYPOTHESIS = 0, 1, 2, 3


@dataclass
class Report:
    scenario: str
    seed: int
    grid: int | None
    records: list[CheckRecord] = field(default_factory=list)
    wall_ms: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    @property
    def hypothesis_violated(self) -> bool:
        return any(r.hypothesis and not r.passed for r in self.records)

    @property
    def exit_code(self) -> int:
        # a failed precondition makes the dependent conclusions meaningless,
        # so it takes priority over ordinary failures
        if self.hypothesis_violated:
            return EXIT_HYPOTHESIS
        return EXIT_OK if self.passed else EXIT_FAIL

    def as_dict(self, wall_clock: bool = True) -> dict:
        out = {
            "scenario": self.scenario,
            "seed": self.seed,
            "grid": self.grid,
            "checks": [r.as_dict() for r in self.records],
        }
        if wall_clock:
            out["wall_ms"] = round(self.wall_ms, 3)
        return out

    def to_json(self, wall_clock: bool = True) -> str:
        return json.dumps(self.as_dict(wall_clock), indent=2, allow_nan=False) + "\n"

    def summary_lines(self) -> list[str]:
        lines = []
        for r in self.records:
            flag = "PASS" if r.passed else ("HYPOTHESIS" if r.hypothesis else "FAIL")
            lines.append(f"{flag:10s} {r.name:45s} [{r.paper_tag.value}] "
                         f"residual={r.residual:.3e} tol={r.tolerance:.1e}")
        return lines


def _override(rec: CheckRecord, check: str, tolerances: dict, default: float | None):
    if rec.hypothesis:
        return
    for key in (rec.name, check):
        if key in tolerances:
            rec.tolerance = float(tolerances[key])
            return
    if default is not None:
        rec.tolerance = float(default)


def run_scenario(sc: Scenario, checks=None, seed: int = 0, grid: int | None = None,
                 tolerances: dict | None = None, tolerance: float | None = None) -> Report:
    """Run ``checks`` (default: the scenario's list) in order.

    ``tolerances`` maps a record or check name to a tolerance; ``tolerance``
    applies to every other conclusion record.  Hypothesis records keep the
    tolerance built into their check.
    """
    names = list(checks) if checks else list(sc.checks)
    for name in names:
        if name not in check_ids():
            raise UnknownCheckError(f"unknown check {name!r}; known: {', '.join(check_ids())}")
    tolerances = dict(tolerances or {})
    start = time.perf_counter()
    records = []
    for name in names:
        for rec in run_check(name, sc, seed=seed, grid=grid):
            _override(rec, name, tolerances, tolerance)
            records.append(rec)
    wall = (time.perf_counter() - start) * 1000.0
    return Report(sc.id, seed, grid, records, wall)
