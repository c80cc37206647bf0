"""
Run report assembly for the STO engine.
Collects the solve record, probe verdicts and environment into one JSON
document and renders a plain-text digest for the terminal.
"""
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from sto_engine.errors import FitError, ParameterError, ReportError
from sto_engine.utils import io

logger = logging.getLogger(__name__)

VERDICTS = ("pass", "fail", "skipped")
REPORT_VERSION = 1


@dataclass(frozen=True)
class RateFit:
    rate: float
    r_squared: float
    points: int

    def to_dict(self):
        return {"rate": self.rate, "r_squared": self.r_squared, "points": self.points}


def fit_exponential_rate(history, tail_fraction=1.0):
    """
    Least-squares slope of log(history) against the step index over the last
    `tail_fraction` of the series; rate = −slope.
    """
    if not 0.0 < tail_fraction <= 1.0:
        raise ParameterError(f"tail_fraction must be in (0, 1], got {tail_fraction}")
    values = np.asarray(history, dtype=float)
    n_tail = int(math.ceil(tail_fraction * values.size))
    tail = values[values.size - n_tail:]
    if tail.size < 4:
        raise FitError(f"need at least 4 tail points, got {tail.size}")
    if np.any(tail <= 0) or not np.all(np.isfinite(tail)):
        raise FitError("tail contains non-positive or non-finite entries")
    steps = np.arange(tail.size, dtype=float)
    logs = np.log(tail)
    if np.ptp(logs) == 0.0:
        return RateFit(rate=0.0, r_squared=1.0, points=int(tail.size))
    fit = stats.linregress(steps, logs)
    return RateFit(rate=float(-fit.slope) + 0.0, r_squared=float(fit.rvalue ** 2), points=int(tail.size))


# ─── Verdicts ─────────────────────────────────────────────────────────

def verdict_at_most(value, threshold):
    """pass iff value ≤ threshold; NaN fails."""
    return "pass" if value <= threshold else "fail"


def verdict_at_least(value, threshold):
    return "pass" if value >= threshold else "fail"


@dataclass
class ProbeResult:
    name: str
    values: dict
    threshold: object = None
    verdict: str = "skipped"
    notes: list = field(default_factory=list)

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ReportError(f"probe {self.name}: invalid verdict {self.verdict!r}")

    @classmethod
    def skipped(cls, name, reason):
        return cls(name=name, values={}, threshold=None, verdict="skipped", notes=[reason])

    def to_dict(self):
        out = {"values": self.values, "threshold": self.threshold, "verdict": self.verdict}
        if self.notes:
            out["notes"] = list(self.notes)
        return out


@dataclass
class RunReport:
    config: dict
    solve: object = None
    probes: dict = field(default_factory=dict)
    environment: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def all_passed(self):
        return all(p.verdict != "fail" for p in self.probes.values())

    @property
    def failed_probes(self):
        return [name for name, p in self.probes.items() if p.verdict == "fail"]

    def to_dict(self):
        out = {
            "version": REPORT_VERSION,
            "config": self.config,
            "solve": None if self.solve is None else self.solve.to_dict(),
            "probes": {name: p.to_dict() for name, p in self.probes.items()},
        }
        out.update(self.extras)
        out["environment"] = self.environment
        return out


def assemble_report(config, solve=None, probes=(), requested=None, environment=None, extras=None):
    """
    Build a RunReport. Every requested probe must be present exactly once;
    probes not requested are still recorded.
    """
    table = {}
    for result in probes:
        if result.name in table:
            raise ReportError(f"duplicate probe: {result.name}")
        table[result.name] = result
    if requested is not None:
        missing = [name for name in requested if name not in table]
        if missing:
            raise ReportError(f"missing probes: {', '.join(missing)}")
        order = list(requested) + [n for n in table if n not in requested]
        table = {name: table[name] for name in order}
    return RunReport(
        config=dict(config),
        solve=solve,
        probes=table,
        environment=dict(environment or {}),
        extras=dict(extras or {}),
    )


def to_json(report):
    return io.dumps(report.to_dict() if isinstance(report, RunReport) else report)


def from_json(text):
    return json.loads(text)


def write_report(report, path):
    logger.info(f"[Report] writing {path}")
    return io.write_json(path, report.to_dict())


# ─── Plain-text digest ────────────────────────────────────────────────

def _fmt(value):
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def build_report_plain(report):
    """Terminal summary: solver outcome, then one line per probe."""
    lines = []
    solve = report.solve
    if solve is not None:
        lines.append("SOLVER")
        lines.append(f"  converged:   {solve.converged} after {solve.iterations} iterations")
        if solve.weak_residuals:
            lines.append(f"  residual:    {_fmt(solve.weak_residuals[-1])}")
        if solve.rate is not None:
            lines.append(f"  rate:        {_fmt(solve.rate.rate)} (R^2 {_fmt(solve.rate.r_squared)})")
        if solve.alpha_warning:
            lines.append("  warning:     coupling outside certified regime")
    if report.probes:
        lines.append("PROBES")
        width = max(len(name) for name in report.probes)
        for name, result in report.probes.items():
            lines.append(f"  {name.ljust(width)}  {result.verdict.upper()}")
    lines.append("OVERALL: " + ("PASS" if report.all_passed else "FAIL"))
    return "\n".join(lines)
