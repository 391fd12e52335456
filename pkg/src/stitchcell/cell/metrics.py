"""Aggregate statistics over stitch records and their text rendering.

Success rate counts every record; size statistics cover successes only,
since failed cycles carry no stitch size. Variance is the unbiased sample
variance, defined as 0 for a single success.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyInput
from .stitch import (
    CAUSE_UNCLASSIFIED,
    FAILURE_CAUSES,
    OUTCOME_SUCCESS,
    StitchRecord,
)


@dataclass(frozen=True)
class DesignStats:
    """Per-design slice of a run."""

    design_id: str
    n_records: int
    n_success: int
    success_rate: float
    size_mean_mm: float | None
    size_var_mm2: float | None


@dataclass(frozen=True)
class MetricsReport:
    """Summary of one batch of stitch records."""

    n_records: int
    n_success: int
    success_rate: float
    size_mean_mm: float | None       # absent without any success
    size_var_mm2: float | None
    cause_counts: dict
    per_design: tuple


def _size_stats(sizes: list) -> tuple[float | None, float | None]:
    if not sizes:
        return None, None
    arr = np.asarray(sizes, dtype=float)
    mean = float(arr.mean())
    var = float(arr.var(ddof=1)) if arr.size > 1 else 0.0
    return mean, var


def compute_metrics(records: list[StitchRecord]) -> MetricsReport:
    """Success rate, size statistics, per-design breakdown, cause histogram."""
    if not records:
        raise EmptyInput("no stitch records to summarize")
    n = len(records)
    successes = [r for r in records if r.outcome == OUTCOME_SUCCESS]
    mean, var = _size_stats([r.stitch_size_mm for r in successes])

    causes = {c: 0 for c in FAILURE_CAUSES}
    causes[CAUSE_UNCLASSIFIED] = 0
    for r in records:
        if r.cause is not None:
            causes[r.cause] = causes.get(r.cause, 0) + 1

    per_design = []
    for did in sorted({r.design_id for r in records}):
        sub = [r for r in records if r.design_id == did]
        ok = [r for r in sub if r.outcome == OUTCOME_SUCCESS]
        m, v = _size_stats([r.stitch_size_mm for r in ok])
        per_design.append(DesignStats(
            design_id=did, n_records=len(sub), n_success=len(ok),
            success_rate=len(ok) / len(sub), size_mean_mm=m, size_var_mm2=v))

    return MetricsReport(
        n_records=n, n_success=len(successes), success_rate=len(successes) / n,
        size_mean_mm=mean, size_var_mm2=var, cause_counts=causes,
        per_design=tuple(per_design))


def format_trial_table(records: list[StitchRecord]) -> str:
    """One line per trial: size for successes, cause for failures."""
    lines = ["trial  design  slot  size_mm  outcome"]
    for i, r in enumerate(records, start=1):
        idx = r.trial_index if r.trial_index else i
        size = f"{r.stitch_size_mm:7.2f}" if r.stitch_size_mm is not None else "       "
        tail = "Success" if r.outcome == OUTCOME_SUCCESS else r.cause
        lines.append(f"{idx:5d}  {r.design_id:>6}  {r.slot_index:4d}  {size}  {tail}")
    return "\n".join(lines)


def format_summary(report: MetricsReport) -> str:
    """Fixed-layout summary block, stable across runs for byte comparison."""
    lines = [
        f"records          {report.n_records}",
        f"successes        {report.n_success}",
        f"success_rate     {report.success_rate:.4f}",
    ]
    if report.size_mean_mm is not None:
        lines.append(f"size_mean_mm     {report.size_mean_mm:.4f}")
        lines.append(f"size_var_mm2     {report.size_var_mm2:.4f}")
    lines.append("failure_causes")
    for cause, count in report.cause_counts.items():
        lines.append(f"  {cause:<24} {count}")
    if len(report.per_design) > 1:
        lines.append("per_design")
        for d in report.per_design:
            stats = (f"mean {d.size_mean_mm:.4f}  var {d.size_var_mm2:.4f}"
                     if d.size_mean_mm is not None else "no successes")
            lines.append(f"  {d.design_id:<6} {d.n_success}/{d.n_records} "
                         f"({d.success_rate:.0%})  {stats}")
    return "\n".join(lines)
