"""Aggregation of serve records into summary metrics, curves and comparisons.

Outputs are a JSON summary, a per-request CSV dump and a cumulative-curve
CSV, all consumable by external plotting tools. Nothing here mutates run
state; everything aggregates an immutable record list in one pass.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

from .policy import ORIGIN_BACKEND, ORIGIN_STATIC, Thresholds, is_grey_zone
from .simulator import (
    ORIGIN_DYNAMIC_GENERATED,
    ORIGIN_DYNAMIC_PROMOTED,
    ServeRecord,
)

ORIGINS = (ORIGIN_STATIC, ORIGIN_DYNAMIC_PROMOTED, ORIGIN_DYNAMIC_GENERATED, ORIGIN_BACKEND)

_CSV_COLUMNS = (
    "request_id",
    "origin",
    "answer_class_id",
    "s_static",
    "s_dynamic",
    "error",
    "verify_outcome",
    "judge_calls_so_far",
    "served_entry_id",
)


@dataclass(frozen=True)
class SummaryReport:
    total_requests: int
    origin_counts: dict
    hit_rate: float
    static_origin_fraction: float
    error_rate: float
    grey_zone_fraction: float | None
    judge_calls: int
    approvals: int
    rejections: int
    dedups: int
    throttles: int
    drops: int
    approval_rate: float | None
    promoted_hit_traffic: float
    promotion_reuse: dict | None
    roi_serves_per_judge_call: float | None
    epsilon_bound_check: dict | None
    judge_cost: float | None
    metadata: dict


@dataclass(frozen=True)
class CurveSeries:
    policy: str
    x: list
    y: list


@dataclass(frozen=True)
class ComparisonReport:
    baseline_static_origin_fraction: float
    krites_static_origin_fraction: float
    absolute_gain: float
    relative_gain_pct: float | None
    baseline_hit_rate: float
    krites_hit_rate: float
    hit_rate_delta: float
    hit_rate_regressed: bool
    baseline_error_rate: float
    krites_error_rate: float
    error_rate_delta: float


def summarize(
    records,
    thresholds: Thresholds | None = None,
    *,
    verifier_stats=None,
    promotion_reuse: dict | None = None,
    epsilon: float | None = None,
    cost_per_judge_call: float | None = None,
) -> SummaryReport:
    """One-pass aggregation of a run's records.

    `thresholds` enables the grey-zone fraction; `verifier_stats`,
    `promotion_reuse` and `epsilon` attach pipeline counters, the reuse
    distribution and the false-approve bound check when known.
    """
    records = list(records)
    if not records:
        raise ValueError("cannot summarize an empty record list")
    total = len(records)
    counts = {origin: 0 for origin in ORIGINS}
    errors = 0
    grey = 0
    promoted_errors = 0
    for r in records:
        if r.origin not in counts:
            raise ValueError(f"unknown serve origin {r.origin!r}")
        counts[r.origin] += 1
        if r.error:
            errors += 1
            if r.origin == ORIGIN_DYNAMIC_PROMOTED:
                promoted_errors += 1
        if thresholds is not None and is_grey_zone(r.s_static, thresholds):
            grey += 1

    hits = total - counts[ORIGIN_BACKEND]
    static_origin = counts[ORIGIN_STATIC] + counts[ORIGIN_DYNAMIC_PROMOTED]
    p_prom = counts[ORIGIN_DYNAMIC_PROMOTED] / total

    stats = verifier_stats.as_dict() if verifier_stats is not None else {}
    judge_calls = stats.get("judge_calls", 0)
    approvals = stats.get("approvals", 0)
    rejections = stats.get("rejections", 0)
    verdicts = approvals + rejections
    approval_rate = approvals / verdicts if verdicts else None

    reuse_summary = None
    roi = None
    if promotion_reuse is not None:
        values = sorted(promotion_reuse.values())
        histogram = {}
        for v in values:
            histogram[v] = histogram.get(v, 0) + 1
        total_promoted_serves = sum(values)
        reuse_summary = {
            "promoted_entries": len(values),
            "total_promoted_serves": total_promoted_serves,
            "mean": total_promoted_serves / len(values) if values else None,
            "histogram": sorted(histogram.items()),
        }
        if judge_calls:
            roi = total_promoted_serves / judge_calls

    bound_check = None
    if epsilon is not None:
        bound_check = {
            "epsilon": epsilon,
            "observed_promoted_error_rate": promoted_errors / total,
            "epsilon_times_p_prom": epsilon * p_prom,
        }

    return SummaryReport(
        total_requests=total,
        origin_counts=counts,
        hit_rate=hits / total,
        static_origin_fraction=static_origin / total,
        error_rate=errors / total,
        grey_zone_fraction=grey / total if thresholds is not None else None,
        judge_calls=judge_calls,
        approvals=approvals,
        rejections=rejections,
        dedups=stats.get("deduplicated", 0),
        throttles=stats.get("throttled", 0),
        drops=stats.get("dropped_full", 0) + stats.get("dropped_after_retries", 0),
        approval_rate=approval_rate,
        promoted_hit_traffic=p_prom,
        promotion_reuse=reuse_summary,
        roi_serves_per_judge_call=roi,
        epsilon_bound_check=bound_check,
        judge_cost=judge_calls * cost_per_judge_call if cost_per_judge_call is not None else None,
        metadata={"embeddings_normalized": True},
    )


def curve(records, bucket: int, policy: str = "") -> CurveSeries:
    """Cumulative static-origin served fraction sampled every `bucket` requests."""
    if bucket < 1:
        raise ValueError("bucket must be >= 1")
    records = list(records)
    xs: list[int] = []
    ys: list[float] = []
    cumulative = 0
    for i, r in enumerate(records, 1):
        if r.origin in (ORIGIN_STATIC, ORIGIN_DYNAMIC_PROMOTED):
            cumulative += 1
        if i % bucket == 0 or i == len(records):
            xs.append(i)
            ys.append(cumulative / i)
    return CurveSeries(policy=policy, x=xs, y=ys)


def compare(baseline: SummaryReport, krites: SummaryReport) -> ComparisonReport:
    """Side-by-side gains; relative gain is a percentage over the baseline.

    A zero baseline fraction leaves the relative gain undefined (None); the
    absolute gain is always emitted. An overall hit-rate regression is
    flagged, not raised: promotions are expected to only add hits, so a
    regression is surfaced for inspection.
    """
    base = baseline.static_origin_fraction
    kf = krites.static_origin_fraction
    absolute = kf - base
    relative = (absolute / base) * 100.0 if base > 0 else None
    hit_delta = krites.hit_rate - baseline.hit_rate
    return ComparisonReport(
        baseline_static_origin_fraction=base,
        krites_static_origin_fraction=kf,
        absolute_gain=absolute,
        relative_gain_pct=relative,
        baseline_hit_rate=baseline.hit_rate,
        krites_hit_rate=krites.hit_rate,
        hit_rate_delta=hit_delta,
        hit_rate_regressed=hit_delta < 0,
        baseline_error_rate=baseline.error_rate,
        krites_error_rate=krites.error_rate,
        error_rate_delta=krites.error_rate - baseline.error_rate,
    )


def format_comparison_table(report: ComparisonReport) -> str:
    def pct(x):
        return f"{x * 100:.2f}%"

    gain = (
        f"{report.relative_gain_pct:+.1f}%"
        if report.relative_gain_pct is not None
        else "undefined"
    )
    rows = [
        ("metric", "baseline", "krites", "relative gain"),
        (
            "static_origin_fraction",
            pct(report.baseline_static_origin_fraction),
            pct(report.krites_static_origin_fraction),
            gain,
        ),
        (
            "hit_rate",
            pct(report.baseline_hit_rate),
            pct(report.krites_hit_rate),
            f"{report.hit_rate_delta * 100:+.2f}pp",
        ),
        (
            "error_rate",
            pct(report.baseline_error_rate),
            pct(report.krites_error_rate),
            f"{report.error_rate_delta * 100:+.2f}pp",
        ),
    ]
    widths = [max(len(row[i]) for row in rows) for i in range(4)]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows]
    if report.hit_rate_regressed:
        lines.append("warning: overall hit rate regressed under krites")
    return "\n".join(lines)


def write_summary_json(report: SummaryReport, path) -> None:
    Path(path).write_text(json.dumps(asdict(report), sort_keys=True, indent=2) + "\n")


def write_comparison_json(report: ComparisonReport, path) -> None:
    Path(path).write_text(json.dumps(asdict(report), sort_keys=True, indent=2) + "\n")


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records_csv(records, path) -> None:
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(_CSV_COLUMNS)
        for r in records:
            writer.writerow([_format_cell(getattr(r, column)) for column in _CSV_COLUMNS])


def read_records_csv(path) -> list[ServeRecord]:
    source = Path(path)
    with source.open(newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{source}: empty records file")
        if tuple(header) != _CSV_COLUMNS:
            raise ValueError(f"{source}: unexpected header {header}")
        records = []
        for row in reader:
            values = dict(zip(_CSV_COLUMNS, row))
            records.append(
                ServeRecord(
                    request_id=int(values["request_id"]),
                    origin=values["origin"],
                    answer_class_id=int(values["answer_class_id"]),
                    s_static=float(values["s_static"]) if values["s_static"] else None,
                    s_dynamic=float(values["s_dynamic"]) if values["s_dynamic"] else None,
                    error=values["error"] == "true",
                    verify_outcome=values["verify_outcome"] or None,
                    judge_calls_so_far=int(values["judge_calls_so_far"]),
                    served_entry_id=(
                        int(values["served_entry_id"]) if values["served_entry_id"] else None
                    ),
                )
            )
    if not records:
        raise ValueError(f"{source}: no records")
    return records


def write_curves_csv(series_list, path) -> None:
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["policy", "x", "y"])
        for series in series_list:
            for x, y in zip(series.x, series.y):
                writer.writerow([series.policy, x, repr(float(y))])
