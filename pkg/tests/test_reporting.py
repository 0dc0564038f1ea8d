import json

import pytest

from krites.policy import Thresholds
from krites.reporting import (
    compare,
    curve,
    read_records_csv,
    summarize,
    write_curves_csv,
    write_records_csv,
    write_summary_json,
)
from krites.simulator import ServeRecord
from krites.verification import VerifierStats


def record(i, origin, error=False, s_static=None, verify_outcome=None, judge_calls=0):
    return ServeRecord(
        request_id=i,
        origin=origin,
        answer_class_id=0,
        s_static=s_static,
        s_dynamic=None,
        error=error,
        verify_outcome=verify_outcome,
        judge_calls_so_far=judge_calls,
        served_entry_id=None,
    )


def records_by_origin(counts):
    out = []
    i = 0
    for origin, n in counts.items():
        for _ in range(n):
            out.append(record(i, origin))
            i += 1
    return out


def synthetic_report(static_origin_fraction, total=1000, hit_rate=0.5, error_rate=0.0):
    n_static = round(static_origin_fraction * total)
    n_hits = round(hit_rate * total)
    counts = {
        "static_direct": n_static,
        "dynamic_generated": n_hits - n_static,
        "backend": total - n_hits,
    }
    records = records_by_origin(counts)
    for i in range(round(error_rate * total)):
        records[i] = record(i, "static_direct", error=True)
    return summarize(records)


def test_summarize_all_backend():
    report = summarize(records_by_origin({"backend": 10}))
    assert report.hit_rate == 0.0
    assert report.static_origin_fraction == 0.0
    assert report.error_rate == 0.0


def test_summarize_static_origin_fraction():
    counts = {"static_direct": 2, "dynamic_promoted": 1, "dynamic_generated": 3, "backend": 4}
    report = summarize(records_by_origin(counts))
    assert report.total_requests == 10
    assert report.static_origin_fraction == pytest.approx(0.3)
    assert report.hit_rate == pytest.approx(0.6)
    assert report.promoted_hit_traffic == pytest.approx(0.1)


def test_summarize_empty_rejected():
    with pytest.raises(ValueError):
        summarize([])


def test_origin_counts_partition_stream():
    counts = {"static_direct": 5, "dynamic_promoted": 2, "dynamic_generated": 1, "backend": 7}
    report = summarize(records_by_origin(counts))
    assert sum(report.origin_counts.values()) == report.total_requests


def test_grey_zone_fraction_needs_thresholds():
    records = [
        record(0, "backend", s_static=0.5),
        record(1, "backend", s_static=0.95),
        record(2, "backend", s_static=None),
        record(3, "static_direct", s_static=0.93),
    ]
    th = Thresholds(0.92, 0.92, 0.0)
    assert summarize(records, th).grey_zone_fraction == pytest.approx(0.25)
    assert summarize(records).grey_zone_fraction is None


def test_grey_zone_fraction_matches_enqueue_attempts():
    records = [
        record(0, "backend", s_static=0.5, verify_outcome="queued"),
        record(1, "backend", s_static=0.6, verify_outcome="queued"),
        record(2, "dynamic_generated", s_static=0.5, verify_outcome="deduplicated"),
        record(3, "backend", s_static=0.95),
    ]
    th = Thresholds(0.92, 0.92, 0.0)
    report = summarize(records, th)
    attempts = sum(1 for r in records if r.verify_outcome is not None)
    assert report.grey_zone_fraction * report.total_requests == attempts


def test_epsilon_bound_and_reuse_fields():
    records = [
        record(0, "dynamic_promoted"),
        record(1, "dynamic_promoted", error=True),
        record(2, "backend"),
        record(3, "backend"),
    ]
    stats = VerifierStats(enqueued=3, judge_calls=3, approvals=2, rejections=1)
    report = summarize(
        records,
        Thresholds(0.9, 0.9, 0.0),
        verifier_stats=stats,
        promotion_reuse={4: 2, 9: 0},
        epsilon=0.2,
        cost_per_judge_call=0.5,
    )
    assert report.approval_rate == pytest.approx(2 / 3)
    assert report.epsilon_bound_check["observed_promoted_error_rate"] == pytest.approx(0.25)
    assert report.epsilon_bound_check["epsilon_times_p_prom"] == pytest.approx(0.2 * 0.5)
    assert report.promotion_reuse["promoted_entries"] == 2
    assert report.promotion_reuse["total_promoted_serves"] == 2
    assert report.promotion_reuse["histogram"] == [(0, 1), (2, 1)]
    assert report.roi_serves_per_judge_call == pytest.approx(2 / 3)
    assert report.judge_cost == pytest.approx(1.5)
    assert report.judge_calls <= sum(1 for r in records if r.s_static is not None) + 3


def test_curve_all_backend_is_zero():
    series = curve(records_by_origin({"backend": 30}), bucket=10)
    assert series.x == [10, 20, 30]
    assert series.y == [0.0, 0.0, 0.0]


def test_curve_single_bucket_equals_summary():
    counts = {"static_direct": 3, "backend": 7}
    records = records_by_origin(counts)
    series = curve(records, bucket=len(records))
    report = summarize(records)
    assert series.x == [10]
    assert series.y == [report.static_origin_fraction]


def test_curve_includes_final_partial_bucket():
    series = curve(records_by_origin({"backend": 25}), bucket=10)
    assert series.x == [10, 20, 25]


def test_curve_diverges_after_promotion_wave():
    # two-phase stream: promotions only land in the second half
    base_records = records_by_origin({"dynamic_generated": 100})
    kri_records = records_by_origin({"dynamic_generated": 50, "dynamic_promoted": 50})
    base_curve = curve(base_records, bucket=25)
    kri_curve = curve(kri_records, bucket=25)
    assert base_curve.y == [0.0, 0.0, 0.0, 0.0]
    assert kri_curve.y[0] == 0.0
    assert kri_curve.y[1] == 0.0
    assert kri_curve.y[2] > base_curve.y[2]
    assert kri_curve.y[3] > kri_curve.y[2]


def test_compare_identical_reports():
    report = synthetic_report(0.1)
    result = compare(report, report)
    assert result.absolute_gain == 0.0
    assert result.relative_gain_pct == 0.0
    assert result.hit_rate_regressed is False


def test_compare_hand_computed_gains():
    result = compare(synthetic_report(0.082), synthetic_report(0.194))
    assert result.relative_gain_pct == pytest.approx(136.585, abs=0.01)
    result = compare(synthetic_report(0.022), synthetic_report(0.086))
    assert result.relative_gain_pct == pytest.approx(290.909, abs=0.01)


def test_compare_zero_baseline_is_undefined():
    result = compare(synthetic_report(0.0), synthetic_report(0.25))
    assert result.relative_gain_pct is None
    assert result.absolute_gain == pytest.approx(0.25)


def test_compare_flags_hit_rate_regression():
    result = compare(
        synthetic_report(0.1, hit_rate=0.6), synthetic_report(0.2, hit_rate=0.5)
    )
    assert result.hit_rate_regressed is True


def test_records_csv_roundtrip(tmp_path):
    records = [
        ServeRecord(0, "backend", 3, None, None, False, "queued", 0, None),
        ServeRecord(1, "dynamic_promoted", 2, 0.8123456789012345, 1.0, True, None, 4, 17),
        ServeRecord(2, "static_direct", 1, 0.95, None, False, None, 4, None),
    ]
    path = tmp_path / "records.csv"
    write_records_csv(records, path)
    assert read_records_csv(path) == records


def test_read_records_csv_rejects_empty(tmp_path):
    path = tmp_path / "records.csv"
    path.write_text("")
    with pytest.raises(ValueError):
        read_records_csv(path)


def test_summary_json_stable_keys(tmp_path):
    report = synthetic_report(0.1)
    path = tmp_path / "summary.json"
    write_summary_json(report, path)
    parsed = json.loads(path.read_text())
    assert list(parsed) == sorted(parsed)
    assert parsed["metadata"]["embeddings_normalized"] is True
    assert parsed["static_origin_fraction"] == pytest.approx(0.1)


def test_curves_csv_format(tmp_path):
    series = curve(records_by_origin({"static_direct": 4, "backend": 4}), 4, policy="baseline")
    path = tmp_path / "curves.csv"
    write_curves_csv([series], path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "policy,x,y"
    assert lines[1].startswith("baseline,4,")
