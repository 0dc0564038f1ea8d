#!/usr/bin/env python3
"""End-to-end gain experiment on a repeat-heavy synthetic workload.

Generates a Zipf workload whose intra-class similarity sits inside the grey
zone, builds the static tier from the history prefix, runs both policies on
the held-out stream and prints the hit-composition comparison. Artifacts
(summary JSON, record dumps, cumulative curves) land in --out-dir.
"""

import argparse
from pathlib import Path

from krites.cache_tiers import DynamicTierConfig, build_static_tier
from krites.policy import Thresholds
from krites.reporting import (
    compare,
    curve,
    format_comparison_table,
    summarize,
    write_comparison_json,
    write_curves_csv,
    write_records_csv,
    write_summary_json,
)
from krites.simulator import SimConfig, run_paired
from krites.verification import VerifierConfig
from krites.workload import (
    SplitConfig,
    SynthConfig,
    shuffle_and_split,
    static_entries_from_history,
    synthesize,
)


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="out/gain_experiment")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--requests", type=int, default=20000)
    ap.add_argument("--num-classes", type=int, default=60)
    ap.add_argument("--dimension", type=int, default=64)
    ap.add_argument("--paraphrases-per-class", type=int, default=4)
    ap.add_argument("--intra-mean", type=float, default=0.87)
    ap.add_argument("--intra-spread", type=float, default=0.02)
    ap.add_argument("--zipf-exponent", type=float, default=1.1)
    ap.add_argument("--tau", type=float, default=0.92)
    ap.add_argument("--sigma-min", type=float, default=0.0)
    ap.add_argument("--capacity", type=int, default=2000)
    ap.add_argument("--verify-delay", type=int, default=1)
    ap.add_argument("--coverage", type=float, default=0.6)
    ap.add_argument("--bucket", type=int, default=200)
    return ap.parse_args()


def main():
    args = parse_args()
    trace = synthesize(
        SynthConfig(
            num_classes=args.num_classes,
            requests=args.requests,
            dimension=args.dimension,
            zipf_exponent=args.zipf_exponent,
            intra_class_similarity=(args.intra_mean, args.intra_spread),
            paraphrases_per_class=args.paraphrases_per_class,
            seed=args.seed,
        )
    )
    history, evaluation = shuffle_and_split(trace, SplitConfig(0.2, shuffle_seed=args.seed))
    selection = static_entries_from_history(history, args.coverage)
    tier = build_static_tier(selection.entries)
    print(
        f"history={len(history)} evaluation={len(evaluation)} "
        f"static_entries={len(selection.entries)} "
        f"coverage={selection.coverage_achieved:.3f}"
    )

    thresholds = Thresholds(args.tau, args.tau, args.sigma_min)
    cfg = SimConfig(
        policy="krites",
        thresholds=thresholds,
        dynamic=DynamicTierConfig(capacity=args.capacity),
        verifier=VerifierConfig(verify_delay=args.verify_delay),
    )
    base, kri = run_paired(evaluation, cfg, tier)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base_summary = summarize(base.records, thresholds, promotion_reuse=base.promotion_reuse, epsilon=0.0)
    kri_summary = summarize(
        kri.records,
        thresholds,
        verifier_stats=kri.verifier_stats,
        promotion_reuse=kri.promotion_reuse,
        epsilon=0.0,
    )
    write_summary_json(base_summary, out / "summary_baseline.json")
    write_summary_json(kri_summary, out / "summary_krites.json")
    write_records_csv(base.records, out / "records_baseline.csv")
    write_records_csv(kri.records, out / "records_krites.csv")
    write_curves_csv(
        [curve(base.records, args.bucket, "baseline"), curve(kri.records, args.bucket, "krites")],
        out / "curves.csv",
    )
    comparison = compare(base_summary, kri_summary)
    write_comparison_json(comparison, out / "comparison.json")

    print()
    print(format_comparison_table(comparison))
    print()
    print(
        f"judge_calls={kri_summary.judge_calls} approvals={kri_summary.approvals} "
        f"p_grey={kri_summary.grey_zone_fraction:.3f} "
        f"p_prom={kri_summary.promoted_hit_traffic:.3f}"
    )
    if kri_summary.roi_serves_per_judge_call is not None:
        print(f"promoted serves per judge call: {kri_summary.roi_serves_per_judge_call:.3f}")
    print(f"artifacts in {out}")


if __name__ == "__main__":
    main()
