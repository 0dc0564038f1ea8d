#!/usr/bin/env python3
"""Sweep the grey-zone floor and print the judge-cost / coverage tradeoff.

Raising the floor cuts judge volume but strands more borderline static
candidates; this sweep makes the knee visible for a given workload. One
fixed workload, one row per floor value.
"""

import argparse

from krites.cache_tiers import DynamicTierConfig, build_static_tier
from krites.policy import Thresholds
from krites.reporting import summarize
from krites.simulator import SimConfig, run, run_paired
from krites.verification import VerifierConfig
from krites.workload import (
    SplitConfig,
    SynthConfig,
    shuffle_and_split,
    static_entries_from_history,
    synthesize,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--requests", type=int, default=10000)
    ap.add_argument("--tau", type=float, default=0.92)
    ap.add_argument("--floors", type=float, nargs="+",
                    default=[0.0, 0.3, 0.5, 0.6, 0.7, 0.8, 0.88, 0.92])
    ap.add_argument("--cost-per-judge-call", type=float, default=None)
    args = ap.parse_args()

    trace = synthesize(
        SynthConfig(
            num_classes=40,
            requests=args.requests,
            dimension=64,
            zipf_exponent=1.1,
            intra_class_similarity=(0.87, 0.02),
            paraphrases_per_class=4,
            seed=args.seed,
        )
    )
    history, evaluation = shuffle_and_split(trace, SplitConfig(0.2, shuffle_seed=args.seed))
    tier = build_static_tier(static_entries_from_history(history, 0.6).entries)

    baseline_cfg = SimConfig(
        policy="baseline",
        thresholds=Thresholds(args.tau, args.tau, 0.0),
        dynamic=DynamicTierConfig(capacity=2000),
    )
    baseline = run(evaluation, baseline_cfg, tier)
    base_fraction = summarize(baseline.records).static_origin_fraction
    print(f"baseline static_origin_fraction: {base_fraction:.4f}")
    print()
    header = "sigma_min  static_frac  gain_pct  judge_calls  p_grey  serves/call"
    if args.cost_per_judge_call is not None:
        header += "  judge_cost"
    print(header)

    for floor in args.floors:
        thresholds = Thresholds(args.tau, args.tau, floor)
        cfg = SimConfig(
            policy="krites",
            thresholds=thresholds,
            dynamic=DynamicTierConfig(capacity=2000),
            verifier=VerifierConfig(verify_delay=1),
        )
        _, kri = run_paired(evaluation, cfg, tier)
        report = summarize(
            kri.records,
            thresholds,
            verifier_stats=kri.verifier_stats,
            promotion_reuse=kri.promotion_reuse,
            cost_per_judge_call=args.cost_per_judge_call,
        )
        gain = (
            (report.static_origin_fraction - base_fraction) / base_fraction * 100
            if base_fraction
            else float("nan")
        )
        roi = report.roi_serves_per_judge_call
        row = (
            f"{floor:9.2f}  {report.static_origin_fraction:11.4f}  {gain:8.1f}  "
            f"{report.judge_calls:11d}  {report.grey_zone_fraction:6.3f}  "
            f"{roi if roi is not None else float('nan'):11.3f}"
        )
        if report.judge_cost is not None:
            row += f"  {report.judge_cost:10.2f}"
        print(row)


if __name__ == "__main__":
    main()
