"""Command-line entry point.

Subcommands: generate, build-static, simulate, report. Every config key can
come from a flat JSON config file (--config) and be overridden by the flag
of the same name; resolved configs are snapshotted into the run manifest so
a simulation can be replayed bit-for-bit with --manifest. Exit codes:
0 success, 1 validation error, 2 runtime/IO error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .cache_tiers import DynamicTierConfig, build_static_tier
from .policy import Thresholds
from .reporting import (
    compare,
    curve,
    format_comparison_table,
    read_records_csv,
    summarize,
    write_comparison_json,
    write_curves_csv,
    write_records_csv,
    write_summary_json,
)
from .simulator import (
    POLICY_BASELINE,
    POLICY_KRITES,
    JudgeSpec,
    SimConfig,
    run,
    run_paired,
)
from .verification import VerifierConfig
from .workload import (
    SplitConfig,
    SynthConfig,
    load_static_entries,
    load_trace,
    shuffle_and_split,
    static_entries_from_history,
    synthesize,
    write_static_entries,
    write_trace,
)

CONFIG_VERSION = 1

DEFAULTS = {
    # simulation
    "policy": "paired",
    "tau_static": 0.92,
    "tau_dynamic": 0.92,
    "sigma_min": 0.0,
    "capacity": 512,
    "ttl": None,
    "verify_delay": 1,
    "verify_on_dynamic_hit": True,
    "judge": "oracle",
    "epsilon": 0.0,
    "false_reject": 0.0,
    "judge_seed": 0,
    "judge_command": None,
    "judge_url": None,
    "judge_timeout": 10.0,
    "rate_limit": None,
    "queue_capacity": None,
    "memoize_verdicts": False,
    "bucket": 100,
    "cost_per_judge_call": None,
    # split / workload
    "seed": 0,
    "history_fraction": 0.2,
    "coverage": 0.6,
    # synthetic generation
    "requests": 10000,
    "num_classes": 100,
    "dimension": 64,
    "zipf_exponent": 1.0,
    "intra_mean": 0.9,
    "intra_spread": 0.02,
    "paraphrases_per_class": 5,
}

SIM_KEYS = (
    "policy",
    "tau_static",
    "tau_dynamic",
    "sigma_min",
    "capacity",
    "ttl",
    "verify_delay",
    "verify_on_dynamic_hit",
    "judge",
    "epsilon",
    "false_reject",
    "judge_seed",
    "judge_command",
    "judge_url",
    "judge_timeout",
    "rate_limit",
    "queue_capacity",
    "memoize_verdicts",
    "bucket",
    "cost_per_judge_call",
)
SPLIT_KEYS = ("seed", "history_fraction", "coverage")
GEN_KEYS = (
    "seed",
    "requests",
    "num_classes",
    "dimension",
    "zipf_exponent",
    "intra_mean",
    "intra_spread",
    "paraphrases_per_class",
)


class _Parser(argparse.ArgumentParser):
    # Usage mistakes are validation errors per the exit-code contract.
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _load_config_file(path) -> dict:
    source = Path(path)
    try:
        raw = json.loads(source.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{source}: invalid JSON config ({exc})") from exc
    if not isinstance(raw, dict):
        raise ValueError(f"{source}: config must be a flat JSON object")
    version = raw.pop("config_version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ValueError(f"{source}: unsupported config_version {version}")
    unknown = sorted(set(raw) - set(DEFAULTS))
    if unknown:
        raise ValueError(f"{source}: unknown config keys {unknown}")
    return raw


def _resolve(args, keys) -> dict:
    merged = {k: DEFAULTS[k] for k in keys}
    config_path = getattr(args, "config", None)
    if config_path:
        file_cfg = _load_config_file(config_path)
        for k in keys:
            if k in file_cfg:
                merged[k] = file_cfg[k]
    for k in keys:
        value = getattr(args, k, None)
        if value is not None:
            merged[k] = value
    return merged


def _explicit_flags(args, keys) -> list[str]:
    return [k for k in keys if getattr(args, k, None) is not None]


def _parse_rate_limit(text: str):
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"rate limit must be 'calls,window', got {text!r}")
    return [int(parts[0]), int(parts[1])]


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _digest_check(path, expected: str) -> None:
    actual = _sha256(path)
    if actual != expected:
        raise ValueError(
            f"input digest mismatch for {path}: manifest says {expected}, file is {actual}"
        )


def cmd_generate(args) -> int:
    cfg = _resolve(args, GEN_KEYS)
    synth = SynthConfig(
        num_classes=cfg["num_classes"],
        requests=cfg["requests"],
        dimension=cfg["dimension"],
        zipf_exponent=cfg["zipf_exponent"],
        intra_class_similarity=(cfg["intra_mean"], cfg["intra_spread"]),
        paraphrases_per_class=cfg["paraphrases_per_class"],
        seed=cfg["seed"],
    )
    requests = synthesize(synth)
    try:
        write_trace(requests, args.out)
    except OSError as exc:
        raise OSError(f"cannot write trace to {args.out}: {exc}") from exc
    print(f"wrote {len(requests)} requests to {args.out}")
    return 0


def cmd_build_static(args) -> int:
    cfg = _resolve(args, SPLIT_KEYS)
    split_cfg = SplitConfig(
        history_fraction=cfg["history_fraction"],
        shuffle_seed=cfg["seed"],
        coverage=cfg["coverage"],
    )
    requests = load_trace(args.trace)
    if not requests:
        raise ValueError(f"{args.trace}: trace is empty")
    history, evaluation = shuffle_and_split(requests, split_cfg)
    if not history:
        raise ValueError(
            "history prefix is empty; increase history_fraction or the trace size"
        )
    selection = static_entries_from_history(history, split_cfg.coverage)
    write_static_entries(selection.entries, args.out_static)
    write_trace(evaluation, args.out_stream)
    print(
        f"history={len(history)} evaluation={len(evaluation)} "
        f"static_entries={len(selection.entries)} "
        f"coverage_achieved={selection.coverage_achieved:.4f}"
    )
    return 0


def _build_sim_config(cfg: dict, policy: str) -> SimConfig:
    rate = cfg["rate_limit"]
    return SimConfig(
        policy=policy,
        thresholds=Thresholds(
            tau_static=cfg["tau_static"],
            tau_dynamic=cfg["tau_dynamic"],
            sigma_min=cfg["sigma_min"],
        ),
        dynamic=DynamicTierConfig(capacity=cfg["capacity"], ttl=cfg["ttl"]),
        verifier=VerifierConfig(
            verify_delay=cfg["verify_delay"],
            max_judge_calls_per_window=tuple(rate) if rate is not None else None,
            queue_capacity=cfg["queue_capacity"],
            memoize_verdicts=cfg["memoize_verdicts"],
        ),
        judge=JudgeSpec(
            kind=cfg["judge"],
            epsilon=cfg["epsilon"],
            false_reject=cfg["false_reject"],
            seed=cfg["judge_seed"],
            command=cfg["judge_command"],
            url=cfg["judge_url"],
            timeout=cfg["judge_timeout"],
        ),
        verify_on_dynamic_hit=cfg["verify_on_dynamic_hit"],
    )


def _bound_epsilon(cfg: dict) -> float | None:
    if cfg["judge"] == "oracle":
        return 0.0
    if cfg["judge"] == "scripted":
        return cfg["epsilon"]
    return None  # external judge: false-approve rate unknown


def _write_single(out_dir: Path, result, thresholds, cfg):
    summary = summarize(
        result.records,
        thresholds,
        verifier_stats=result.verifier_stats,
        promotion_reuse=result.promotion_reuse,
        epsilon=_bound_epsilon(cfg),
        cost_per_judge_call=cfg["cost_per_judge_call"],
    )
    write_summary_json(summary, out_dir / "summary.json")
    write_records_csv(result.records, out_dir / "records.csv")
    write_curves_csv(
        [curve(result.records, cfg["bucket"], result.policy)], out_dir / "curves.csv"
    )
    print(
        f"{result.policy}: static_origin_fraction="
        f"{summary.static_origin_fraction:.4f} hit_rate={summary.hit_rate:.4f} "
        f"error_rate={summary.error_rate:.4f}"
    )
    return summary


def cmd_simulate(args) -> int:
    out_dir = Path(args.out_dir)
    if args.manifest:
        overridden = _explicit_flags(args, SIM_KEYS)
        if overridden or getattr(args, "config", None):
            raise ValueError(
                f"--manifest replays the recorded config; remove overrides {overridden}"
            )
        manifest_in = json.loads(Path(args.manifest).read_text())
        cfg = dict(DEFAULTS)
        cfg.update(manifest_in["config"])
        cfg = {k: cfg[k] for k in SIM_KEYS}
        static_path = manifest_in["inputs"]["static"]["path"]
        stream_path = manifest_in["inputs"]["stream"]["path"]
        _digest_check(static_path, manifest_in["inputs"]["static"]["sha256"])
        _digest_check(stream_path, manifest_in["inputs"]["stream"]["sha256"])
    else:
        if not args.static or not args.stream:
            raise ValueError("simulate requires --static and --stream (or --manifest)")
        cfg = _resolve(args, SIM_KEYS)
        static_path = args.static
        stream_path = args.stream
    if cfg["rate_limit"] is not None:
        cfg["rate_limit"] = list(cfg["rate_limit"])

    static_tier = build_static_tier(load_static_entries(static_path))
    stream = load_trace(stream_path)
    if not stream:
        raise ValueError(f"{stream_path}: evaluation stream is empty")
    if static_tier.dimension is not None and stream[0].embedding.shape[0] != static_tier.dimension:
        raise ValueError(
            f"dimension mismatch: static tier is {static_tier.dimension}-d, "
            f"stream is {stream[0].embedding.shape[0]}-d"
        )

    policy = cfg["policy"]
    if policy not in ("paired", POLICY_BASELINE, POLICY_KRITES):
        raise ValueError(f"policy must be baseline, krites or paired, got {policy!r}")

    out_dir.mkdir(parents=True, exist_ok=True)
    thresholds = Thresholds(cfg["tau_static"], cfg["tau_dynamic"], cfg["sigma_min"])

    if policy == "paired":
        sim_cfg = _build_sim_config(cfg, POLICY_KRITES)
        base_res, krites_res = run_paired(stream, sim_cfg, static_tier)
        outputs = []
        summaries = []
        for result in (base_res, krites_res):
            sub = out_dir / result.policy
            sub.mkdir(parents=True, exist_ok=True)
            summaries.append(_write_single(sub, result, thresholds, cfg))
            outputs += [f"{result.policy}/summary.json", f"{result.policy}/records.csv",
                        f"{result.policy}/curves.csv"]
        write_curves_csv(
            [
                curve(base_res.records, cfg["bucket"], POLICY_BASELINE),
                curve(krites_res.records, cfg["bucket"], POLICY_KRITES),
            ],
            out_dir / "curves.csv",
        )
        comparison = compare(summaries[0], summaries[1])
        write_comparison_json(comparison, out_dir / "comparison.json")
        print(format_comparison_table(comparison))
        outputs += ["curves.csv", "comparison.json"]
    else:
        sim_cfg = _build_sim_config(cfg, policy)
        result = run(stream, sim_cfg, static_tier)
        _write_single(out_dir, result, thresholds, cfg)
        outputs = ["summary.json", "records.csv", "curves.csv"]

    manifest = {
        "artifact_version": __version__,
        "command": "simulate",
        "config": cfg,
        "inputs": {
            "static": {"path": str(static_path), "sha256": _sha256(static_path)},
            "stream": {"path": str(stream_path), "sha256": _sha256(stream_path)},
        },
        "outputs": sorted(outputs),
        "seeds": {"judge_seed": cfg["judge_seed"]},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return 0


def cmd_report(args) -> int:
    baseline_records = read_records_csv(args.baseline_records)
    krites_records = read_records_csv(args.krites_records)
    if len(baseline_records) != len(krites_records):
        raise ValueError(
            f"record streams have different lengths: "
            f"{len(baseline_records)} vs {len(krites_records)}"
        )
    if [r.request_id for r in baseline_records] != [r.request_id for r in krites_records]:
        raise ValueError("record streams disagree on request ids")
    comparison = compare(summarize(baseline_records), summarize(krites_records))
    print(format_comparison_table(comparison))
    if args.out:
        write_comparison_json(comparison, args.out)
    return 0


def _add_config_flag(parser) -> None:
    parser.add_argument("--config", help="flat JSON config file; flags override its keys")


def _add_sim_flags(parser) -> None:
    parser.add_argument("--policy", choices=["baseline", "krites", "paired"])
    parser.add_argument("--tau-static", type=float, dest="tau_static")
    parser.add_argument("--tau-dynamic", type=float, dest="tau_dynamic")
    parser.add_argument("--sigma-min", type=float, dest="sigma_min")
    parser.add_argument("--capacity", type=int)
    parser.add_argument("--ttl", type=int)
    parser.add_argument("--verify-delay", type=int, dest="verify_delay")
    parser.add_argument(
        "--verify-on-dynamic-hit",
        action=argparse.BooleanOptionalAction,
        dest="verify_on_dynamic_hit",
        default=None,
    )
    parser.add_argument("--judge", choices=["oracle", "scripted", "external"])
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--false-reject", type=float, dest="false_reject")
    parser.add_argument("--judge-seed", type=int, dest="judge_seed")
    parser.add_argument("--judge-command", dest="judge_command")
    parser.add_argument("--judge-url", dest="judge_url")
    parser.add_argument("--judge-timeout", type=float, dest="judge_timeout")
    parser.add_argument(
        "--rate-limit", type=_parse_rate_limit, dest="rate_limit",
        help="judge rate limit as 'calls,window'",
    )
    parser.add_argument("--queue-capacity", type=int, dest="queue_capacity")
    parser.add_argument(
        "--memoize-verdicts",
        action=argparse.BooleanOptionalAction,
        dest="memoize_verdicts",
        default=None,
    )
    parser.add_argument("--bucket", type=int)
    parser.add_argument("--cost-per-judge-call", type=float, dest="cost_per_judge_call")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="krites", description=__doc__)
    parser.add_argument("--version", action="version", version=f"krites {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic JSONL trace")
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int)
    gen.add_argument("--requests", type=int)
    gen.add_argument("--num-classes", type=int, dest="num_classes")
    gen.add_argument("--dimension", type=int)
    gen.add_argument("--zipf-exponent", type=float, dest="zipf_exponent")
    gen.add_argument("--intra-mean", type=float, dest="intra_mean")
    gen.add_argument("--intra-spread", type=float, dest="intra_spread")
    gen.add_argument("--paraphrases-per-class", type=int, dest="paraphrases_per_class")
    _add_config_flag(gen)
    gen.set_defaults(func=cmd_generate)

    build = sub.add_parser(
        "build-static", help="split a trace and build the static tier from history"
    )
    build.add_argument("--trace", required=True)
    build.add_argument("--out-static", required=True, dest="out_static")
    build.add_argument("--out-stream", required=True, dest="out_stream")
    build.add_argument("--seed", type=int)
    build.add_argument("--history-fraction", type=float, dest="history_fraction")
    build.add_argument("--coverage", type=float)
    _add_config_flag(build)
    build.set_defaults(func=cmd_build_static)

    sim = sub.add_parser("simulate", help="run one policy or a paired comparison")
    sim.add_argument("--static", help="static tier JSONL")
    sim.add_argument("--stream", help="evaluation stream JSONL")
    sim.add_argument("--out-dir", required=True, dest="out_dir")
    sim.add_argument("--manifest", help="replay a recorded run; verifies input digests")
    _add_sim_flags(sim)
    _add_config_flag(sim)
    sim.set_defaults(func=cmd_simulate)

    rep = sub.add_parser("report", help="compare two record dumps")
    rep.add_argument("baseline_records")
    rep.add_argument("krites_records")
    rep.add_argument("--out", help="also write the comparison as JSON")
    rep.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
