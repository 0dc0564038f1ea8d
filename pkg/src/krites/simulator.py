"""Deterministic request-by-request event loop.

Logical time is the request index within the simulated stream; there is no
wall-clock model. For each request t the loop (1) applies every promotion
that matured by t, (2) looks up the tiers, (3) applies the policy decision,
(4) executes the resulting touch or write-back, (5) enqueues any
verification trigger at index t, and (6) appends a ServeRecord. Promotions
are applied before serving, so a promotion enqueued at t with delay 1 is
visible to request t+1. Nothing in the loop consumes randomness, which is
what makes paired runs exactly comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .cache_tiers import (
    PROMOTION_APPLIED,
    DynamicTier,
    DynamicTierConfig,
    StaticTier,
)
from .policy import (
    ORIGIN_BACKEND,
    ORIGIN_DYNAMIC,
    ORIGIN_STATIC,
    Thresholds,
    decide_baseline,
    decide_krites,
)
from .verification import (
    ExternalJudge,
    OracleJudge,
    ScriptedJudge,
    Verifier,
    VerifierConfig,
    VerifierStats,
)
from .workload import SplitConfig

POLICY_BASELINE = "baseline"
POLICY_KRITES = "krites"

ORIGIN_DYNAMIC_PROMOTED = "dynamic_promoted"
ORIGIN_DYNAMIC_GENERATED = "dynamic_generated"

JUDGE_KINDS = ("oracle", "scripted", "external")


@dataclass(frozen=True)
class JudgeSpec:
    kind: str = "oracle"
    epsilon: float = 0.0  # scripted false-approve rate
    false_reject: float = 0.0
    seed: int = 0
    command: str | None = None
    url: str | None = None
    timeout: float = 10.0

    def __post_init__(self):
        if self.kind not in JUDGE_KINDS:
            raise ValueError(f"judge kind must be one of {JUDGE_KINDS}, got {self.kind!r}")
        if self.kind == "external" and (self.command is None) == (self.url is None):
            raise ValueError("external judge needs exactly one of command or url")


@dataclass(frozen=True)
class SimConfig:
    policy: str
    thresholds: Thresholds
    dynamic: DynamicTierConfig
    verifier: VerifierConfig = VerifierConfig()
    judge: JudgeSpec = JudgeSpec()
    split: SplitConfig | None = None
    verify_on_dynamic_hit: bool = True

    def __post_init__(self):
        if self.policy not in (POLICY_BASELINE, POLICY_KRITES):
            raise ValueError(f"policy must be baseline or krites, got {self.policy!r}")


@dataclass(frozen=True)
class ServeRecord:
    request_id: int
    origin: str
    answer_class_id: int
    s_static: float | None
    s_dynamic: float | None
    error: bool
    verify_outcome: str | None
    judge_calls_so_far: int
    served_entry_id: int | None


@dataclass(eq=False)
class RunResult:
    policy: str
    records: list[ServeRecord]
    dynamic_tier: DynamicTier
    verifier_stats: VerifierStats | None
    promotion_reuse: dict[int, int] = field(default_factory=dict)
    promotions_applied: int = 0
    promotions_superseded: int = 0


def make_judge(spec: JudgeSpec):
    if spec.kind == "oracle":
        return OracleJudge()
    if spec.kind == "scripted":
        return ScriptedJudge(
            false_approve=spec.epsilon, false_reject=spec.false_reject, seed=spec.seed
        )
    return ExternalJudge(command=spec.command, url=spec.url, timeout=spec.timeout)


def default_backend(request) -> str:
    """Stand-in agentic backend: always correct for the query's class."""
    return f"generated:{request.class_id}"


def _validate_inputs(requests, static_tier: StaticTier) -> int | None:
    dimension = static_tier.dimension
    for r in requests:
        d = r.embedding.shape[0]
        if dimension is None:
            dimension = d
        elif d != dimension:
            raise ValueError(
                f"request {r.request_id} has dimension {d}, expected {dimension}"
            )
    return dimension


def run(requests, cfg: SimConfig, static_tier: StaticTier, backend=default_backend) -> RunResult:
    """Simulate one policy over the stream against a fixed static tier."""
    requests = list(requests)
    dimension = _validate_inputs(requests, static_tier)
    dynamic = DynamicTier(cfg.dynamic, dimension if dimension is not None else 1)
    krites = cfg.policy == POLICY_KRITES
    verifier = None
    if krites:
        verifier = Verifier(cfg.verifier, make_judge(cfg.judge), static_tier.get)

    records: list[ServeRecord] = []
    reuse: dict[int, int] = {}
    applied = 0
    superseded = 0

    for t, request in enumerate(requests):
        if verifier is not None:
            for command in verifier.mature(t):
                result = dynamic.upsert_promotion(
                    command.prompt_key,
                    static_tier.get(command.static_id),
                    command.embedding,
                    command.trigger_index,
                )
                if result.outcome == PROMOTION_APPLIED:
                    applied += 1
                    reuse.setdefault(result.entry_id, 0)
                else:
                    superseded += 1

        static_result = static_tier.lookup(request.embedding)
        dynamic_result = None
        if static_result is None or static_result[1] < cfg.thresholds.tau_static:
            dynamic_result = dynamic.lookup(request.embedding, t)

        if krites:
            decision = decide_krites(
                request,
                static_result,
                dynamic_result,
                cfg.thresholds,
                backend,
                now=t,
                verify_on_dynamic_hit=cfg.verify_on_dynamic_hit,
            )
        else:
            decision = decide_baseline(
                request, static_result, dynamic_result, cfg.thresholds, backend
            )

        served_entry_id = None
        if decision.origin == ORIGIN_DYNAMIC:
            entry = dynamic_result[0]
            served_entry_id = entry.entry_id
            promoted = entry.static_origin
            dynamic.touch(entry.entry_id, t)
            if promoted:
                reuse[entry.entry_id] = reuse.get(entry.entry_id, 0) + 1
            origin = ORIGIN_DYNAMIC_PROMOTED if promoted else ORIGIN_DYNAMIC_GENERATED
        elif decision.origin == ORIGIN_STATIC:
            origin = ORIGIN_STATIC
        else:
            origin = ORIGIN_BACKEND

        if decision.writeback is not None:
            wb = decision.writeback
            dynamic.insert_writeback(wb.prompt_key, wb.answer, wb.answer_class_id, wb.embedding, t)

        verify_outcome = None
        if verifier is not None and decision.verify is not None:
            verify_outcome = verifier.enqueue(decision.verify, t)

        error = origin != ORIGIN_BACKEND and decision.answer_class_id != request.class_id
        records.append(
            ServeRecord(
                request_id=request.request_id,
                origin=origin,
                answer_class_id=decision.answer_class_id,
                s_static=static_result[1] if static_result is not None else None,
                s_dynamic=dynamic_result[1] if dynamic_result is not None else None,
                error=error,
                verify_outcome=verify_outcome,
                judge_calls_so_far=verifier.stats.judge_calls if verifier is not None else 0,
                served_entry_id=served_entry_id,
            )
        )

    return RunResult(
        policy=cfg.policy,
        records=records,
        dynamic_tier=dynamic,
        verifier_stats=verifier.stats if verifier is not None else None,
        promotion_reuse=reuse,
        promotions_applied=applied,
        promotions_superseded=superseded,
    )


def run_paired(requests, cfg: SimConfig, static_tier: StaticTier, backend=default_backend):
    """Run baseline and krites on identical inputs with independent dynamic tiers."""
    baseline = run(requests, replace(cfg, policy=POLICY_BASELINE), static_tier, backend)
    krites = run(requests, replace(cfg, policy=POLICY_KRITES), static_tier, backend)
    return baseline, krites
