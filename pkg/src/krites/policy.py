"""Pure serving decisions for the two cache policies.

Both policies share the same on-path rule: serve the static tier at or above
tau_static, else the dynamic tier at or above tau_dynamic, else call the
backend and write the answer back. The verified variant additionally emits a
verification trigger when the nearest static neighbor lands in the grey zone
[sigma_min, tau_static). Decisions never mutate tiers; they return commands
for the caller to apply, which keeps the two policies directly comparable.

Threshold comparisons are exact floating-point comparisons on purpose: an
epsilon would silently reclassify hits and misses.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

ORIGIN_STATIC = "static_direct"
ORIGIN_DYNAMIC = "dynamic_hit"
ORIGIN_BACKEND = "backend"


@dataclass(frozen=True)
class Thresholds:
    tau_static: float
    tau_dynamic: float
    sigma_min: float = 0.0

    def __post_init__(self):
        for name in ("tau_static", "tau_dynamic", "sigma_min"):
            value = getattr(self, name)
            if not -1.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [-1, 1], got {value}")
        # sigma_min == tau_static is allowed: the grey zone degenerates to
        # empty and the verified policy reduces to the baseline.
        if self.sigma_min > self.tau_static:
            raise ValueError("sigma_min must not exceed tau_static")


@dataclass(frozen=True, eq=False)
class WritebackCommand:
    prompt_key: str
    answer: str
    answer_class_id: int
    embedding: np.ndarray


@dataclass(frozen=True, eq=False)
class VerificationTrigger:
    query_prompt_key: str
    query_class_id: int
    query_embedding: np.ndarray
    static_id: int
    trigger_index: int


@dataclass(frozen=True, eq=False)
class ServeDecision:
    origin: str
    answer: str
    answer_class_id: int
    static_neighbor: tuple[int, float] | None
    dynamic_neighbor: tuple[int, float] | None
    writeback: WritebackCommand | None
    verify: VerificationTrigger | None


def is_grey_zone(s_static: float | None, thresholds: Thresholds) -> bool:
    """True iff a static neighbor exists with sigma_min <= s < tau_static."""
    if s_static is None:
        return False
    return thresholds.sigma_min <= s_static < thresholds.tau_static


def decide_baseline(
    request,
    static_result,
    dynamic_result,
    thresholds: Thresholds,
    backend: Callable[[object], str],
) -> ServeDecision:
    """Static-threshold tiered policy; never emits verification triggers.

    `request` needs prompt_text, class_id and embedding attributes.
    `static_result` / `dynamic_result` are (entry, similarity) pairs from the
    current tiers, or None. The backend callable is treated as always
    correct: its answer is tagged with the request's own class.
    """
    static_neighbor = None
    if static_result is not None:
        entry, sim = static_result
        static_neighbor = (entry.entry_id, sim)
        if sim >= thresholds.tau_static:
            return ServeDecision(
                origin=ORIGIN_STATIC,
                answer=entry.answer,
                answer_class_id=entry.class_id,
                static_neighbor=static_neighbor,
                dynamic_neighbor=(
                    (dynamic_result[0].entry_id, dynamic_result[1])
                    if dynamic_result is not None
                    else None
                ),
                writeback=None,
                verify=None,
            )
    dynamic_neighbor = None
    if dynamic_result is not None:
        entry, sim = dynamic_result
        dynamic_neighbor = (entry.entry_id, sim)
        if sim >= thresholds.tau_dynamic:
            return ServeDecision(
                origin=ORIGIN_DYNAMIC,
                answer=entry.answer,
                answer_class_id=entry.answer_class_id,
                static_neighbor=static_neighbor,
                dynamic_neighbor=dynamic_neighbor,
                writeback=None,
                verify=None,
            )
    answer = backend(request)
    return ServeDecision(
        origin=ORIGIN_BACKEND,
        answer=answer,
        answer_class_id=request.class_id,
        static_neighbor=static_neighbor,
        dynamic_neighbor=dynamic_neighbor,
        writeback=WritebackCommand(
            prompt_key=request.prompt_text,
            answer=answer,
            answer_class_id=request.class_id,
            embedding=request.embedding,
        ),
        verify=None,
    )


def decide_krites(
    request,
    static_result,
    dynamic_result,
    thresholds: Thresholds,
    backend: Callable[[object], str],
    now: int,
    verify_on_dynamic_hit: bool = True,
) -> ServeDecision:
    """Baseline serving plus an off-path verification trigger.

    The serving outcome is identical to decide_baseline on the same inputs.
    A trigger is attached iff the static similarity falls in
    [sigma_min, tau_static); by default that covers both dynamic hits and
    backend misses, and `verify_on_dynamic_hit=False` restricts it to
    backend misses.
    """
    decision = decide_baseline(request, static_result, dynamic_result, thresholds, backend)
    if decision.origin == ORIGIN_STATIC:
        return decision
    s_static = static_result[1] if static_result is not None else None
    if not is_grey_zone(s_static, thresholds):
        return decision
    if decision.origin == ORIGIN_DYNAMIC and not verify_on_dynamic_hit:
        return decision
    trigger = VerificationTrigger(
        query_prompt_key=request.prompt_text,
        query_class_id=request.class_id,
        query_embedding=request.embedding,
        static_id=static_result[0].entry_id,
        trigger_index=now,
    )
    return replace(decision, verify=trigger)
