"""Off-path judge pipeline: task queue, dedup, rate limiting, maturation.

Triggers enqueued while serving request i mature at the earliest while
serving request i + verify_delay, so a promotion can never affect the
request that triggered it. Deduplication is scoped to in-flight tasks only:
once a task matures the same (prompt, static entry) pair may be judged
again, which is what allows re-verification after eviction. All throttled
or dropped work is silently lost; the pipeline is best-effort background
work and every outcome is counted.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import shlex
import subprocess
import urllib.error
import urllib.request
from collections import deque
from dataclasses import dataclass, fields

import numpy as np

from .policy import VerificationTrigger

ENQUEUE_QUEUED = "queued"
ENQUEUE_DEDUPLICATED = "deduplicated"
ENQUEUE_THROTTLED = "throttled"
ENQUEUE_DROPPED_FULL = "dropped_full"


class JudgeError(RuntimeError):
    """External judge failure: bad reply, nonzero exit, timeout, transport."""


@dataclass(frozen=True)
class VerifierConfig:
    verify_delay: int = 1
    max_judge_calls_per_window: tuple[int, int] | None = None  # (calls, window)
    queue_capacity: int | None = None
    memoize_verdicts: bool = False
    retry_budget: int = 1

    def __post_init__(self):
        if self.verify_delay < 1:
            raise ValueError("verify_delay must be >= 1")
        if self.max_judge_calls_per_window is not None:
            calls, window = self.max_judge_calls_per_window
            if calls < 1 or window < 1:
                raise ValueError("rate limit calls and window must be >= 1")
        if self.queue_capacity is not None and self.queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")
        if self.retry_budget < 0:
            raise ValueError("retry_budget must be >= 0")


@dataclass(frozen=True, eq=False)
class PromotionCommand:
    prompt_key: str
    static_id: int
    embedding: np.ndarray
    trigger_index: int


@dataclass
class VerifierStats:
    enqueued: int = 0
    deduplicated: int = 0
    throttled: int = 0
    dropped_full: int = 0
    judge_calls: int = 0
    approvals: int = 0
    rejections: int = 0
    memo_hits: int = 0
    judge_failures: int = 0
    dropped_after_retries: int = 0

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class OracleJudge:
    """Approves iff the query and the static candidate share a class label."""

    def __call__(self, prompt_key: str, query_class: int, static_entry) -> bool:
        return query_class == static_entry.class_id


class ScriptedJudge:
    """Class-label oracle perturbed by seeded false-approve/false-reject noise.

    The verdict for a given (prompt_key, static entry) pair is a pure
    function of the seed, independent of call order, so replays and paired
    runs see identical verdicts.
    """

    def __init__(self, false_approve: float = 0.0, false_reject: float = 0.0, seed: int = 0):
        for name, rate in (("false_approve", false_approve), ("false_reject", false_reject)):
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        self.false_approve = false_approve
        self.false_reject = false_reject
        self.seed = seed

    def _uniform(self, prompt_key: str, static_id: int) -> float:
        digest = hashlib.blake2b(
            f"{self.seed}|{static_id}|{prompt_key}".encode(), digest_size=8
        ).digest()
        return int.from_bytes(digest, "big") / 2**64

    def __call__(self, prompt_key: str, query_class: int, static_entry) -> bool:
        u = self._uniform(prompt_key, static_entry.entry_id)
        if query_class == static_entry.class_id:
            return u >= self.false_reject
        return u < self.false_approve


class ExternalJudge:
    """Adapter for a judge living behind a command or an HTTP endpoint.

    The task payload is one JSON object {query, cached_prompt, cached_answer}
    sent on stdin (command mode) or as the POST body (endpoint mode). The
    reply must be exactly the token APPROVE or REJECT, surrounding
    whitespace ignored; anything else raises JudgeError.
    """

    def __init__(self, command: str | None = None, url: str | None = None, timeout: float = 10.0):
        if (command is None) == (url is None):
            raise ValueError("configure exactly one of command or url")
        self.command = command
        self.url = url
        self.timeout = timeout

    def _payload(self, prompt_key: str, static_entry) -> bytes:
        return json.dumps(
            {
                "query": prompt_key,
                "cached_prompt": static_entry.canonical_prompt,
                "cached_answer": static_entry.answer,
            },
            sort_keys=True,
        ).encode()

    def __call__(self, prompt_key: str, query_class: int, static_entry) -> bool:
        payload = self._payload(prompt_key, static_entry)
        if self.command is not None:
            try:
                proc = subprocess.run(
                    shlex.split(self.command),
                    input=payload,
                    capture_output=True,
                    timeout=self.timeout,
                )
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise JudgeError(f"judge command failed: {exc}") from exc
            if proc.returncode != 0:
                raise JudgeError(f"judge command exited {proc.returncode}")
            reply = proc.stdout.decode(errors="replace")
        else:
            req = urllib.request.Request(
                self.url, data=payload, headers={"Content-Type": "application/json"}
            )
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    reply = resp.read().decode(errors="replace")
            except (urllib.error.URLError, OSError) as exc:
                raise JudgeError(f"judge endpoint failed: {exc}") from exc
        token = reply.strip()
        if token == "APPROVE":
            return True
        if token == "REJECT":
            return False
        raise JudgeError(f"unexpected judge reply {token!r}")


@dataclass(eq=False)
class _Task:
    trigger: VerificationTrigger
    dedup_key: tuple[str, int]
    enqueue_index: int
    mature_index: int
    attempts: int = 0


class Verifier:
    """Single-producer, single-consumer verification queue.

    enqueue() is called from the serving loop; mature() runs the judge for
    every task due at `now` and returns promotion commands in
    (mature_index, enqueue order). The rate limit is enforced at enqueue
    time over a sliding window of request indices, which also bounds judge
    calls per window because maturation shifts all tasks by the same delay.
    """

    def __init__(self, config: VerifierConfig, judge, resolve_static):
        self.config = config
        self.judge = judge
        self.resolve_static = resolve_static
        self.stats = VerifierStats()
        self._heap: list[tuple[int, int, _Task]] = []
        self._seq = 0
        self._in_flight: set[tuple[str, int]] = set()
        self._accepted: deque[int] = deque()
        self._memo: dict[tuple[str, int], bool] = {}

    def pending(self) -> int:
        return len(self._heap)

    def enqueue(self, trigger: VerificationTrigger, now: int) -> str:
        key = (trigger.query_prompt_key, trigger.static_id)
        if key in self._in_flight:
            self.stats.deduplicated += 1
            return ENQUEUE_DEDUPLICATED
        limit = self.config.max_judge_calls_per_window
        if limit is not None:
            calls, window = limit
            while self._accepted and self._accepted[0] <= now - window:
                self._accepted.popleft()
            if len(self._accepted) >= calls:
                self.stats.throttled += 1
                return ENQUEUE_THROTTLED
        if self.config.queue_capacity is not None and len(self._heap) >= self.config.queue_capacity:
            self.stats.dropped_full += 1
            return ENQUEUE_DROPPED_FULL
        task = _Task(
            trigger=trigger,
            dedup_key=key,
            enqueue_index=now,
            mature_index=now + self.config.verify_delay,
        )
        heapq.heappush(self._heap, (task.mature_index, self._seq, task))
        self._seq += 1
        self._in_flight.add(key)
        if limit is not None:
            self._accepted.append(now)
        self.stats.enqueued += 1
        return ENQUEUE_QUEUED

    def _verdict(self, task: _Task) -> bool | None:
        """Run or replay the judge; None means the task was re-scheduled or dropped."""
        if self.config.memoize_verdicts and task.dedup_key in self._memo:
            self.stats.memo_hits += 1
            return self._memo[task.dedup_key]
        static_entry = self.resolve_static(task.trigger.static_id)
        try:
            approve = self.judge(task.trigger.query_prompt_key, task.trigger.query_class_id, static_entry)
        except JudgeError:
            self.stats.judge_failures += 1
            if task.attempts < self.config.retry_budget:
                task.attempts += 1
                retry_at = task.mature_index + 2**task.attempts
                task.mature_index = retry_at
                heapq.heappush(self._heap, (retry_at, self._seq, task))
                self._seq += 1
                return None
            self.stats.dropped_after_retries += 1
            self._in_flight.discard(task.dedup_key)
            return None
        self.stats.judge_calls += 1
        if self.config.memoize_verdicts:
            self._memo[task.dedup_key] = approve
        return approve

    def mature(self, now: int) -> list[PromotionCommand]:
        """Judge every task due at `now`; approved tasks yield promotions."""
        commands: list[PromotionCommand] = []
        while self._heap and self._heap[0][0] <= now:
            _, _, task = heapq.heappop(self._heap)
            approve = self._verdict(task)
            if approve is None:
                continue
            self._in_flight.discard(task.dedup_key)
            if approve:
                self.stats.approvals += 1
                commands.append(
                    PromotionCommand(
                        prompt_key=task.trigger.query_prompt_key,
                        static_id=task.trigger.static_id,
                        embedding=task.trigger.query_embedding,
                        trigger_index=task.trigger.trigger_index,
                    )
                )
            else:
                self.stats.rejections += 1
        return commands
