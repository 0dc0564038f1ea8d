import http.server
import threading

import numpy as np
import pytest

from krites.cache_tiers import StaticEntry
from krites.policy import VerificationTrigger
from krites.verification import (
    ENQUEUE_DEDUPLICATED,
    ENQUEUE_DROPPED_FULL,
    ENQUEUE_QUEUED,
    ENQUEUE_THROTTLED,
    ExternalJudge,
    JudgeError,
    OracleJudge,
    ScriptedJudge,
    Verifier,
    VerifierConfig,
)

VEC = np.array([1.0, 0.0])

STATIC = {
    0: StaticEntry(0, "is basil safe for cats", "static-answer:0", 0, VEC),
    1: StaticEntry(1, "store hours on sunday", "static-answer:1", 1, VEC),
}


def trigger(key="q", class_id=0, static_id=0, index=0):
    return VerificationTrigger(
        query_prompt_key=key,
        query_class_id=class_id,
        query_embedding=VEC,
        static_id=static_id,
        trigger_index=index,
    )


def make_verifier(judge=None, **cfg_kwargs):
    return Verifier(VerifierConfig(**cfg_kwargs), judge or OracleJudge(), STATIC.__getitem__)


# judges


def test_oracle_approves_matching_class():
    assert OracleJudge()("q", 0, STATIC[0]) is True


def test_oracle_rejects_mismatched_class():
    assert OracleJudge()("q", 1, STATIC[0]) is False


def test_scripted_false_approvals_bounded():
    judge = ScriptedJudge(false_approve=0.2, seed=1234)
    approvals = sum(judge(f"pair-{i}", 1, STATIC[0]) for i in range(1000))
    # Binomial(1000, 0.2): mean 200, sd ~12.6; [160, 240] is slightly over 3 sd.
    assert 160 <= approvals <= 240
    assert approvals == 193  # frozen for this seed; flags any hashing change


def test_scripted_false_rejections():
    judge = ScriptedJudge(false_reject=0.3, seed=99)
    rejects = sum(not judge(f"pair-{i}", 0, STATIC[0]) for i in range(1000))
    assert 250 <= rejects <= 350


def test_scripted_verdicts_are_order_independent():
    a = ScriptedJudge(false_approve=0.5, seed=7)
    b = ScriptedJudge(false_approve=0.5, seed=7)
    pairs = [(f"p{i}", i % 2) for i in range(50)]
    forward = [a(key, cls, STATIC[0]) for key, cls in pairs]
    backward = [b(key, cls, STATIC[0]) for key, cls in reversed(pairs)]
    assert forward == list(reversed(backward))


def test_scripted_exact_oracle_at_zero_rates():
    judge = ScriptedJudge(seed=3)
    assert judge("q", 0, STATIC[0]) is True
    assert judge("q", 1, STATIC[0]) is False


def test_config_validation():
    with pytest.raises(ValueError):
        VerifierConfig(verify_delay=0)
    with pytest.raises(ValueError):
        VerifierConfig(max_judge_calls_per_window=(0, 10))
    with pytest.raises(ValueError):
        VerifierConfig(queue_capacity=0)


# enqueue outcomes


def test_first_trigger_is_queued():
    v = make_verifier()
    assert v.enqueue(trigger(), now=0) == ENQUEUE_QUEUED
    assert v.stats.enqueued == 1


def test_in_flight_pair_is_deduplicated():
    v = make_verifier(verify_delay=5)
    assert v.enqueue(trigger(index=0), now=0) == ENQUEUE_QUEUED
    assert v.enqueue(trigger(index=2), now=2) == ENQUEUE_DEDUPLICATED
    assert v.stats.deduplicated == 1


def test_rate_limit_two_per_ten():
    v = make_verifier(max_judge_calls_per_window=(2, 10))
    assert v.enqueue(trigger(key="a"), now=0) == ENQUEUE_QUEUED
    assert v.enqueue(trigger(key="b"), now=3) == ENQUEUE_QUEUED
    assert v.enqueue(trigger(key="c"), now=7) == ENQUEUE_THROTTLED
    # window slides: index 0 falls out of (1, 11] at now=11
    assert v.enqueue(trigger(key="d"), now=11) == ENQUEUE_QUEUED


def test_queue_capacity_drops():
    v = make_verifier(queue_capacity=1, verify_delay=10)
    assert v.enqueue(trigger(key="a"), now=0) == ENQUEUE_QUEUED
    assert v.enqueue(trigger(key="b"), now=1) == ENQUEUE_DROPPED_FULL
    assert v.stats.dropped_full == 1


# maturation


def test_mature_with_no_tasks():
    assert make_verifier().mature(10) == []


def test_single_task_walkthrough():
    v = make_verifier(verify_delay=1)
    v.enqueue(trigger(key="basil cat paraphrase", class_id=0, static_id=0, index=5), now=5)
    assert v.mature(5) == []  # not due yet: a promotion never affects its trigger
    commands = v.mature(6)
    assert len(commands) == 1
    cmd = commands[0]
    assert cmd.prompt_key == "basil cat paraphrase"
    assert cmd.static_id == 0
    assert cmd.trigger_index == 5
    assert v.stats.judge_calls == 1
    assert v.stats.approvals == 1
    assert v.pending() == 0


def test_rejected_task_yields_nothing():
    v = make_verifier(verify_delay=1)
    v.enqueue(trigger(class_id=1, static_id=0, index=0), now=0)
    assert v.mature(1) == []
    assert v.stats.rejections == 1


def test_reenqueue_allowed_after_maturation():
    v = make_verifier(verify_delay=1)
    assert v.enqueue(trigger(index=0), now=0) == ENQUEUE_QUEUED
    v.mature(1)
    assert v.enqueue(trigger(index=2), now=2) == ENQUEUE_QUEUED
    assert v.stats.judge_calls == 1
    assert len(v.mature(3)) == 1
    assert v.stats.judge_calls == 2


def test_memoized_verdicts_skip_judge_calls():
    v = make_verifier(verify_delay=1, memoize_verdicts=True)
    v.enqueue(trigger(index=0), now=0)
    assert len(v.mature(1)) == 1
    v.enqueue(trigger(index=2), now=2)
    assert len(v.mature(3)) == 1  # still promotes, without a second judge call
    assert v.stats.judge_calls == 1
    assert v.stats.memo_hits == 1
    assert v.stats.approvals == 2


def test_commands_ordered_by_maturation_then_enqueue():
    v = make_verifier(verify_delay=2)
    v.enqueue(trigger(key="a", index=0), now=0)
    v.enqueue(trigger(key="b", index=1), now=1)
    commands = v.mature(5)
    assert [c.prompt_key for c in commands] == ["a", "b"]


def test_judge_calls_never_exceed_triggers():
    v = make_verifier(verify_delay=1)
    outcomes = [v.enqueue(trigger(key=f"k{i % 3}", index=i), now=i) for i in range(20)]
    v.mature(50)
    assert v.stats.judge_calls <= len(outcomes)
    assert v.stats.judge_calls == v.stats.enqueued


def test_promotion_never_matures_at_its_trigger_index():
    for delay in (1, 2, 5):
        v = make_verifier(verify_delay=delay)
        v.enqueue(trigger(index=3), now=3)
        for now in range(3, 3 + delay):
            assert v.mature(now) == []
        assert len(v.mature(3 + delay)) == 1


# external adapter

APPROVE_CMD = (
    "python3 -c \"import sys,json; d=json.load(sys.stdin); "
    "print('APPROVE' if 'basil' in d['cached_prompt'] else 'REJECT')\""
)


def test_external_command_approve_and_reject():
    judge = ExternalJudge(command=APPROVE_CMD)
    assert judge("q", 0, STATIC[0]) is True
    assert judge("q", 0, STATIC[1]) is False


def test_external_command_tolerates_whitespace():
    judge = ExternalJudge(command="python3 -c \"print('  APPROVE  ')\"")
    assert judge("q", 0, STATIC[0]) is True


def test_external_command_garbage_reply_raises():
    judge = ExternalJudge(command="python3 -c \"print('MAYBE')\"")
    with pytest.raises(JudgeError):
        judge("q", 0, STATIC[0])


def test_external_failure_retries_then_drops():
    v = Verifier(
        VerifierConfig(verify_delay=1, retry_budget=1),
        ExternalJudge(command="python3 -c \"print('MAYBE')\""),
        STATIC.__getitem__,
    )
    v.enqueue(trigger(index=0), now=0)
    assert v.mature(1) == []  # first failure, rescheduled with backoff
    assert v.stats.judge_failures == 1
    assert v.pending() == 1
    assert v.mature(10) == []  # retry fails, task dropped
    assert v.stats.judge_failures == 2
    assert v.stats.dropped_after_retries == 1
    assert v.pending() == 0
    # the pair is free for a fresh attempt afterwards
    assert v.enqueue(trigger(index=11), now=11) == ENQUEUE_QUEUED


class _JudgeHandler(http.server.BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = self.rfile.read(length).decode()
        verdict = b"APPROVE" if "basil" in body else b"REJECT"
        self.send_response(200)
        self.end_headers()
        self.wfile.write(verdict)

    def log_message(self, *args):
        pass


def test_external_endpoint_roundtrip():
    server = http.server.HTTPServer(("127.0.0.1", 0), _JudgeHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        url = f"http://127.0.0.1:{server.server_address[1]}/judge"
        judge = ExternalJudge(url=url, timeout=5.0)
        assert judge("q", 0, STATIC[0]) is True
        assert judge("q", 0, STATIC[1]) is False
    finally:
        server.shutdown()
