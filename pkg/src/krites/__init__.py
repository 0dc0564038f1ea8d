"""Tiered semantic-cache engine and trace-driven simulator.

A read-only static tier of curated answers in front of an LRU/TTL dynamic
tier, served by a fixed similarity-threshold policy. The krites policy keeps
that serving path byte-for-byte and adds an asynchronous judge that promotes
approved static answers into the dynamic tier under the querying prompt's
key, so repeats and paraphrases increasingly reuse curated content.
"""

__version__ = "0.1.0"

from .cache_tiers import (
    DynamicTier,
    DynamicTierConfig,
    StaticEntry,
    StaticTier,
    build_static_tier,
)
from .policy import Thresholds, decide_baseline, decide_krites, is_grey_zone
from .reporting import compare, curve, summarize
from .simulator import JudgeSpec, RunResult, ServeRecord, SimConfig, run, run_paired
from .verification import Verifier, VerifierConfig
from .workload import (
    Request,
    SplitConfig,
    SynthConfig,
    canonical_representative,
    load_trace,
    select_head_classes,
    shuffle_and_split,
    synthesize,
)

__all__ = [
    "DynamicTier",
    "DynamicTierConfig",
    "JudgeSpec",
    "Request",
    "RunResult",
    "ServeRecord",
    "SimConfig",
    "SplitConfig",
    "StaticEntry",
    "StaticTier",
    "SynthConfig",
    "Thresholds",
    "Verifier",
    "VerifierConfig",
    "build_static_tier",
    "canonical_representative",
    "compare",
    "curve",
    "decide_baseline",
    "decide_krites",
    "is_grey_zone",
    "load_trace",
    "run",
    "run_paired",
    "select_head_classes",
    "shuffle_and_split",
    "summarize",
    "synthesize",
]
