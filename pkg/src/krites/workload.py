"""Trace ingestion, history/evaluation split, head selection, synthesis.

Traces are JSON lines, one request per line with fields id (int), text
(string, optional for privacy-scrubbed traces), class_id (int) and embedding
(array of floats). Embeddings are normalized unconditionally on ingest. The
synthetic generator emits the same format, so generated and ingested
workloads are interchangeable downstream.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .vector_index import normalize


class TraceFormatError(ValueError):
    """Malformed trace input; the message names the offending line."""


@dataclass(frozen=True, eq=False)
class Request:
    request_id: int
    prompt_text: str
    class_id: int
    embedding: np.ndarray


@dataclass(frozen=True)
class SplitConfig:
    history_fraction: float = 0.2
    shuffle_seed: int = 0
    coverage: float = 0.6

    def __post_init__(self):
        if not 0.0 < self.history_fraction < 1.0:
            raise ValueError("history_fraction must be in (0, 1)")
        if not 0.0 < self.coverage <= 1.0:
            raise ValueError("coverage must be in (0, 1]")


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic workload with Zipf class popularity and paraphrase pools.

    Each class owns a random unit centroid and a pool of
    `paraphrases_per_class` fixed paraphrase embeddings placed at a cosine
    similarity to the centroid drawn uniformly from
    mean +/- spread (`intra_class_similarity`). Requests repeat paraphrases
    exactly, which is what gives downstream caches something to reuse.
    """

    num_classes: int
    requests: int
    dimension: int
    zipf_exponent: float = 1.0
    intra_class_similarity: tuple[float, float] = (0.9, 0.02)
    paraphrases_per_class: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if self.requests < 1:
            raise ValueError("requests must be >= 1")
        if self.dimension < 2:
            raise ValueError("dimension must be >= 2")
        if self.zipf_exponent < 0:
            raise ValueError("zipf_exponent must be >= 0")
        mean, spread = self.intra_class_similarity
        if not 0.0 < mean <= 1.0:
            raise ValueError("intra-class similarity mean must be in (0, 1]")
        if spread < 0:
            raise ValueError("intra-class similarity spread must be >= 0")
        if self.paraphrases_per_class < 1:
            raise ValueError("paraphrases_per_class must be >= 1")


@dataclass(frozen=True, eq=False)
class SynthTrace:
    requests: list
    centroids: np.ndarray  # (num_classes, dimension)
    paraphrase_embeddings: np.ndarray  # (num_classes, paraphrases, dimension)


@dataclass(frozen=True, eq=False)
class StaticSelection:
    entries: list  # (prompt, answer, class_id, embedding) rows
    representatives: list  # the history Request chosen per selected class
    selected: list  # (class_id, frequency), most frequent first
    coverage_achieved: float


def _embedding_key(vec: np.ndarray) -> str:
    digest = hashlib.blake2b(vec.tobytes(), digest_size=8).hexdigest()
    return f"emb:{digest}"


def load_trace(source) -> list[Request]:
    """Parse a JSONL trace file into validated, normalized requests.

    Scrubbed lines without text get a synthetic key derived from the
    normalized embedding bytes, so exact repeats still share a prompt key.
    """
    path = Path(source)
    requests: list[Request] = []
    dimension = None
    with path.open() as handle:
        for lineno, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"{path}: line {lineno}: invalid JSON ({exc})") from exc
            if not isinstance(raw, dict):
                raise TraceFormatError(f"{path}: line {lineno}: expected an object")
            for key in ("id", "class_id", "embedding"):
                if key not in raw:
                    raise TraceFormatError(f"{path}: line {lineno}: missing field {key!r}")
            try:
                vec = normalize(raw["embedding"])
            except ValueError as exc:
                raise TraceFormatError(f"{path}: line {lineno}: bad embedding ({exc})") from exc
            if dimension is None:
                dimension = vec.shape[0]
            elif vec.shape[0] != dimension:
                raise TraceFormatError(
                    f"{path}: line {lineno}: embedding has {vec.shape[0]} dims, "
                    f"expected {dimension}"
                )
            text = raw.get("text")
            if text is None:
                text = _embedding_key(vec)
            elif not isinstance(text, str):
                raise TraceFormatError(f"{path}: line {lineno}: text must be a string")
            requests.append(
                Request(
                    request_id=int(raw["id"]),
                    prompt_text=text,
                    class_id=int(raw["class_id"]),
                    embedding=vec,
                )
            )
    return requests


def write_trace(requests, path) -> None:
    """Write requests as JSONL in the trace format."""
    lines = []
    for r in requests:
        lines.append(
            json.dumps(
                {
                    "id": r.request_id,
                    "text": r.prompt_text,
                    "class_id": r.class_id,
                    "embedding": [float(x) for x in r.embedding],
                },
                sort_keys=True,
            )
        )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def shuffle_and_split(requests, cfg: SplitConfig):
    """Seeded shuffle, then split into (history, evaluation) streams.

    Request ids are reassigned densely 0..N-1 in post-shuffle order; the
    history prefix holds the first floor(N * history_fraction) requests and
    the evaluation stream the remainder, order preserved.
    """
    if not requests:
        raise ValueError("cannot split an empty request list")
    rng = np.random.default_rng(cfg.shuffle_seed)
    perm = rng.permutation(len(requests))
    shuffled = [replace(requests[i], request_id=pos) for pos, i in enumerate(perm)]
    n_history = int(len(requests) * cfg.history_fraction)
    return shuffled[:n_history], shuffled[n_history:]


def select_head_classes(history, coverage: float = 0.6) -> list[tuple[int, int]]:
    """Most-frequent-first class prefix whose cumulative count reaches coverage.

    The target is ceil(coverage * len(history)); frequency ties break toward
    the smaller class id. Greedy most-frequent-first is optimal for this
    covering objective.
    """
    if not history:
        raise ValueError("history is empty")
    counts = Counter(r.class_id for r in history)
    order = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    target = math.ceil(coverage * len(history))
    selected: list[tuple[int, int]] = []
    covered = 0
    for class_id, n in order:
        if covered >= target:
            break
        selected.append((class_id, n))
        covered += n
    return selected


def canonical_representative(history, class_id: int) -> Request:
    """Shortest prompt in the class; ties by text, then request id."""
    members = [r for r in history if r.class_id == class_id]
    if not members:
        raise KeyError(f"class {class_id} not present in history")
    return min(members, key=lambda r: (len(r.prompt_text), r.prompt_text, r.request_id))


def static_entries_from_history(history, coverage: float = 0.6) -> StaticSelection:
    """Head-class canonical entries for the static tier.

    Answers are synthetic: correctness downstream is tracked by class id,
    not by answer text.
    """
    selected = select_head_classes(history, coverage)
    representatives = [canonical_representative(history, cid) for cid, _ in selected]
    entries = [
        (rep.prompt_text, f"static-answer:{cid}", cid, rep.embedding)
        for (cid, _), rep in zip(selected, representatives)
    ]
    covered = sum(n for _, n in selected) / len(history)
    return StaticSelection(
        entries=entries,
        representatives=representatives,
        selected=selected,
        coverage_achieved=covered,
    )


def _paraphrase_text(class_id: int, paraphrase: int) -> str:
    return f"class {class_id} paraphrase {paraphrase}" + " filler" * paraphrase


def generate(cfg: SynthConfig) -> SynthTrace:
    """Deterministic synthetic workload with full geometry attached."""
    rng = np.random.default_rng(cfg.seed)
    k, d, pool_size = cfg.num_classes, cfg.dimension, cfg.paraphrases_per_class
    weights = 1.0 / np.arange(1, k + 1, dtype=np.float64) ** cfg.zipf_exponent
    weights /= weights.sum()

    centroids = rng.standard_normal((k, d))
    centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)

    mean, spread = cfg.intra_class_similarity
    pool = np.empty((k, pool_size, d))
    for i in range(k):
        for j in range(pool_size):
            cosine = float(np.clip(rng.uniform(mean - spread, mean + spread), -1.0, 1.0))
            if cosine >= 1.0:
                pool[i, j] = centroids[i]
                continue
            # Unit tangent direction, then rotate off the centroid by the
            # sampled angle; result is unit length by construction.
            while True:
                g = rng.standard_normal(d)
                tangent = g - (g @ centroids[i]) * centroids[i]
                t_norm = float(np.linalg.norm(tangent))
                if t_norm > 1e-12:
                    break
            tangent /= t_norm
            v = cosine * centroids[i] + math.sqrt(1.0 - cosine * cosine) * tangent
            pool[i, j] = v / np.linalg.norm(v)

    class_draws = rng.choice(k, size=cfg.requests, p=weights)
    paraphrase_draws = rng.integers(0, pool_size, size=cfg.requests)
    requests = [
        Request(
            request_id=i,
            prompt_text=_paraphrase_text(int(c), int(p)),
            class_id=int(c),
            embedding=pool[int(c), int(p)].copy(),
        )
        for i, (c, p) in enumerate(zip(class_draws, paraphrase_draws))
    ]
    return SynthTrace(requests=requests, centroids=centroids, paraphrase_embeddings=pool)


def synthesize(cfg: SynthConfig) -> list[Request]:
    return generate(cfg).requests


def zipf_weights(num_classes: int, exponent: float) -> np.ndarray:
    """Normalized Zipf popularity weights, rank 1 first."""
    weights = 1.0 / np.arange(1, num_classes + 1, dtype=np.float64) ** exponent
    return weights / weights.sum()


# Static tier file format: JSONL with entry_id, prompt, answer, class_id, embedding.

def write_static_entries(entries, path) -> None:
    lines = []
    for i, (prompt, answer, class_id, embedding) in enumerate(entries):
        lines.append(
            json.dumps(
                {
                    "entry_id": i,
                    "prompt": prompt,
                    "answer": answer,
                    "class_id": int(class_id),
                    "embedding": [float(x) for x in embedding],
                },
                sort_keys=True,
            )
        )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_static_entries(path):
    """Read static entries back as (prompt, answer, class_id, embedding) rows."""
    source = Path(path)
    rows = []
    dimension = None
    with source.open() as handle:
        for lineno, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"{source}: line {lineno}: invalid JSON ({exc})") from exc
            for key in ("prompt", "answer", "class_id", "embedding"):
                if key not in raw:
                    raise TraceFormatError(f"{source}: line {lineno}: missing field {key!r}")
            try:
                vec = normalize(raw["embedding"])
            except ValueError as exc:
                raise TraceFormatError(f"{source}: line {lineno}: bad embedding ({exc})") from exc
            if dimension is None:
                dimension = vec.shape[0]
            elif vec.shape[0] != dimension:
                raise TraceFormatError(
                    f"{source}: line {lineno}: embedding has {vec.shape[0]} dims, "
                    f"expected {dimension}"
                )
            rows.append((raw["prompt"], raw["answer"], int(raw["class_id"]), vec))
    return rows
