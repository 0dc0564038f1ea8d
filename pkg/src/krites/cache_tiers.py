"""Static and dynamic cache tiers.

The static tier is read-only: one curated canonical answer per equivalence
class, built offline from a history prefix. The dynamic tier is the online
read-write cache: backend write-backs insert fresh entries, verified
promotions upsert curated answers under the querying prompt's key, and LRU
capacity plus an optional TTL bound its size. Promoted entries carry a
static-origin bit and are evicted exactly like ordinary entries.

Same single-writer, multi-reader contract as the vector index: the caller
serializes mutations. Verification workers never touch tiers directly; they
return promotion commands that the simulator applies at defined points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .vector_index import VectorIndex, normalize

PROMOTION_APPLIED = "applied"
PROMOTION_SUPERSEDED = "superseded"


@dataclass(frozen=True, eq=False)
class StaticEntry:
    entry_id: int
    canonical_prompt: str
    answer: str
    class_id: int
    embedding: np.ndarray


@dataclass(eq=False)
class DynamicEntry:
    entry_id: int
    prompt_key: str
    answer: str
    answer_class_id: int
    embedding: np.ndarray
    static_origin: bool
    origin_static_id: int | None
    write_stamp: int
    last_access: int


@dataclass(frozen=True)
class DynamicTierConfig:
    """Capacity is an entry count; ttl is in logical request units.

    An entry is expired once `now - write_stamp > ttl`. A hit refreshes
    LRU recency but not write_stamp, so TTL measures age since the content
    was written.
    """

    capacity: int
    ttl: int | None = None

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if self.ttl is not None and self.ttl < 1:
            raise ValueError("ttl must be >= 1 when set")


@dataclass(frozen=True)
class PromotionResult:
    outcome: str  # PROMOTION_APPLIED or PROMOTION_SUPERSEDED
    entry_id: int | None


class StaticTier:
    """Immutable tier of curated answers; supports only nearest lookup."""

    def __init__(self, entries: tuple[StaticEntry, ...]):
        self._entries = entries
        self._by_id = {e.entry_id: e for e in entries}
        self.dimension = entries[0].embedding.shape[0] if entries else None
        self._index = None
        if entries:
            self._index = VectorIndex(self.dimension)
            for e in entries:
                self._index.insert(e.entry_id, e.embedding)

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> tuple[StaticEntry, ...]:
        return self._entries

    def get(self, entry_id: int) -> StaticEntry:
        return self._by_id[int(entry_id)]

    def lookup(self, query) -> tuple[StaticEntry, float] | None:
        """Nearest static entry with its similarity; None iff tier empty."""
        if self._index is None:
            return None
        hit = self._index.nearest(query)
        if hit is None:
            return None
        entry_id, sim = hit
        return self._by_id[entry_id], sim


def build_static_tier(entries) -> StaticTier:
    """Build the read-only tier from (prompt, answer, class_id, embedding) rows.

    Entry ids are assigned 0..n-1 in input order, so earlier rows win
    similarity ties. Duplicate class ids are rejected: the tier holds one
    canonical entry per equivalence class.
    """
    built = []
    seen_classes: set[int] = set()
    for i, (prompt, answer, class_id, embedding) in enumerate(entries):
        cid = int(class_id)
        if cid in seen_classes:
            raise ValueError(f"duplicate class_id {cid} in static tier")
        seen_classes.add(cid)
        built.append(StaticEntry(i, str(prompt), str(answer), cid, normalize(embedding)))
    if built:
        dim = built[0].embedding.shape[0]
        for e in built:
            if e.embedding.shape[0] != dim:
                raise ValueError(
                    f"static entry {e.entry_id} has dimension "
                    f"{e.embedding.shape[0]}, expected {dim}"
                )
    return StaticTier(tuple(built))


class DynamicTier:
    """LRU/TTL-bounded online tier with write-back inserts and promotion upserts."""

    def __init__(self, config: DynamicTierConfig, dimension: int):
        self.config = config
        self.dimension = int(dimension)
        self._entries: dict[int, DynamicEntry] = {}
        self._index = VectorIndex(self.dimension)
        self._by_key: dict[str, list[int]] = {}
        self._next_id = 0

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> list[DynamicEntry]:
        return [self._entries[k] for k in sorted(self._entries)]

    def get(self, entry_id: int) -> DynamicEntry:
        return self._entries[int(entry_id)]

    def _expired(self, entry: DynamicEntry, now: int) -> bool:
        ttl = self.config.ttl
        return ttl is not None and now - entry.write_stamp > ttl

    def _ingest(self, embedding) -> np.ndarray:
        # validate before any state mutation so failures cannot corrupt the tier
        vec = normalize(embedding)
        if vec.shape[0] != self.dimension:
            raise ValueError(
                f"embedding has {vec.shape[0]} dims, tier dimension is {self.dimension}"
            )
        return vec

    def _remove(self, entry_id: int) -> None:
        entry = self._entries.pop(entry_id)
        self._index.remove(entry_id)
        ids = self._by_key.get(entry.prompt_key)
        if ids is not None:
            ids.remove(entry_id)
            if not ids:
                del self._by_key[entry.prompt_key]

    def _enforce_capacity(self, now: int) -> None:
        if len(self._entries) <= self.config.capacity:
            return
        if self.config.ttl is not None:
            for eid in [e for e, entry in self._entries.items() if self._expired(entry, now)]:
                self._remove(eid)
        while len(self._entries) > self.config.capacity:
            victim = min(
                self._entries.values(),
                key=lambda e: (e.last_access, e.write_stamp, e.entry_id),
            )
            self._remove(victim.entry_id)

    def lookup(self, query, now: int) -> tuple[DynamicEntry, float] | None:
        """Nearest live entry; expired entries are skipped and lazily purged.

        Recency is NOT updated here; confirmed hits call touch().
        """
        while True:
            hit = self._index.nearest(query)
            if hit is None:
                return None
            entry_id, sim = hit
            entry = self._entries[entry_id]
            if self._expired(entry, now):
                self._remove(entry_id)
                continue
            return entry, sim

    def touch(self, entry_id: int, now: int) -> None:
        """Refresh LRU recency of a live entry."""
        eid = int(entry_id)
        entry = self._entries.get(eid)
        if entry is None or self._expired(entry, now):
            raise KeyError(f"entry {eid} is not live")
        entry.last_access = now

    def insert_writeback(
        self, prompt_key: str, answer: str, answer_class_id: int, embedding, now: int
    ) -> int:
        """Insert a fresh backend answer. Never dedups on prompt_key."""
        vec = self._ingest(embedding)
        eid = self._next_id
        self._next_id += 1
        entry = DynamicEntry(
            entry_id=eid,
            prompt_key=prompt_key,
            answer=answer,
            answer_class_id=int(answer_class_id),
            embedding=vec,
            static_origin=False,
            origin_static_id=None,
            write_stamp=now,
            last_access=now,
        )
        self._entries[eid] = entry
        self._index.insert(eid, entry.embedding)
        self._by_key.setdefault(prompt_key, []).append(eid)
        self._enforce_capacity(now)
        return eid

    def upsert_promotion(
        self, prompt_key: str, static_src: StaticEntry, embedding, now: int
    ) -> PromotionResult:
        """Write a curated answer under `prompt_key`, timestamp-guarded.

        `now` is the logical stamp of the promotion, i.e. the index of the
        request that triggered verification. If any entry under the same key
        was written after that stamp the promotion is superseded and nothing
        changes. Otherwise the newest same-key entry is overwritten in place
        (or a fresh entry inserted when the key is absent). Re-applying the
        same promotion leaves the tier unchanged.
        """
        vec = self._ingest(embedding)
        ids = self._by_key.get(prompt_key, [])
        if any(self._entries[i].write_stamp > now for i in ids):
            return PromotionResult(PROMOTION_SUPERSEDED, None)
        if ids:
            target = max(ids, key=lambda i: (self._entries[i].write_stamp, i))
            entry = self._entries[target]
            entry.answer = static_src.answer
            entry.answer_class_id = static_src.class_id
            entry.static_origin = True
            entry.origin_static_id = static_src.entry_id
            entry.write_stamp = now
            entry.last_access = max(entry.last_access, now)
            entry.embedding = vec
            self._index.remove(target)
            self._index.insert(target, vec)
            return PromotionResult(PROMOTION_APPLIED, target)
        eid = self._next_id
        self._next_id += 1
        entry = DynamicEntry(
            entry_id=eid,
            prompt_key=prompt_key,
            answer=static_src.answer,
            answer_class_id=static_src.class_id,
            embedding=vec,
            static_origin=True,
            origin_static_id=static_src.entry_id,
            write_stamp=now,
            last_access=now,
        )
        self._entries[eid] = entry
        self._index.insert(eid, vec)
        self._by_key.setdefault(prompt_key, []).append(eid)
        self._enforce_capacity(now)
        return PromotionResult(PROMOTION_APPLIED, eid)

    # Debug snapshot: JSON-lines, one entry per line, embeddings as float arrays.

    def dump_jsonl(self, path) -> None:
        lines = []
        for entry in self.entries():
            lines.append(
                json.dumps(
                    {
                        "entry_id": entry.entry_id,
                        "prompt_key": entry.prompt_key,
                        "answer": entry.answer,
                        "answer_class_id": entry.answer_class_id,
                        "embedding": [float(x) for x in entry.embedding],
                        "static_origin": entry.static_origin,
                        "origin_static_id": entry.origin_static_id,
                        "write_stamp": entry.write_stamp,
                        "last_access": entry.last_access,
                    },
                    sort_keys=True,
                )
            )
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))

    @classmethod
    def load_jsonl(cls, path, config: DynamicTierConfig, dimension: int) -> "DynamicTier":
        tier = cls(config, dimension)
        text = Path(path).read_text()
        for line in text.splitlines():
            if not line.strip():
                continue
            raw = json.loads(line)
            entry = DynamicEntry(
                entry_id=int(raw["entry_id"]),
                prompt_key=raw["prompt_key"],
                answer=raw["answer"],
                answer_class_id=int(raw["answer_class_id"]),
                embedding=normalize(raw["embedding"]),
                static_origin=bool(raw["static_origin"]),
                origin_static_id=raw["origin_static_id"],
                write_stamp=int(raw["write_stamp"]),
                last_access=int(raw["last_access"]),
            )
            tier._entries[entry.entry_id] = entry
            tier._index.insert(entry.entry_id, entry.embedding)
            tier._by_key.setdefault(entry.prompt_key, []).append(entry.entry_id)
            tier._next_id = max(tier._next_id, entry.entry_id + 1)
        return tier
