"""Semantic transmitter/receiver, knowledge base and the per-PoA response cache.

Wire message for an encoded request (16 bytes, little-endian)::

    u64 feature_id | f32 rate_gbps | f32 max_latency_ms
"""
from __future__ import annotations

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import UnknownFeature, UnknownIntent
from .ledger import KbStat

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = (1 << 64) - 1

ENCODED_SIZE = 16
MODALITIES = ("text", "voice", "sensor")
NORMAL, HIGH = "normal", "high"

DEFAULT_WINDOW = 10
DEFAULT_CACHE_CAPACITY = 64


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


def _length_prefixed(parts: Iterable[str]) -> bytes:
    out = bytearray()
    for p in parts:
        raw = p.encode("utf-8")
        out += struct.pack("<I", len(raw)) + raw
    return bytes(out)


def signature(tokens: Iterable[str]) -> int:
    """Order- and case-invariant hash of a token multiset."""
    return fnv1a_64(_length_prefixed(sorted(t.casefold() for t in tokens)))


@dataclass(frozen=True)
class SemanticFeature:
    feature_id: int
    service_type: str
    rate: float
    max_latency: float
    priority: str = NORMAL

    def __post_init__(self) -> None:
        if self.rate <= 0 or self.max_latency <= 0:
            raise ValueError("rate and max_latency must be positive")


def make_feature(service_type: str, rate: float, max_latency: float, priority: str = NORMAL) -> SemanticFeature:
    """Build a feature whose id is the hash of its canonical intent fields."""
    fid = fnv1a_64(_length_prefixed([service_type, repr(float(rate)), repr(float(max_latency)), priority]))
    return SemanticFeature(fid or 1, service_type, float(rate), float(max_latency), priority)


@dataclass(frozen=True)
class KbEntry:
    modality: str
    signature: int
    feature: SemanticFeature
    tokens: tuple[str, ...] = ()

    @property
    def key(self) -> tuple[str, int]:
        return (self.modality, self.signature)


def kb_entry(modality: str, tokens: Iterable[str], service_type: str, rate: float,
             max_latency: float, priority: str = NORMAL) -> KbEntry:
    if modality not in MODALITIES:
        raise ValueError(f"unknown modality {modality!r}")
    tokens = tuple(tokens)
    return KbEntry(modality, signature(tokens), make_feature(service_type, rate, max_latency, priority), tokens)


@dataclass(frozen=True)
class KnowledgeBase:
    """Immutable KB generation; ``kb_update`` returns a new one."""

    entries: Mapping[tuple[str, int], KbEntry] = field(default_factory=dict)
    generation: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "_features", {e.feature.feature_id: e.feature for e in self.entries.values()})

    def __len__(self) -> int:
        return len(self.entries)

    def features(self) -> dict[int, SemanticFeature]:
        return dict(self._features)

    def service_types(self) -> list[str]:
        return sorted({e.feature.service_type for e in self.entries.values()})

    def entries_for(self, service_type: str, modality: str | None = None) -> list[KbEntry]:
        out = [e for _, e in sorted(self.entries.items()) if e.feature.service_type == service_type]
        if modality is not None:
            out = [e for e in out if e.modality == modality]
        return out


@dataclass(frozen=True)
class RequestPayload:
    modality: str
    tokens: tuple[str, ...]
    rate: float | None = None
    service_type: str | None = None  # only consulted on raw fallback

    @property
    def raw_size(self) -> int:
        return sum(len(t.encode("utf-8")) for t in self.tokens)

    @classmethod
    def sensor(cls, readings: Mapping[str, float], **kw: Any) -> "RequestPayload":
        return cls("sensor", tuple(f"{k}={v}" for k, v in sorted(readings.items())), **kw)


@dataclass(frozen=True)
class Encoded:
    feature: SemanticFeature
    encoded_size: int
    bytes_saved: int
    raw: bool = False

    def message(self, rate: float | None = None) -> bytes:
        return pack_message(self.feature, rate)


def pack_message(feature: SemanticFeature, rate: float | None = None) -> bytes:
    r = feature.rate if rate is None else rate
    return struct.pack("<Qff", feature.feature_id, r, feature.max_latency)


def unpack_message(msg: bytes) -> tuple[int, float, float]:
    return struct.unpack("<Qff", msg)


def encode(kb: KnowledgeBase, payload: RequestPayload, allow_raw_fallback: bool = False) -> Encoded:
    if not payload.tokens:
        raise UnknownIntent("empty payload")
    entry = kb.entries.get((payload.modality, signature(payload.tokens)))
    if entry is None:
        if allow_raw_fallback and payload.service_type:
            feat = make_feature(payload.service_type, payload.rate or 1.0, 10.0)
            return Encoded(feat, payload.raw_size, 0, raw=True)
        raise UnknownIntent(f"no KB entry for {payload.modality} payload")
    return Encoded(entry.feature, ENCODED_SIZE, max(0, payload.raw_size - ENCODED_SIZE))


def decode(kb: KnowledgeBase, feature_id: int) -> SemanticFeature:
    try:
        return kb._features[feature_id]
    except KeyError:
        raise UnknownFeature(f"feature {feature_id:#x} unknown at generation {kb.generation}") from None


def kb_update(kb: KnowledgeBase, new_entries: Iterable[KbEntry], step: int = 0) -> tuple[KnowledgeBase, KbStat]:
    merged = dict(kb.entries)
    for e in new_entries:
        merged[e.key] = e
    new = KnowledgeBase(merged, kb.generation + 1)
    return new, KbStat(new.generation, len(new), step)


def entries_from_json(doc: list[Mapping[str, Any]]) -> list[KbEntry]:
    return [
        kb_entry(d["modality"], d["tokens"], d["service_type"], d["rate"], d["max_latency"],
                 d.get("priority", NORMAL))
        for d in doc
    ]


def load_kb(path: str | Path | None = None) -> KnowledgeBase:
    """Load a KB from JSON; ``None`` loads the bundled 12-intent default."""
    if path is None:
        text = resources.files("sard").joinpath("data/default_kb.json").read_text()
    else:
        text = Path(path).read_text()
    kb, _ = kb_update(KnowledgeBase(), entries_from_json(json.loads(text)))
    return kb


# -- PoA cache -------------------------------------------------------------

@dataclass(frozen=True)
class CacheEntry:
    feature_id: int
    response: Any
    stored_at: int


class PoaCache:
    """Aging-window cache with least-recently-stored eviction."""

    def __init__(self, capacity: int = DEFAULT_CACHE_CAPACITY) -> None:
        self.capacity = capacity
        self._entries: OrderedDict[int, CacheEntry] = OrderedDict()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, feature_id: int) -> bool:
        return feature_id in self._entries

    def lookup(self, feature_id: int, now: int, window: int) -> Any | None:
        ent = self._entries.get(feature_id)
        if ent is None or now - ent.stored_at > window:
            return None
        return ent.response

    def store(self, entry: CacheEntry) -> None:
        self._entries.pop(entry.feature_id, None)
        self._entries[entry.feature_id] = entry
        while len(self._entries) > self.capacity:
            self._entries.popitem(last=False)

    def entries(self) -> list[CacheEntry]:
        return list(self._entries.values())


def cache_lookup(cache: PoaCache, feature_id: int, now: int, window: int) -> Any | None:
    if window < 0:
        raise ValueError("window must be >= 0")
    return cache.lookup(feature_id, now, window)


def cache_store(cache: PoaCache, entry: CacheEntry) -> None:
    cache.store(entry)


def with_rate(feature: SemanticFeature, rate: float) -> SemanticFeature:
    """Copy of ``feature`` carrying a different demanded rate (same intent id)."""
    return replace(feature, rate=float(rate))
