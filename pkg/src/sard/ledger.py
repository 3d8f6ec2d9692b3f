"""Hash-chained zone and main ledgers with batched commits, merge and split.

Canonical block encoding (all integers little-endian):

    block   := u64 index | bytes prev_hash | u64 timestamp | u32 n | record*n
    record  := u8 variant | value* (dataclass fields in declared order)
    value   := u8 type tag, then
               'I' u64 | 'F' f64 | 'B' u8 bool | 'S' bytes(utf-8) | 'Y' bytes
               | 'N' (none) | 'L' u32 count value* | 'D' dataclass fields value*
    bytes   := u32 length | raw

The block hash is SHA-256 over that encoding.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .errors import MergeOfCorrupt, SplitOfCorrupt

ZERO_HASH = bytes(32)
MAX_BATCH = 32
DUMP_MAGIC = b"SARDLDG1"


@dataclass(frozen=True)
class InstanceSnapshot:
    id: int
    provider: str
    service_type: str
    host: int
    cost: int
    capacity: float
    trust: float
    registered: bool


@dataclass(frozen=True)
class SrRecord:
    sr_id: int
    user: str
    feature_id: int
    chosen: tuple[int, ...]
    cost: float
    step: int
    poa: int

    @property
    def node(self) -> int | None:
        return self.poa


@dataclass(frozen=True)
class SiRecord:
    instance: InstanceSnapshot
    action: str
    step: int

    @property
    def node(self) -> int | None:
        return self.instance.host


@dataclass(frozen=True)
class TrustUpdate:
    si_id: int
    delta: float
    new_trust: float
    step: int
    host: int

    @property
    def node(self) -> int | None:
        return self.host


@dataclass(frozen=True)
class KbStat:
    generation: int
    entries: int
    step: int

    @property
    def node(self) -> int | None:
        return None


@dataclass(frozen=True)
class ZoneSummary:
    epoch: int
    zone_id: int
    sr_count: int
    si_count: int
    kb_entries: int
    step: int

    @property
    def node(self) -> int | None:
        return None


@dataclass(frozen=True)
class Lineage:
    """Structural genesis record naming the parent chain heads after a merge or split."""

    parent_heads: tuple[bytes, ...]
    step: int

    @property
    def node(self) -> int | None:
        return None


Record = SrRecord | SiRecord | TrustUpdate | KbStat | ZoneSummary | Lineage

_VARIANTS: dict[type, int] = {
    SrRecord: 1, SiRecord: 2, TrustUpdate: 3, KbStat: 4, ZoneSummary: 5, Lineage: 6,
}
_BY_NAME: dict[str, type] = {cls.__name__: cls for cls in _VARIANTS}


# -- canonical encoding ----------------------------------------------------

def _bytes(raw: bytes) -> bytes:
    return struct.pack("<I", len(raw)) + raw


def _value(v: Any) -> bytes:
    if v is None:
        return b"N"
    if isinstance(v, bool):
        return b"B" + struct.pack("<B", int(v))
    if isinstance(v, int):
        if v < 0:
            raise ValueError("canonical integers are unsigned")
        return b"I" + struct.pack("<Q", v)
    if isinstance(v, float):
        return b"F" + struct.pack("<d", v)
    if isinstance(v, str):
        return b"S" + _bytes(v.encode("utf-8"))
    if isinstance(v, bytes):
        return b"Y" + _bytes(v)
    if isinstance(v, (tuple, list)):
        return b"L" + struct.pack("<I", len(v)) + b"".join(_value(x) for x in v)
    if dataclasses.is_dataclass(v):
        return b"D" + _fields(v)
    raise TypeError(f"cannot encode {type(v).__name__}")


def _fields(obj: Any) -> bytes:
    # float-declared fields encode as floats even when given ints, so JSON round trips hash the same
    out = []
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if f.type == "float" and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        out.append(_value(v))
    return b"".join(out)


def encode_record(rec: Record) -> bytes:
    return struct.pack("<B", _VARIANTS[type(rec)]) + _fields(rec)


def encode_block(index: int, prev_hash: bytes, timestamp: int, records: Iterable[Record]) -> bytes:
    records = list(records)
    return (
        struct.pack("<Q", index)
        + _bytes(prev_hash)
        + struct.pack("<Q", timestamp)
        + struct.pack("<I", len(records))
        + b"".join(encode_record(r) for r in records)
    )


# -- JSON forms ------------------------------------------------------------

def record_to_dict(rec: Record) -> dict:
    out: dict[str, Any] = {"type": type(rec).__name__}
    for f in dataclasses.fields(rec):
        v = getattr(rec, f.name)
        if isinstance(v, InstanceSnapshot):
            v = dataclasses.asdict(v)
        elif f.name == "parent_heads":
            v = [h.hex() for h in v]
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


def record_from_dict(doc: Mapping[str, Any]) -> Record:
    cls = _BY_NAME[doc["type"]]
    kwargs = {k: v for k, v in doc.items() if k != "type"}
    if cls is SiRecord:
        kwargs["instance"] = InstanceSnapshot(**kwargs["instance"])
    elif cls is SrRecord:
        kwargs["chosen"] = tuple(kwargs["chosen"])
    elif cls is Lineage:
        kwargs["parent_heads"] = tuple(bytes.fromhex(h) for h in kwargs["parent_heads"])
    for f in dataclasses.fields(cls):
        if f.type == "float" and isinstance(kwargs.get(f.name), int):
            kwargs[f.name] = float(kwargs[f.name])
    return cls(**kwargs)


# -- chain -----------------------------------------------------------------

@dataclass
class Block:
    index: int
    prev_hash: bytes
    records: list[Record]
    timestamp: int
    hash: bytes = b""

    def canonical(self) -> bytes:
        return encode_block(self.index, self.prev_hash, self.timestamp, self.records)

    def compute_hash(self) -> bytes:
        return hashlib.sha256(self.canonical()).digest()


@dataclass
class Ledger:
    chain_id: str
    blocks: list[Block] = field(default_factory=list)
    pending: list[Record] = field(default_factory=list)
    parent_heads: tuple[bytes, ...] = ()
    max_batch: int = MAX_BATCH

    def head(self) -> bytes:
        return self.blocks[-1].hash if self.blocks else ZERO_HASH

    def committed_records(self) -> list[Record]:
        return [r for b in self.blocks for r in b.records]

    def records(self) -> list[Record]:
        """All payload records, committed then pending, without structural lineage."""
        return [r for r in self.committed_records() + self.pending if not isinstance(r, Lineage)]

    def multiset(self) -> Counter:
        return Counter(self.records())

    def append(self, record: Record) -> None:
        self.pending.append(record)

    def commit(self, step: int) -> list[Block]:
        new: list[Block] = []
        while self.pending:
            batch = self.pending[: self.max_batch]
            del self.pending[: self.max_batch]
            block = Block(len(self.blocks), self.head(), batch, step)
            block.hash = block.compute_hash()
            self.blocks.append(block)
            new.append(block)
        return new


def append(ledger: Ledger, record: Record) -> None:
    ledger.append(record)


def commit(ledger: Ledger, step: int) -> list[Block]:
    return ledger.commit(step)


def verify(ledger: Ledger) -> int | None:
    """Index of the first block whose hash, height or back-link is wrong; ``None`` if intact."""
    prev = ZERO_HASH
    for i, block in enumerate(ledger.blocks):
        if block.index != i or block.prev_hash != prev or block.compute_hash() != block.hash:
            return i
        if len(block.records) > ledger.max_batch:
            return i
        prev = block.hash
    return None


def _last_step(ledger: Ledger) -> int:
    return ledger.blocks[-1].timestamp if ledger.blocks else 0


def _seeded(chain_id: str, parents: tuple[bytes, ...], step: int, max_batch: int) -> Ledger:
    out = Ledger(chain_id, parent_heads=parents, max_batch=max_batch)
    out.append(Lineage(parents, step))
    return out


def merge(a: Ledger, b: Ledger, new_chain_id: str, step: int | None = None) -> Ledger:
    """Combine two chains; the new genesis records both parent heads.

    Committed records of ``a`` then ``b`` are re-committed in order; pending
    records stay pending.
    """
    if verify(a) is not None:
        raise MergeOfCorrupt("a")
    if verify(b) is not None:
        raise MergeOfCorrupt("b")
    if step is None:
        step = max(_last_step(a), _last_step(b))
    out = _seeded(new_chain_id, (a.head(), b.head()), step, a.max_batch)
    for rec in a.committed_records() + b.committed_records():
        if not isinstance(rec, Lineage):
            out.append(rec)
    out.commit(step)
    out.pending.extend(r for r in a.pending + b.pending if not isinstance(r, Lineage))
    return out


def split(
    ledger: Ledger,
    membership: Mapping[int, Any],
    ids: tuple[str, str] | None = None,
    side_a: Any = "A",
    step: int | None = None,
) -> tuple[Ledger, Ledger]:
    """Partition records by their node association; unassociated records go to side A."""
    if verify(ledger) is not None:
        raise SplitOfCorrupt(ledger.chain_id)
    if ids is None:
        ids = (f"{ledger.chain_id}/a", f"{ledger.chain_id}/b")
    if step is None:
        step = _last_step(ledger)
    parents = (ledger.head(),)
    left = _seeded(ids[0], parents, step, ledger.max_batch)
    right = _seeded(ids[1], parents, step, ledger.max_batch)

    def goes_left(rec: Record) -> bool:
        node = rec.node
        return node is None or membership.get(node, side_a) == side_a

    for rec in ledger.committed_records():
        if not isinstance(rec, Lineage):
            (left if goes_left(rec) else right).append(rec)
    left.commit(step)
    right.commit(step)
    for rec in ledger.pending:
        if not isinstance(rec, Lineage):
            (left if goes_left(rec) else right).pending.append(rec)
    return left, right


def summarize_to_main(main: Ledger, summaries: Iterable[ZoneSummary]) -> None:
    for s in summaries:
        main.append(s)


# -- export ----------------------------------------------------------------

def to_ndjson(ledger: Ledger) -> str:
    lines = []
    for b in ledger.blocks:
        lines.append(json.dumps({
            "chain_id": ledger.chain_id,
            "index": b.index,
            "prev_hash": b.prev_hash.hex(),
            "timestamp": b.timestamp,
            "hash": b.hash.hex(),
            "records": [record_to_dict(r) for r in b.records],
        }, sort_keys=True))
    return "".join(line + "\n" for line in lines)


def from_ndjson(text: str) -> Ledger:
    blocks = []
    chain_id = ""
    for line in text.splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        chain_id = doc["chain_id"]
        blocks.append(Block(
            index=doc["index"],
            prev_hash=bytes.fromhex(doc["prev_hash"]),
            records=[record_from_dict(r) for r in doc["records"]],
            timestamp=doc["timestamp"],
            hash=bytes.fromhex(doc["hash"]),
        ))
    return Ledger(chain_id, blocks=blocks)


def to_binary(ledger: Ledger) -> bytes:
    out = [DUMP_MAGIC, _bytes(ledger.chain_id.encode()), struct.pack("<I", len(ledger.blocks))]
    for b in ledger.blocks:
        out.append(_bytes(b.canonical()))
        out.append(b.hash)
    return b"".join(out)


def verify_binary(raw: bytes) -> int | None:
    """Offline check of a binary dump; returns the first corrupt block index or ``None``.

    A truncated or malformed dump reports the index of the block it fails in.
    """
    if raw[: len(DUMP_MAGIC)] != DUMP_MAGIC:
        raise ValueError("not a ledger dump")
    pos = len(DUMP_MAGIC)
    (n_id,) = struct.unpack_from("<I", raw, pos)
    pos += 4 + n_id
    (n_blocks,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    prev = ZERO_HASH
    for i in range(n_blocks):
        try:
            (size,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            body = raw[pos: pos + size]
            pos += size
            digest = raw[pos: pos + 32]
            pos += 32
            (index,) = struct.unpack_from("<Q", body, 0)
            (plen,) = struct.unpack_from("<I", body, 8)
            prev_hash = body[12: 12 + plen]
        except struct.error:
            return i
        if len(digest) != 32 or index != i or prev_hash != prev:
            return i
        if hashlib.sha256(body).digest() != digest:
            return i
        prev = digest
    return None
