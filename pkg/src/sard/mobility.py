"""User mobility: random-waypoint traces, CSV trace ingestion and PoA attachment."""
from __future__ import annotations

import csv
import io
import math
import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable

from .errors import BadArea, MalformedRow, NoPoA, NonMonotoneStep
from .topology import Topology

HISTORY_LEN = 8
DEFAULT_PREFERENCES = (0.4, 0.4, 0.2)
TRACE_HEADER = ("step", "user", "x", "y")


@dataclass
class User:
    id: str
    position: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    attached_poa: int | None = None
    preferences: tuple[float, float, float] = DEFAULT_PREFERENCES
    history: deque = field(default_factory=lambda: deque(maxlen=HISTORY_LEN))

    def __post_init__(self) -> None:
        if abs(sum(self.preferences) - 1.0) > 1e-9 or min(self.preferences) < 0:
            raise ValueError("preference weights must be non-negative and sum to 1")
        if not self.history:
            self.history.append(self.position)

    def move_to(self, pos: tuple[float, float]) -> None:
        last = self.position
        self.velocity = (pos[0] - last[0], pos[1] - last[1])
        self.position = pos
        self.history.append(pos)


@dataclass(frozen=True)
class TraceRow:
    step: int
    user: str
    x: float
    y: float


@dataclass(frozen=True)
class MobilityTrace:
    rows: tuple[TraceRow, ...]

    def users(self) -> list[str]:
        return sorted({r.user for r in self.rows})

    def by_step(self) -> dict[int, dict[str, tuple[float, float]]]:
        out: dict[int, dict[str, tuple[float, float]]] = {}
        for r in self.rows:
            out.setdefault(r.step, {})[r.user] = (r.x, r.y)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in self.rows:
            w.writerow([r.step, r.user, repr(r.x), repr(r.y)])
        return buf.getvalue()


def _check_area(area: tuple[float, float]) -> None:
    width, height = area
    if not (width > 0 and height > 0 and math.isfinite(width) and math.isfinite(height)):
        raise BadArea(f"area {area!r} must have positive finite extent")


def gen_waypoint_trace(
    seed: int,
    n_users: int,
    steps: int,
    area: tuple[float, float] = (1000.0, 1000.0),
    speed_range: tuple[float, float] = (5.0, 30.0),
) -> MobilityTrace:
    """Random-waypoint trace with one row per user per step (steps 0..steps-1)."""
    if n_users < 1 or steps < 1:
        raise ValueError("n_users and steps must be >= 1")
    _check_area(area)
    lo, hi = speed_range
    if lo < 0 or hi < lo:
        raise ValueError("speed_range must satisfy 0 <= lo <= hi")
    width, height = area
    rng = random.Random(seed)
    rows = []
    for u in range(n_users):
        uid = f"u{u:03d}"
        x, y = rng.uniform(0, width), rng.uniform(0, height)
        wx, wy = rng.uniform(0, width), rng.uniform(0, height)
        speed = rng.uniform(lo, hi)
        rows.append(TraceRow(0, uid, x, y))
        for t in range(1, steps):
            dx, dy = wx - x, wy - y
            dist = math.hypot(dx, dy)
            if dist <= speed:
                x, y = wx, wy
                wx, wy = rng.uniform(0, width), rng.uniform(0, height)
                speed = rng.uniform(lo, hi)
            elif speed > 0:
                x, y = x + dx / dist * speed, y + dy / dist * speed
            x = min(max(x, 0.0), width)
            y = min(max(y, 0.0), height)
            rows.append(TraceRow(t, uid, x, y))
    rows.sort(key=lambda r: (r.step, r.user))
    return MobilityTrace(tuple(rows))


def _parse(lines: Iterable[str]) -> MobilityTrace:
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != TRACE_HEADER:
        raise MalformedRow(1, f"expected header {','.join(TRACE_HEADER)}")
    rows = []
    last_step: dict[str, int] = {}
    for lineno, fields in enumerate(reader, start=2):
        if not fields:
            continue
        if len(fields) != 4:
            raise MalformedRow(lineno, "expected 4 columns")
        try:
            step = int(fields[0])
            user = fields[1].strip()
            x, y = float(fields[2]), float(fields[3])
        except ValueError as exc:
            raise MalformedRow(lineno, str(exc)) from None
        if step < 0 or not user or not (math.isfinite(x) and math.isfinite(y)):
            raise MalformedRow(lineno)
        if step < last_step.get(user, step):
            raise NonMonotoneStep(user)
        last_step[user] = step
        rows.append(TraceRow(step, user, x, y))
    rows.sort(key=lambda r: (r.step, r.user))
    return MobilityTrace(tuple(rows))


def ingest_trace(source: str | Path | bytes | IO) -> MobilityTrace:
    """Parse a ``step,user,x,y`` CSV from a path, raw bytes or an open stream."""
    if isinstance(source, bytes):
        return _parse(io.StringIO(source.decode("utf-8")))
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return _parse(fh)
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return _parse(io.StringIO(data))


def nearest_poa(position: tuple[float, float], topo: Topology) -> int:
    poas = topo.poas()
    if not poas:
        raise NoPoA("topology has no PoA nodes")
    px, py = position
    best = min(poas, key=lambda n: ((n.position[0] - px) ** 2 + (n.position[1] - py) ** 2, n.id))
    return best.id


def attach_poa(user: User, topo: Topology) -> int:
    user.attached_poa = nearest_poa(user.position, topo)
    return user.attached_poa
