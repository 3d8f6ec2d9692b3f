"""Dynamic overlay zoning: weighted k-means partitions and rezoning triggers."""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .topology import Topology

ZONE_SIZE_TARGET = 5
IMBALANCE_THETA = 1.5
REZONE_INTERVAL = 20
MAX_ITER = 100


@dataclass(frozen=True)
class Zone:
    id: int
    members: frozenset[int]
    centroid: tuple[float, float]
    chain: str
    epoch: int


@dataclass(frozen=True)
class ZonePlan:
    epoch: int
    zones: tuple[Zone, ...]
    sse_trace: tuple[float, ...] = field(default=(), compare=False)

    @property
    def k(self) -> int:
        return len(self.zones)

    def zone_of(self) -> dict[int, int]:
        return {n: z.id for z in self.zones for n in z.members}

    def zone(self, zone_id: int) -> Zone:
        return self.zones[zone_id]

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "k": self.k,
            "zones": [
                {"id": z.id, "members": sorted(z.members), "centroid": list(z.centroid), "chain": z.chain}
                for z in self.zones
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def choose_k(n_nodes: int, predicted_total_load: float = 0.0, zone_size_target: int = ZONE_SIZE_TARGET) -> int:
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    return max(1, math.ceil(n_nodes / zone_size_target))


def _d2(a: tuple[float, float], b: tuple[float, float]) -> float:
    return (a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2


def weighted_sse(points: Mapping[int, tuple[float, float]], weights: Mapping[int, float],
                 assign: Mapping[int, int], centers: Sequence[tuple[float, float]]) -> float:
    return sum(weights[n] * _d2(points[n], centers[assign[n]]) for n in sorted(points))


def compute_zones(
    topo: Topology,
    predicted_load: Mapping[int, float] | None = None,
    k: int = 1,
    seed: int = 0,
    epoch: int = 0,
    debug: bool = False,
) -> ZonePlan:
    """Weighted k-means over node positions (weight = 1 + predicted load)."""
    ids = sorted(n.id for n in topo.nodes)
    if not 1 <= k <= len(ids):
        raise ValueError(f"k={k} outside [1, {len(ids)}]")
    load = predicted_load or {}
    points = {n.id: n.position for n in topo.nodes}
    weights = {i: 1.0 + float(load.get(i, 0.0)) for i in ids}
    rng = random.Random(seed)
    centers = [points[i] for i in rng.sample(ids, k)]

    def assign_all() -> dict[int, int]:
        assign = {i: min(range(k), key=lambda c: (_d2(points[i], centers[c]), c)) for i in ids}
        sizes = [0] * k
        for c in assign.values():
            sizes[c] += 1
        for empty in range(k):
            if sizes[empty]:
                continue
            donors = [i for i in ids if sizes[assign[i]] > 1]
            far = max(donors, key=lambda i: (_d2(points[i], centers[assign[i]]), -i))
            sizes[assign[far]] -= 1
            assign[far] = empty
            sizes[empty] = 1
            centers[empty] = points[far]
        return assign

    def recenter(assign: Mapping[int, int]) -> None:
        for c in range(k):
            members = [i for i in ids if assign[i] == c]
            total = sum(weights[i] for i in members)
            centers[c] = (
                sum(weights[i] * points[i][0] for i in members) / total,
                sum(weights[i] * points[i][1] for i in members) / total,
            )

    trace = []
    assign = assign_all()
    recenter(assign)
    trace.append(weighted_sse(points, weights, assign, centers))
    for _ in range(MAX_ITER - 1):
        new = assign_all()
        recenter(new)
        trace.append(weighted_sse(points, weights, new, centers))
        if debug:
            assert trace[-1] <= trace[-2] * (1 + 1e-12) + 1e-9, "k-means SSE increased"
        if new == assign:
            break
        assign = new

    # Relabel clusters by their smallest member id so plans are canonical.
    order = sorted(range(k), key=lambda c: min(i for i in ids if assign[i] == c))
    zones = []
    for zid, c in enumerate(order):
        members = frozenset(i for i in ids if assign[i] == c)
        zones.append(Zone(zid, members, centers[c], f"zone-e{epoch}-z{zid}", epoch))
    return ZonePlan(epoch, tuple(zones), tuple(trace))


def zone_loads(plan: ZonePlan, node_load: Mapping[int, float]) -> list[float]:
    return [sum(node_load.get(n, 0.0) for n in z.members) for z in plan.zones]


def should_rezone(
    per_zone_load: Sequence[float], step: int, interval: int = REZONE_INTERVAL, theta: float = IMBALANCE_THETA
) -> bool:
    if interval > 0 and step % interval == 0:
        return True
    if not per_zone_load:
        return False
    mean = sum(per_zone_load) / len(per_zone_load)
    return mean > 0 and max(per_zone_load) / mean > theta
