"""Edge-cloud infrastructure graph: generation, routing and capacity bookkeeping."""
from __future__ import annotations

import heapq
import itertools
import json
import math
import random
from dataclasses import dataclass, field
from typing import Any, Protocol

from .errors import CapacityExceeded, EmptyTopology, NoRoute, StaleToken

# Table 1 ranges, inclusive integer draws.
NODE_COST = (50, 70)
LINK_COST = (10, 20)
LINK_CAPACITY = (10, 40)
NODE_CAPACITY = (50, 100)

BASE_LATENCY_MS = 1.0
DEFAULT_HARVEST_RATE = 0.5
TARGET_MEAN_DEGREE = 3.0

POA, EDGE, CLOUD = "poa", "edge", "cloud"


@dataclass
class InfraNode:
    id: int
    position: tuple[float, float]
    kind: str
    cost: int
    capacity: float
    used: float = 0.0
    battery: float = 100.0
    harvest_rate: float = DEFAULT_HARVEST_RATE

    @property
    def remaining(self) -> float:
        return self.capacity - self.used


@dataclass
class NetLink:
    id: int
    endpoints: tuple[int, int]
    cost: int
    capacity: float
    used: float = 0.0
    base_latency: float = BASE_LATENCY_MS

    def other(self, node: int) -> int:
        a, b = self.endpoints
        return b if node == a else a


class Reservable(Protocol):
    id: int
    capacity: float
    used: float


@dataclass(frozen=True)
class ReservationToken:
    id: int
    links: tuple[int, ...]
    host: int
    si: Any
    rate: float


@dataclass
class Topology:
    nodes: list[InfraNode]
    links: list[NetLink]
    adjacency: dict[int, list[int]] = field(default_factory=dict)
    seed: int | None = None
    _outstanding: dict[int, ReservationToken] = field(default_factory=dict, repr=False)
    _token_ids: Any = field(default_factory=itertools.count, repr=False)
    _path_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not self.adjacency:
            self.adjacency = {n.id: [] for n in self.nodes}
            for link in self.links:
                for end in link.endpoints:
                    self.adjacency[end].append(link.id)
        self._node_by_id = {n.id: n for n in self.nodes}
        self._link_by_id = {l.id: l for l in self.links}

    def node(self, node_id: int) -> InfraNode:
        return self._node_by_id[node_id]

    def link(self, link_id: int) -> NetLink:
        return self._link_by_id[link_id]

    def poas(self) -> list[InfraNode]:
        return [n for n in self.nodes if n.kind == POA]

    def hosts(self) -> list[InfraNode]:
        return [n for n in self.nodes if n.kind != POA]

    def is_connected(self) -> bool:
        if not self.nodes:
            return False
        start = self.nodes[0].id
        seen = {start}
        frontier = [start]
        while frontier:
            cur = frontier.pop()
            for lid in self.adjacency[cur]:
                nxt = self.link(lid).other(cur)
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        return len(seen) == len(self.nodes)

    def path_nodes(self, src: int, links: list[int]) -> list[int]:
        """Node sequence visited when walking ``links`` from ``src``."""
        seq = [src]
        for lid in links:
            seq.append(self.link(lid).other(seq[-1]))
        return seq

    # -- routing -----------------------------------------------------------

    def shortest_path(self, src: int, dst: int, metric: str = "cost") -> tuple[list[int], float]:
        """Minimum-metric route; ties go to the lexicographically smallest link-id sequence.

        Link metrics are static, so results are memoized per (src, dst, metric).
        """
        if metric not in ("cost", "latency"):
            raise ValueError(f"unknown metric {metric!r}")
        key = (src, dst, metric)
        if key in self._path_cache:
            links, total = self._path_cache[key]
            return list(links), total
        if src not in self._node_by_id or dst not in self._node_by_id:
            raise KeyError(f"unknown node in ({src}, {dst})")
        if src == dst:
            return [], 0.0

        def weight(link: NetLink) -> float:
            return float(link.cost) if metric == "cost" else link.base_latency

        # Labels (total, link-id tuple) are totally ordered; positive weights make
        # lexicographic extension monotone, so label-setting Dijkstra stays exact.
        best: dict[int, tuple[float, tuple[int, ...]]] = {src: (0.0, ())}
        heap: list[tuple[float, tuple[int, ...], int]] = [(0.0, (), src)]
        done: set[int] = set()
        while heap:
            total, path, cur = heapq.heappop(heap)
            if cur in done:
                continue
            done.add(cur)
            if cur == dst:
                self._path_cache[key] = (tuple(path), total)
                return list(path), total
            for lid in self.adjacency[cur]:
                link = self.link(lid)
                nxt = link.other(cur)
                if nxt in done:
                    continue
                label = (total + weight(link), path + (lid,))
                if nxt not in best or label < best[nxt]:
                    best[nxt] = label
                    heapq.heappush(heap, (label[0], label[1], nxt))
        raise NoRoute(f"no route from {src} to {dst}")

    # -- capacity ----------------------------------------------------------

    def reserve(self, path: list[int], host: int, si: Reservable | None, rate: float) -> ReservationToken:
        """Atomically add ``rate`` to every path link, the host node and the instance."""
        if rate <= 0:
            raise ValueError("rate must be positive")
        for lid in path:
            link = self.link(lid)
            if link.used + rate > link.capacity:
                raise CapacityExceeded(f"link {lid}")
        node = self.node(host)
        if node.used + rate > node.capacity:
            raise CapacityExceeded(f"node {host}")
        if si is not None and si.used + rate > si.capacity:
            raise CapacityExceeded(f"instance {si.id}")
        for lid in path:
            self.link(lid).used += rate
        node.used += rate
        if si is not None:
            si.used += rate
        token = ReservationToken(next(self._token_ids), tuple(path), host, si, rate)
        self._outstanding[token.id] = token
        return token

    def release(self, token: ReservationToken) -> None:
        if self._outstanding.pop(token.id, None) is None:
            raise StaleToken(f"token {token.id} already released or unknown")
        for lid in token.links:
            link = self.link(lid)
            link.used = max(0.0, link.used - token.rate)
        node = self.node(token.host)
        node.used = max(0.0, node.used - token.rate)
        if token.si is not None:
            token.si.used = max(0.0, token.si.used - token.rate)

    def outstanding(self) -> list[ReservationToken]:
        return [self._outstanding[k] for k in sorted(self._outstanding)]

    def audit_usage(self, tol: float = 1e-9) -> list[str]:
        """Entities whose stored ``used`` differs from the sum of outstanding reservations."""
        link_sum: dict[int, float] = {l.id: 0.0 for l in self.links}
        node_sum: dict[int, float] = {n.id: 0.0 for n in self.nodes}
        si_sum: dict[int, tuple[Any, float]] = {}
        for tok in self.outstanding():
            for lid in tok.links:
                link_sum[lid] += tok.rate
            node_sum[tok.host] += tok.rate
            if tok.si is not None:
                obj, acc = si_sum.get(tok.si.id, (tok.si, 0.0))
                si_sum[tok.si.id] = (obj, acc + tok.rate)
        bad = [f"link {lid}" for lid, s in link_sum.items() if abs(self.link(lid).used - s) > tol]
        bad += [f"node {nid}" for nid, s in node_sum.items() if abs(self.node(nid).used - s) > tol]
        bad += [f"instance {sid}" for sid, (obj, s) in sorted(si_sum.items()) if abs(obj.used - s) > tol]
        return bad

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "nodes": [
                {
                    "id": n.id, "position": list(n.position), "kind": n.kind, "cost": n.cost,
                    "capacity": n.capacity, "used": n.used, "battery": n.battery,
                    "harvest_rate": n.harvest_rate,
                }
                for n in self.nodes
            ],
            "links": [
                {
                    "id": l.id, "endpoints": list(l.endpoints), "cost": l.cost,
                    "capacity": l.capacity, "used": l.used, "base_latency": l.base_latency,
                }
                for l in self.links
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Topology":
        nodes = [
            InfraNode(
                id=d["id"], position=tuple(d["position"]), kind=d["kind"], cost=d["cost"],
                capacity=d["capacity"], used=d.get("used", 0.0), battery=d.get("battery", 100.0),
                harvest_rate=d.get("harvest_rate", DEFAULT_HARVEST_RATE),
            )
            for d in doc["nodes"]
        ]
        links = [
            NetLink(
                id=d["id"], endpoints=tuple(d["endpoints"]), cost=d["cost"], capacity=d["capacity"],
                used=d.get("used", 0.0), base_latency=d.get("base_latency", BASE_LATENCY_MS),
            )
            for d in doc["links"]
        ]
        return cls(nodes=nodes, links=links, seed=doc.get("seed"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def node_kinds(n_nodes: int) -> list[str]:
    """First ceil(n/3) ids are PoAs, last ceil(n/6) are cloud, the rest edge.

    PoA wins where the two ranges overlap (n = 1).
    """
    n_poa = math.ceil(n_nodes / 3)
    n_cloud = math.ceil(n_nodes / 6)
    kinds = []
    for i in range(n_nodes):
        if i < n_poa:
            kinds.append(POA)
        elif i >= n_nodes - n_cloud:
            kinds.append(CLOUD)
        else:
            kinds.append(EDGE)
    return kinds


def generate_topology(
    seed: int, n_nodes: int, area: tuple[float, float] = (1000.0, 1000.0)
) -> Topology:
    """Random connected graph: a random spanning tree plus extra edges until mean degree >= 3."""
    if n_nodes < 1:
        raise EmptyTopology("n_nodes must be >= 1")
    width, height = area
    if not (width > 0 and height > 0):
        raise ValueError("area must have positive extent")
    rng = random.Random(seed)
    kinds = node_kinds(n_nodes)
    nodes = []
    for i in range(n_nodes):
        pos = (rng.uniform(0.0, width), rng.uniform(0.0, height))
        nodes.append(
            InfraNode(
                id=i, position=pos, kind=kinds[i],
                cost=rng.randint(*NODE_COST), capacity=float(rng.randint(*NODE_CAPACITY)),
            )
        )

    pairs: list[tuple[int, int]] = []
    present: set[tuple[int, int]] = set()

    def add(u: int, v: int) -> None:
        pair = (min(u, v), max(u, v))
        present.add(pair)
        pairs.append(pair)

    order = list(range(n_nodes))
    rng.shuffle(order)
    for i in range(1, n_nodes):
        add(order[i], order[rng.randrange(i)])

    max_links = n_nodes * (n_nodes - 1) // 2
    target = min(max_links, math.ceil(TARGET_MEAN_DEGREE * n_nodes / 2))
    while len(pairs) < target:
        u, v = rng.sample(range(n_nodes), 2)
        if (min(u, v), max(u, v)) not in present:
            add(u, v)

    links = [
        NetLink(
            id=i, endpoints=pair, cost=rng.randint(*LINK_COST),
            capacity=float(rng.randint(*LINK_CAPACITY)),
        )
        for i, pair in enumerate(pairs)
    ]
    return Topology(nodes=nodes, links=links, seed=seed)
