"""Per-step and per-run metric containers."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field


def p95(values: list[float]) -> float:
    """Nearest-rank 95th percentile; 0 for an empty sample."""
    if not values:
        return 0.0
    ordered = sorted(values)
    return ordered[max(0, math.ceil(0.95 * len(ordered)) - 1)]


@dataclass
class StepMetrics:
    step: int
    requests: int = 0
    accepted: int = 0
    cache_hits: int = 0
    cost: float = 0.0
    warm_cost: float = 0.0
    bytes_saved: int = 0
    latencies: list[float] = field(default_factory=list)
    rejected: Counter = field(default_factory=Counter)
    rezoned: bool = False
    blocks_committed: int = 0


@dataclass
class RunMetrics:
    total_cost: float = 0.0
    mean_response_ms: float = 0.0
    p95_response_ms: float = 0.0
    acceptance_rate: float = 0.0
    bytes_saved: int = 0
    rezone_count: int = 0
    cache_hit_rate: float = 0.0
    rejected_by_reason: dict[str, int] = field(default_factory=dict)
    requests: int = 0
    accepted: int = 0
    selection_cost: float = 0.0
    warm_cost: float = 0.0
    optimal_fallbacks: int = 0
    blocks_committed: int = 0

    @classmethod
    def aggregate(cls, steps: list[StepMetrics], rezone_count: int = 0, optimal_fallbacks: int = 0,
                  initial_blocks: int = 0) -> "RunMetrics":
        lat = [x for s in steps for x in s.latencies]
        requests = sum(s.requests for s in steps)
        accepted = sum(s.accepted for s in steps)
        rejected: Counter = Counter()
        for s in steps:
            rejected.update(s.rejected)
        selection_cost = sum((s.cost for s in steps), 0.0)
        warm_cost = sum((s.warm_cost for s in steps), 0.0)
        return cls(
            total_cost=selection_cost + warm_cost,
            mean_response_ms=sum(lat) / len(lat) if lat else 0.0,
            p95_response_ms=p95(lat),
            acceptance_rate=accepted / requests if requests else 0.0,
            bytes_saved=sum(s.bytes_saved for s in steps),
            rezone_count=rezone_count,
            cache_hit_rate=sum(s.cache_hits for s in steps) / requests if requests else 0.0,
            rejected_by_reason=dict(sorted(rejected.items())),
            requests=requests,
            accepted=accepted,
            selection_cost=selection_cost,
            warm_cost=warm_cost,
            optimal_fallbacks=optimal_fallbacks,
            blocks_committed=initial_blocks + sum(s.blocks_committed for s in steps),
        )

    def to_dict(self) -> dict:
        return asdict(self)
