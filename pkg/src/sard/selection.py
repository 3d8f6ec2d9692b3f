"""Service selection: scoring, trust gating, composition and baseline strategies.

CCAM- and SDMS-style baselines are interpretive: they follow the short
characterizations used in the evaluation (node-per-service dedication;
availability-first, cost-blind), not the cited systems' full algorithms.
"""
from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

from .catalog import B_MIN, Catalog, ServiceInstance
from .errors import SearchBudgetExceeded, UnknownSi
from .ledger import TrustUpdate
from .prediction import CONTINUITY_HORIZON, PredictorState, predict_availability
from .semantics import HIGH, SemanticFeature
from .topology import ReservationToken, Topology

TAU = 0.5
TRUST_REWARD = 0.05
TRUST_PENALTY = 0.2
SI_PROCESSING_MS = 2.0
CACHE_HIT_MS = 0.5
BNB_NODE_CAP = 5_000

NO_CANDIDATE, CAPACITY, QOS, UNTRUSTED, UNAVAILABLE = "NoCandidate", "Capacity", "QoS", "Untrusted", "Unavailable"
SERVED_OK, FAILED = "served_ok", "failed_when_selected"

STRATEGIES = ("proposed", "optimal", "random", "ccam", "sdms")


@dataclass(frozen=True)
class ServiceRequest:
    id: int
    user: str
    feature: SemanticFeature
    origin_poa: int
    step: int
    priority: str = "normal"
    rate: float | None = None
    preferences: tuple[float, float, float] = (0.4, 0.4, 0.2)

    @property
    def demand(self) -> float:
        return self.feature.rate if self.rate is None else self.rate


@dataclass
class AssignmentResponse:
    sr_id: int
    chosen: tuple[int, ...] = ()
    path: tuple[int, ...] = ()
    cost: float = 0.0
    latency: float = 0.0
    availability_pred: bool = False
    next_position_pred: tuple[float, float] | None = None
    accepted: bool = False
    reject_reason: str | None = None
    failed_part: int | None = None
    cached: bool = False
    tokens: list[ReservationToken] = field(default_factory=list, compare=False, repr=False)
    outcomes: list[tuple[int, str]] = field(default_factory=list, compare=False, repr=False)


def rejected(sr: ServiceRequest, reason: str, outcomes: Iterable[tuple[int, str]] = ()) -> AssignmentResponse:
    return AssignmentResponse(sr.id, accepted=False, reject_reason=reason, outcomes=list(outcomes))


# -- candidate evaluation ----------------------------------------------------

@dataclass(frozen=True)
class Candidate:
    si: ServiceInstance
    path: tuple[int, ...]
    cost: float
    latency: float
    fits: bool

    @property
    def id(self) -> int:
        return self.si.id


Usage = dict[tuple[str, int], float]


def evaluate(topo: Topology, si: ServiceInstance, origin: int, rate: float,
             extra: Usage | None = None) -> Candidate:
    """Cost, post-admission latency and capacity fit of serving ``rate`` from ``origin`` on ``si``.

    ``extra`` holds tentative usage not yet reserved (used by the joint search).
    """
    extra = extra or {}
    path, link_cost = topo.shortest_path(origin, si.host, "cost")
    node = topo.node(si.host)
    fits = True
    latency = 0.0
    for lid in path:
        link = topo.link(lid)
        after = link.used + extra.get(("l", lid), 0.0) + rate
        fits &= after <= link.capacity
        latency += link.base_latency * (1 + after / link.capacity)
    node_after = node.used + extra.get(("n", node.id), 0.0) + rate
    si_after = si.used + extra.get(("s", si.id), 0.0) + rate
    fits &= node_after <= node.capacity and si_after <= si.capacity
    latency += SI_PROCESSING_MS * (1 + si_after / si.capacity)
    return Candidate(si, tuple(path), float(si.cost + node.cost + link_cost), latency, fits)


def _norm(v: float, lo: float, hi: float) -> float:
    return 0.0 if hi <= lo else (v - lo) / (hi - lo)


def score(cost_hat: float, latency_hat: float, battery: float, prefs: Sequence[float]) -> float:
    """Weighted preference score over normalized cost/latency and host depletion; lower is better."""
    w_cost, w_lat, w_energy = prefs
    return w_cost * cost_hat + w_lat * latency_hat + w_energy * (1 - battery / 100.0)


def score_candidates(cands: Sequence[Candidate], topo: Topology, prefs: Sequence[float]) -> list[float]:
    """Scores with cost and latency min-max normalized over ``cands``."""
    if not cands:
        return []
    cs = [c.cost for c in cands]
    ls = [c.latency for c in cands]
    c_lo, c_hi, l_lo, l_hi = min(cs), max(cs), min(ls), max(ls)
    return [
        score(_norm(c.cost, c_lo, c_hi), _norm(c.latency, l_lo, l_hi), topo.node(c.si.host).battery, prefs)
        for c in cands
    ]


def host_alive(topo: Topology, si: ServiceInstance, b_min: float = B_MIN) -> bool:
    return topo.node(si.host).battery > b_min


@dataclass
class SelectionContext:
    topo: Topology
    catalog: Catalog
    predictor: PredictorState
    rng: random.Random = field(default_factory=lambda: random.Random(0))
    tau: float = TAU
    horizon: int = CONTINUITY_HORIZON
    dedication: dict[int, str] = field(default_factory=dict)
    budget_exceeded: int = 0


def commit_candidate(sr: ServiceRequest, cand: Candidate, ctx: SelectionContext) -> AssignmentResponse:
    """Reserve capacity for an already-checked candidate and build the accepted response."""
    tok = ctx.topo.reserve(list(cand.path), cand.si.host, cand.si, sr.demand)
    return AssignmentResponse(
        sr.id, chosen=(cand.id,), path=cand.path, cost=cand.cost, latency=cand.latency,
        accepted=True, tokens=[tok], outcomes=[(cand.id, SERVED_OK)],
    )


def admit(sr: ServiceRequest, cand: Candidate, ctx: SelectionContext) -> AssignmentResponse:
    """Check a picked candidate without re-drawing: capacity, QoS bound, then host liveness."""
    if not cand.fits:
        return rejected(sr, CAPACITY)
    if cand.latency > sr.feature.max_latency:
        return rejected(sr, QOS)
    if not host_alive(ctx.topo, cand.si):
        return rejected(sr, UNAVAILABLE, [(cand.id, FAILED)])
    return commit_candidate(sr, cand, ctx)


# -- proposed ----------------------------------------------------------------

def proposed_candidates(sr: ServiceRequest, ctx: SelectionContext, origin: int,
                        zone: frozenset[int] | None) -> tuple[list[Candidate], str]:
    """Filtered candidate set and the reason the last filter removed everything (if it did)."""
    pool = ctx.catalog.registered(sr.feature.service_type)
    if zone is not None:
        pool = [si for si in pool if si.host in zone]
    if not pool:
        return [], NO_CANDIDATE
    stages: list[tuple[str, Callable[[ServiceInstance], bool]]] = [
        (UNTRUSTED, lambda si: si.trust >= ctx.tau),
        (UNAVAILABLE, lambda si: predict_availability(ctx.predictor, ctx.catalog, ctx.topo, si.id, ctx.horizon)),
    ]
    for reason, keep in stages:
        pool = [si for si in pool if keep(si)]
        if not pool:
            return [], reason
    cands = [evaluate(ctx.topo, si, origin, sr.demand) for si in pool]
    cands = [c for c in cands if c.fits]
    if not cands:
        return [], CAPACITY
    cands = [c for c in cands if c.latency <= sr.feature.max_latency]
    if not cands:
        return [], QOS
    return cands, ""


def select_proposed(sr: ServiceRequest, ctx: SelectionContext, zone: frozenset[int] | None = None,
                    origin: int | None = None) -> AssignmentResponse:
    origin = sr.origin_poa if origin is None else origin
    cands, reason = proposed_candidates(sr, ctx, origin, zone)
    if not cands and zone is not None:
        # multicast fallback: one retry over every zone
        cands, reason = proposed_candidates(sr, ctx, origin, None)
    if not cands:
        return rejected(sr, reason)
    scores = score_candidates(cands, ctx.topo, sr.preferences)
    best = min(range(len(cands)), key=lambda i: (scores[i], cands[i].id))
    cand = cands[best]
    if not host_alive(ctx.topo, cand.si):
        return rejected(sr, UNAVAILABLE, [(cand.id, FAILED)])
    return commit_candidate(sr, cand, ctx)


def select_composed(sr: ServiceRequest, parts: Sequence[str], ctx: SelectionContext,
                    selector: Callable[..., AssignmentResponse] = select_proposed,
                    zone: frozenset[int] | None = None) -> AssignmentResponse:
    """Chain per-part selections; any failing part rolls back the whole composition."""
    done: list[AssignmentResponse] = []
    origin = sr.origin_poa
    for k, part in enumerate(parts):
        sub = replace(sr, feature=replace(sr.feature, service_type=part))
        resp = selector(sub, ctx, zone=zone, origin=origin)
        if not resp.accepted:
            for prev in done:
                for tok in prev.tokens:
                    ctx.topo.release(tok)
            out = rejected(sr, resp.reject_reason or NO_CANDIDATE, resp.outcomes)
            out.failed_part = k
            return out
        done.append(resp)
        origin = ctx.catalog.instances[resp.chosen[0]].host
    return AssignmentResponse(
        sr.id,
        chosen=tuple(i for r in done for i in r.chosen),
        path=tuple(l for r in done for l in r.path),
        cost=sum(r.cost for r in done),
        latency=sum(r.latency for r in done),
        accepted=True,
        tokens=[t for r in done for t in r.tokens],
        outcomes=[o for r in done for o in r.outcomes],
    )


def update_trust(catalog: Catalog, si_id: int, outcome: str, step: int = 0) -> TrustUpdate:
    si = catalog.instances.get(si_id)
    if si is None:
        raise UnknownSi(str(si_id))
    old = si.trust
    if outcome == SERVED_OK:
        si.trust = min(1.0, old + TRUST_REWARD)
    elif outcome == FAILED:
        si.trust = max(0.0, old - TRUST_PENALTY)
    else:
        raise ValueError(f"unknown outcome {outcome!r}")
    return TrustUpdate(si_id, si.trust - old, si.trust, step, si.host)


# -- baselines -----------------------------------------------------------------

def select_random(sr: ServiceRequest, ctx: SelectionContext, zone=None, origin: int | None = None) -> AssignmentResponse:
    origin = sr.origin_poa if origin is None else origin
    pool = ctx.catalog.registered(sr.feature.service_type)
    if not pool:
        return rejected(sr, NO_CANDIDATE)
    si = ctx.rng.choice(pool)
    return admit(sr, evaluate(ctx.topo, si, origin, sr.demand), ctx)


def select_sdms(sr: ServiceRequest, ctx: SelectionContext, zone=None, origin: int | None = None) -> AssignmentResponse:
    origin = sr.origin_poa if origin is None else origin
    pool = [si for si in ctx.catalog.registered(sr.feature.service_type) if si.available]
    if not pool:
        return rejected(sr, NO_CANDIDATE)
    cands = [c for c in (evaluate(ctx.topo, si, origin, sr.demand) for si in pool) if c.fits]
    if not cands:
        return rejected(sr, CAPACITY)
    best = min(cands, key=lambda c: (-(c.si.capacity - c.si.used) / c.si.capacity, c.id))
    return admit(sr, best, ctx)


def _nearness(topo: Topology, cand: Candidate) -> float:
    return sum(topo.link(l).base_latency for l in cand.path)


def select_ccam(sr: ServiceRequest, ctx: SelectionContext, zone=None, origin: int | None = None) -> AssignmentResponse:
    """Each node serves at most one service type, fixed on first use."""
    origin = sr.origin_poa if origin is None else origin
    stype = sr.feature.service_type
    pool = [si for si in ctx.catalog.registered(stype) if si.available]
    if not pool:
        return rejected(sr, NO_CANDIDATE)
    cands = sorted((evaluate(ctx.topo, si, origin, sr.demand) for si in pool),
                   key=lambda c: (_nearness(ctx.topo, c), c.id))
    dedicated = [c for c in cands if ctx.dedication.get(c.si.host) == stype and c.fits]
    if dedicated:
        return admit(sr, dedicated[0], ctx)
    free = [c for c in cands if c.si.host not in ctx.dedication]
    if not free:
        return rejected(sr, NO_CANDIDATE)
    pick = free[0]
    resp = admit(sr, pick, ctx)
    if resp.accepted:
        ctx.dedication[pick.si.host] = stype
    return resp


# -- optimal (joint branch and bound) ------------------------------------------

REJECT = 1 << 62


def _apply(extra: Usage, cand: Candidate, rate: float) -> None:
    for lid in cand.path:
        extra[("l", lid)] = extra.get(("l", lid), 0.0) + rate
    extra[("n", cand.si.host)] = extra.get(("n", cand.si.host), 0.0) + rate
    extra[("s", cand.si.id)] = extra.get(("s", cand.si.id), 0.0) + rate


def optimal_pools(batch: Sequence[ServiceRequest], ctx: SelectionContext) -> list[list[ServiceInstance]]:
    """Per-SR instances that are feasible on the current state (omniscient liveness, trust-gated).

    Usage only grows within a batch, so anything infeasible now stays infeasible.
    """
    pools = []
    for sr in batch:
        pool = []
        for si in ctx.catalog.registered(sr.feature.service_type):
            if si.trust < ctx.tau or not host_alive(ctx.topo, si):
                continue
            c = evaluate(ctx.topo, si, sr.origin_poa, sr.demand)
            if c.fits and c.latency <= sr.feature.max_latency:
                pool.append(si)
        pools.append(pool)
    return pools


def _footprint(topo: Topology, sr: ServiceRequest, si: ServiceInstance) -> set[tuple[str, int]]:
    path, _ = topo.shortest_path(sr.origin_poa, si.host, "cost")
    return {("l", l) for l in path} | {("n", si.host), ("s", si.id)}


def _components(batch: Sequence[ServiceRequest], pools: Sequence[Sequence[ServiceInstance]],
                topo: Topology) -> list[list[int]]:
    """Group SR indices whose candidates share any link, node or instance."""
    parent = list(range(len(batch)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    owner: dict[tuple[str, int], int] = {}
    for i, (sr, pool) in enumerate(zip(batch, pools)):
        for si in pool:
            for key in _footprint(topo, sr, si):
                if key in owner:
                    a, b = find(owner[key]), find(i)
                    if a != b:
                        parent[max(a, b)] = min(a, b)
                else:
                    owner[key] = i
    groups: dict[int, list[int]] = {}
    for i in range(len(batch)):
        groups.setdefault(find(i), []).append(i)
    return [groups[r] for r in sorted(groups)]


def _solve_component(batch: Sequence[ServiceRequest], pools: Sequence[Sequence[ServiceInstance]],
                     idx: Sequence[int], ctx: SelectionContext, budget: list[int]) -> tuple[tuple[int, ...], int, float]:
    topo = ctx.topo
    n = len(idx)
    srs = [batch[i] for i in idx]
    cand = [pools[i] for i in idx]

    def options(j: int, extra: Usage) -> list[Candidate]:
        sr = srs[j]
        out = []
        for si in cand[j]:
            c = evaluate(topo, si, sr.origin_poa, sr.demand, extra)
            if c.fits and c.latency <= sr.feature.max_latency:
                out.append(c)
        return out

    def suffix_bounds(depth: int, extra: Usage) -> tuple[int, float]:
        # Usage only grows down the tree, so alone-feasibility at this node
        # bounds every descendant.
        acc, cost = 0, 0.0
        for j in range(depth, n):
            opts = options(j, extra)
            if opts:
                acc += 1
                cost += min(c.cost for c in opts)
        return acc, cost

    a0, c0 = suffix_bounds(0, {})
    heap: list[tuple[int, float, tuple[int, ...], int, float, Usage]] = [(-a0, c0, (), 0, 0.0, {})]
    while heap:
        _, _, prefix, acc, cost, extra = heapq.heappop(heap)
        depth = len(prefix)
        if depth == n:
            return prefix, acc, cost
        budget[0] -= 1
        if budget[0] < 0:
            raise SearchBudgetExceeded("branch and bound node budget exhausted")
        rest_acc, rest_cost = suffix_bounds(depth + 1, extra)
        rate = srs[depth].demand
        for c in options(depth, extra):
            child = dict(extra)
            _apply(child, c, rate)
            a, k = acc + 1, cost + c.cost
            heapq.heappush(heap, (-(a + rest_acc), k + rest_cost, prefix + (c.id,), a, k, child))
        heapq.heappush(heap, (-(acc + rest_acc), cost + rest_cost, prefix + (REJECT,), acc, cost, extra))
    raise AssertionError("search space exhausted without a complete assignment")


def solve_optimal(batch: Sequence[ServiceRequest], ctx: SelectionContext,
                  node_cap: int = BNB_NODE_CAP) -> tuple[tuple[int, ...], int, float]:
    """Best-first branch and bound for (max accepted, min cost, smallest assignment vector).

    The objective separates over SR groups with disjoint resource footprints,
    so each group is searched on its own.
    """
    pools = optimal_pools(batch, ctx)
    choice = [REJECT] * len(batch)
    budget = [node_cap]
    acc, cost = 0, 0.0
    for idx in _components(batch, pools, ctx.topo):
        sub, a, k = _solve_component(batch, pools, idx, ctx, budget)
        for i, pick in zip(idx, sub):
            choice[i] = pick
        acc += a
        cost += k
    return tuple(choice), acc, cost


def _optimal_reject_reason(sr: ServiceRequest, ctx: SelectionContext) -> str:
    """Why nothing serves ``sr`` on the current (partially committed) state."""
    pool = ctx.catalog.registered(sr.feature.service_type)
    if not pool:
        return NO_CANDIDATE
    pool = [si for si in pool if si.trust >= ctx.tau]
    if not pool:
        return UNTRUSTED
    pool = [si for si in pool if host_alive(ctx.topo, si)]
    if not pool:
        return UNAVAILABLE
    cands = [evaluate(ctx.topo, si, sr.origin_poa, sr.demand) for si in pool]
    return QOS if any(c.fits for c in cands) else CAPACITY


def select_optimal(batch: Sequence[ServiceRequest], ctx: SelectionContext,
                   node_cap: int = BNB_NODE_CAP) -> list[AssignmentResponse]:
    if not batch:
        return []
    try:
        choice, _, _ = solve_optimal(batch, ctx, node_cap)
    except SearchBudgetExceeded:
        ctx.budget_exceeded += 1
        return [select_proposed(sr, ctx) for sr in batch]
    out = []
    for sr, pick in zip(batch, choice):
        if pick == REJECT:
            out.append(rejected(sr, _optimal_reject_reason(sr, ctx)))
            continue
        si = ctx.catalog.instances[pick]
        cand = evaluate(ctx.topo, si, sr.origin_poa, sr.demand)
        out.append(commit_candidate(sr, cand, ctx))
    return out


# -- strategy dispatch ---------------------------------------------------------

SINGLE_SELECTORS: dict[str, Callable[..., AssignmentResponse]] = {
    "proposed": select_proposed,
    "random": select_random,
    "ccam": select_ccam,
    "sdms": select_sdms,
}


def priority_order(batch: Sequence[ServiceRequest]) -> list[ServiceRequest]:
    """High-priority SRs first, FIFO within a class."""
    return sorted(batch, key=lambda sr: (0 if sr.priority == HIGH else 1))


def release_all(topo: Topology, resp: AssignmentResponse) -> None:
    for tok in resp.tokens:
        topo.release(tok)
    resp.tokens = []
