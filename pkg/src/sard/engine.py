"""Step-driven simulation loop executing the SR and AdRe workflows."""
from __future__ import annotations

import dataclasses
import json
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import ledger as lg
from .catalog import (
    REGISTER, AdvertisingRequest, Ack, Catalog, CompositeService, apply_adre, generate_catalog, monitor_step,
)
from .errors import ConfigInvalid, SardError, UnknownFeature, UnknownIntent
from .ledger import Ledger, SrRecord, ZoneSummary
from .metrics import RunMetrics, StepMetrics
from .mobility import MobilityTrace, User, attach_poa, gen_waypoint_trace, ingest_trace
from .prediction import (
    PredictorState, forecast_poa_load, predict_availability, predict_next_poa, predict_position,
)
from .selection import (
    CACHE_HIT_MS, SINGLE_SELECTORS, STRATEGIES, AssignmentResponse, SelectionContext, ServiceRequest,
    select_composed, select_optimal, select_proposed, update_trust,
)
from .semantics import (
    HIGH, MODALITIES, NORMAL, CacheEntry, KbEntry, KnowledgeBase, PoaCache, RequestPayload, decode, encode,
    entries_from_json, kb_entry, kb_update, load_kb,
)
from .topology import Topology, generate_topology
from .zoning import ZonePlan, choose_k, compute_zones, should_rezone, zone_loads

UNKNOWN_INTENT = "UnknownIntent"


@dataclass
class SimConfig:
    seed: int = 0
    n_nodes: int = 10
    n_users: int = 10
    n_providers: int = 20
    steps: int = 40
    strategy: str = "proposed"
    aging_window: int = 10
    rezone_interval: int = 20
    request_rate_range: tuple[int, int] = (1, 5)
    sr_per_user_per_step: float = 0.7
    request_multiplier: float = 1.0
    area: tuple[float, float] = (1000.0, 1000.0)
    speed_range: tuple[float, float] = (5.0, 30.0)
    hold_steps: int = 5
    cache_capacity: int = 64
    max_batch: int = lg.MAX_BATCH
    allow_raw_fallback: bool = False
    composites: list[dict] = field(default_factory=list)
    composite_prob: float = 0.0
    kb_path: str | None = None
    trace_path: str | None = None
    predictor: str = "baseline"
    debug: bool = False

    def validate(self) -> "SimConfig":
        for name in ("n_nodes", "n_providers", "hold_steps", "cache_capacity", "max_batch"):
            if getattr(self, name) < 1:
                raise ConfigInvalid(name, "must be >= 1")
        if self.n_users < 0:
            raise ConfigInvalid("n_users", "must be >= 0")
        if self.steps < 0:
            raise ConfigInvalid("steps", "must be >= 0")
        if self.aging_window < 0:
            raise ConfigInvalid("aging_window", "must be >= 0")
        if self.rezone_interval < 1:
            raise ConfigInvalid("rezone_interval", "must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ConfigInvalid("strategy", f"one of {', '.join(STRATEGIES)}")
        lo, hi = self.request_rate_range
        if not 0 < lo <= hi:
            raise ConfigInvalid("request_rate_range", "need 0 < lo <= hi")
        if not 0 <= self.sr_per_user_per_step <= 1:
            raise ConfigInvalid("sr_per_user_per_step", "probability in [0, 1]")
        if self.request_multiplier < 0:
            raise ConfigInvalid("request_multiplier", "must be >= 0")
        if not 0 <= self.composite_prob <= 1:
            raise ConfigInvalid("composite_prob", "probability in [0, 1]")
        if not (self.area[0] > 0 and self.area[1] > 0):
            raise ConfigInvalid("area", "positive extent required")
        if self.predictor != "baseline":
            raise ConfigInvalid("predictor", "only 'baseline' is available")
        return self

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "SimConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigInvalid(unknown[0], "unknown field")
        kw = dict(doc)
        for key in ("request_rate_range", "area", "speed_range"):
            if key in kw:
                kw[key] = tuple(kw[key])
        try:
            return cls(**kw).validate()
        except TypeError as exc:
            raise ConfigInvalid("?", str(exc)) from None

    @classmethod
    def from_json(cls, path: str | Path) -> "SimConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid("config", str(exc)) from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def stream(seed: int, name: str) -> random.Random:
    """Independent RNG per concern so strategy choices never perturb demand."""
    return random.Random(f"{seed}:{name}")


@dataclass
class Hold:
    expires: int
    tokens: list


@dataclass
class SimState:
    config: SimConfig
    topology: Topology
    catalog: Catalog
    kb: KnowledgeBase
    users: dict[str, User]
    trace: MobilityTrace
    plan: ZonePlan
    zone_ledgers: dict[int, Ledger]
    main: Ledger
    predictor: PredictorState
    caches: dict[int, PoaCache]
    ctx: SelectionContext
    warm_queue: dict[int, list] = field(default_factory=dict)
    holds: list[Hold] = field(default_factory=list)
    step: int = 0
    next_sr: int = 0
    rezone_count: int = 0
    step_metrics: list[StepMetrics] = field(default_factory=list)
    sr_log: list[tuple] = field(default_factory=list)
    initial_blocks: int = 0
    rng_requests: random.Random = field(default_factory=random.Random)
    rng_zoning: random.Random = field(default_factory=random.Random)
    _positions: dict[int, dict[str, tuple[float, float]]] = field(default_factory=dict)
    _current: StepMetrics | None = None
    _outcomes: list[tuple[int, str]] = field(default_factory=list)
    plan_history: list[ZonePlan] = field(default_factory=list)

    def zone_of_node(self, node: int) -> int:
        return self._zone_index[node]

    def refresh_zone_index(self) -> None:
        self._zone_index = self.plan.zone_of()

    def all_ledgers(self) -> list[Ledger]:
        return [self.zone_ledgers[z] for z in sorted(self.zone_ledgers)] + [self.main]

    def metrics_now(self) -> StepMetrics:
        if self._current is None:
            self._current = StepMetrics(self.step)
        return self._current


# -- construction ----------------------------------------------------------

def build_state(config: SimConfig) -> SimState:
    config.validate()
    seed = config.seed
    topo = generate_topology(stream(seed, "topology").randrange(2**32), config.n_nodes, config.area)
    kb = load_kb(config.kb_path)
    service_types = kb.service_types()
    try:
        catalog = generate_catalog(stream(seed, "catalog").randrange(2**32), topo, config.n_providers, service_types)
    except SardError as exc:
        raise ConfigInvalid("n_nodes", str(exc)) from None
    for c in config.composites:
        catalog.composites[c["id"]] = CompositeService(c["id"], tuple(c["parts"]))
    if catalog.composites:
        kb, _ = kb_update(kb, composite_intents(kb, catalog.composites.values()))

    if config.trace_path:
        trace = ingest_trace(config.trace_path)
    elif config.n_users == 0:
        trace = MobilityTrace(())
    else:
        trace = gen_waypoint_trace(stream(seed, "mobility").randrange(2**32), config.n_users,
                                   max(1, config.steps), config.area, config.speed_range)
    positions = trace.by_step()
    first = positions[min(positions)] if positions else {}
    users = {}
    predictor = PredictorState()
    for uid in trace.users():
        u = User(uid, first.get(uid, (0.0, 0.0)))
        attach_poa(u, topo)
        users[uid] = u
        predictor.observe_position(uid, u.position)

    rng_zoning = stream(seed, "zoning")
    plan = compute_zones(topo, None, choose_k(len(topo.nodes)), rng_zoning.randrange(2**32), epoch=0)
    ledgers = {z.id: Ledger(z.chain, max_batch=config.max_batch) for z in plan.zones}
    main = Ledger("main", max_batch=config.max_batch)
    ctx = SelectionContext(topo, catalog, predictor, rng=stream(seed, "strategy"))
    state = SimState(
        config=config, topology=topo, catalog=catalog, kb=kb, users=users, trace=trace, plan=plan,
        zone_ledgers=ledgers, main=main, predictor=predictor,
        caches={p.id: PoaCache(config.cache_capacity) for p in topo.poas()},
        ctx=ctx, rng_requests=stream(seed, "requests"), rng_zoning=rng_zoning, _positions=positions,
        plan_history=[plan],
    )
    state.refresh_zone_index()

    main.append(lg.KbStat(kb.generation, len(kb), 0))
    for si_id in sorted(catalog.instances):
        si = catalog.instances[si_id]
        handle_adre(state, AdvertisingRequest(si.provider, REGISTER, si_id, poa=0, timestamp=0))
    predictor.observe_availability(catalog)
    lg.summarize_to_main(main, zone_summaries(state, 0))
    state.initial_blocks = sum(len(l.commit(0)) for l in state.all_ledgers())
    return state


def composite_intents(kb: KnowledgeBase, composites) -> list[KbEntry]:
    """One KB entry per modality for each composite; latency budget is the sum over parts."""
    out = []
    for comp in sorted(composites, key=lambda c: c.id):
        feats = []
        for part in comp.parts:
            entries = kb.entries_for(part)
            if not entries:
                raise ConfigInvalid("composites", f"part {part!r} of {comp.id!r} has no KB intent")
            feats.append(entries[0].feature)
        rate = max(f.rate for f in feats)
        budget = sum(f.max_latency for f in feats)
        prio = HIGH if any(f.priority == HIGH for f in feats) else NORMAL
        for modality in MODALITIES:
            if modality == "sensor":
                tokens = [f"composite={comp.id}", *(f"part{i}={p}" for i, p in enumerate(comp.parts))]
            else:
                tokens = ["composite", modality, comp.id, *comp.parts]
            out.append(kb_entry(modality, tokens, comp.id, rate, budget, prio))
    return out


def zone_summaries(state: SimState, step: int) -> list[ZoneSummary]:
    out = []
    for z in state.plan.zones:
        chain = state.zone_ledgers[z.id]
        sr_count = sum(1 for r in chain.records() if isinstance(r, SrRecord))
        si_count = sum(1 for si in state.catalog.registered() if si.host in z.members)
        out.append(ZoneSummary(state.plan.epoch, z.id, sr_count, si_count, len(state.kb), step))
    return out


# -- workflows ---------------------------------------------------------------

def handle_adre(state: SimState, adre: AdvertisingRequest) -> Ack:
    try:
        record, ack = apply_adre(state.catalog, adre, state.topology)
    except (SardError, KeyError, ValueError) as exc:
        return Ack(False, None, adre.action, f"{type(exc).__name__}: {exc}")
    state.zone_ledgers[state.zone_of_node(record.instance.host)].append(record)
    if adre.intents:
        state.kb, stat = kb_update(state.kb, entries_from_json(adre.intents), adre.timestamp)
        state.main.append(stat)
    return ack


def _selector(state: SimState):
    name = state.config.strategy
    return select_proposed if name == "optimal" else SINGLE_SELECTORS[name]


def _select_one(state: SimState, sr: ServiceRequest, zone: frozenset[int] | None) -> AssignmentResponse:
    parts = state.catalog.composites.get(sr.feature.service_type)
    strategy = state.config.strategy
    if parts is not None:
        return select_composed(sr, parts.parts, state.ctx, _selector(state), zone=zone)
    if strategy == "optimal":
        return select_optimal([sr], state.ctx)[0]
    if strategy == "proposed":
        return select_proposed(sr, state.ctx, zone=zone)
    return SINGLE_SELECTORS[strategy](sr, state.ctx)


@dataclass
class _Pending:
    user: User
    sr: ServiceRequest
    zone: int
    next_poa: int


def handle_batch(state: SimState, items: list[tuple[User, RequestPayload]]) -> list[AssignmentResponse]:
    """Encode, cache-check, select and record a batch of SRs arriving in one step.

    Items are processed in priority order; the returned list follows the input order.
    """
    cfg = state.config
    m = state.metrics_now()
    results: dict[int, AssignmentResponse] = {}
    misses: list[tuple[int, _Pending]] = []

    decoded = []
    for idx, (user, payload) in enumerate(items):
        m.requests += 1
        try:
            enc = encode(state.kb, payload, cfg.allow_raw_fallback)
        except UnknownIntent:
            state.next_sr += 1
            results[idx] = AssignmentResponse(state.next_sr - 1, accepted=False, reject_reason=UNKNOWN_INTENT)
            m.rejected[UNKNOWN_INTENT] += 1
            continue
        m.bytes_saved += enc.bytes_saved
        decoded.append((idx, user, payload, enc))

    order = sorted(decoded, key=lambda t: (0 if t[3].feature.priority == "high" else 1, t[0]))
    for idx, user, payload, enc in order:
        poa = user.attached_poa
        sr_id = state.next_sr
        state.next_sr += 1
        hit = state.caches[poa].lookup(enc.feature.feature_id, state.step, cfg.aging_window)
        if hit is not None:
            resp = dataclasses.replace(hit, sr_id=sr_id, cost=0.0, latency=CACHE_HIT_MS, cached=True,
                                       accepted=True, tokens=[], outcomes=[])
            results[idx] = resp
            m.cache_hits += 1
            rec = SrRecord(sr_id, user.id, enc.feature.feature_id, resp.chosen, 0.0, state.step, poa)
            state.zone_ledgers[state.zone_of_node(poa)].append(rec)
            state.main.append(rec)
            continue
        next_poa = predict_next_poa(state.predictor, user.id, state.topology)
        sr = ServiceRequest(sr_id, user.id, enc.feature, poa, state.step, enc.feature.priority,
                            rate=payload.rate, preferences=user.preferences)
        misses.append((idx, _Pending(user, sr, state.zone_of_node(next_poa), next_poa)))

    if cfg.strategy == "optimal":
        atomic = [(i, p) for i, p in misses if p.sr.feature.service_type not in state.catalog.composites]
        for (i, _), resp in zip(atomic, select_optimal([p.sr for _, p in atomic], state.ctx)):
            results[i] = resp
        for i, p in misses:
            if i not in results:
                results[i] = _select_one(state, p.sr, state.plan.zone(p.zone).members)
    else:
        for i, p in misses:
            results[i] = _select_one(state, p.sr, state.plan.zone(p.zone).members)

    for i, p in misses:
        resp = results[i]
        _finish(state, p, resp)
    return [results[i] for i in range(len(items))]


def handle_sr(state: SimState, user: User, payload: RequestPayload) -> AssignmentResponse:
    return handle_batch(state, [(user, payload)])[0]


def _finish(state: SimState, p: _Pending, resp: AssignmentResponse) -> None:
    cfg = state.config
    m = state.metrics_now()
    sr, user = p.sr, p.user
    if not resp.accepted:
        m.rejected[resp.reject_reason or "NoCandidate"] += 1
        state._outcomes.extend(resp.outcomes)
        return
    rec = SrRecord(sr.id, user.id, sr.feature.feature_id, resp.chosen, resp.cost, state.step, p.next_poa)
    state.zone_ledgers[p.zone].append(rec)
    state.main.append(rec)
    resp.availability_pred = all(
        predict_availability(state.predictor, state.catalog, state.topology, si_id, state.ctx.horizon)
        for si_id in resp.chosen if state.catalog.instances[si_id].registered
    )
    resp.next_position_pred = predict_position(state.predictor, user.id, state.ctx.horizon)
    state.holds.append(Hold(state.step + cfg.hold_steps, list(resp.tokens)))
    state._outcomes.extend(resp.outcomes)
    try:
        decode(state.kb, sr.feature.feature_id)
    except UnknownFeature:
        pass  # raw-fallback features are not in the KB; serve but do not cache
    else:
        state.caches[user.attached_poa].store(CacheEntry(sr.feature.feature_id, _snapshot(resp), state.step))
    if p.next_poa != user.attached_poa:
        state.warm_queue.setdefault(p.next_poa, []).append((sr, user))


def _snapshot(resp: AssignmentResponse) -> AssignmentResponse:
    return dataclasses.replace(resp, tokens=[], outcomes=[])


# -- step phases ---------------------------------------------------------------

def _advance_mobility(state: SimState) -> None:
    row = state._positions.get(state.step)
    if row is None:
        return
    for uid in sorted(state.users):
        if uid in row:
            u = state.users[uid]
            u.move_to(row[uid])
            state.predictor.observe_position(uid, u.position)
            attach_poa(u, state.topology)


def _drain_warm_queues(state: SimState) -> None:
    cfg = state.config
    m = state.metrics_now()
    queues, state.warm_queue = state.warm_queue, {}
    warm_hold = max(1, cfg.hold_steps // 2)
    for poa in sorted(queues):
        cache = state.caches[poa]
        for sr, user in queues[poa]:
            if cache.lookup(sr.feature.feature_id, state.step, cfg.aging_window) is not None:
                continue
            warm = dataclasses.replace(sr, origin_poa=poa, step=state.step)
            resp = _select_one(state, warm, state.plan.zone(state.zone_of_node(poa)).members)
            if not resp.accepted:
                continue
            m.warm_cost += resp.cost
            state.holds.append(Hold(state.step + warm_hold, list(resp.tokens)))
            cache.store(CacheEntry(sr.feature.feature_id, _snapshot(resp), state.step))


def _generate_requests(state: SimState) -> list[tuple[User, RequestPayload]]:
    cfg = state.config
    rng = state.rng_requests
    expected = cfg.sr_per_user_per_step * cfg.request_multiplier
    base, frac = int(math.floor(expected)), expected - math.floor(expected)
    composites = sorted(state.catalog.composites)
    types = [t for t in state.kb.service_types() if t not in state.catalog.composites]
    items = []
    for uid in sorted(state.users):
        count = base + (1 if rng.random() < frac else 0)
        for _ in range(count):
            if composites and rng.random() < cfg.composite_prob:
                stype = rng.choice(composites)
            else:
                stype = rng.choice(types)
            modality = rng.choice(MODALITIES)
            rate = rng.randint(*cfg.request_rate_range)
            entries = state.kb.entries_for(stype, modality) or state.kb.entries_for(stype)
            if not entries:
                continue
            tokens = list(entries[0].tokens)
            rng.shuffle(tokens)
            tokens = [t.upper() if rng.random() < 0.5 else t for t in tokens]
            payload = RequestPayload(entries[0].modality, tuple(tokens), rate=float(rate), service_type=stype)
            items.append((state.users[uid], payload))
            state.sr_log.append((state.step, uid, stype, entries[0].modality, rate))
    return items


def _apply_trust(state: SimState) -> None:
    for si_id, outcome in state._outcomes:
        si = state.catalog.instances[si_id]
        rec = update_trust(state.catalog, si_id, outcome, state.step)
        state.zone_ledgers[state.zone_of_node(si.host)].append(rec)
    state._outcomes = []


def _release_expired(state: SimState) -> None:
    keep = []
    for hold in state.holds:
        if state.step + 1 >= hold.expires:
            for tok in hold.tokens:
                state.topology.release(tok)
        else:
            keep.append(hold)
    state.holds = keep


def _predicted_node_load(state: SimState) -> dict[int, float]:
    lo, hi = state.config.request_rate_range
    load = forecast_poa_load(state.predictor, [p.id for p in state.topology.poas()], (lo + hi) / 2)
    for si in state.catalog.registered():
        load[si.host] = load.get(si.host, 0.0) + si.used
    return load


def realize_plan(state: SimState, new_plan: ZonePlan, step: int) -> None:
    """Move zone-chain records onto the chains of ``new_plan`` via split and merge."""
    before = Counter()
    for led in state.zone_ledgers.values():
        before.update(led.multiset())
    old = state.plan
    old_sets = {z.members: z.id for z in old.zones}
    new_ledgers: dict[int, Ledger] = {}
    pieces: dict[int, list[Ledger]] = {z.id: [] for z in new_plan.zones}
    reused = set()
    for z in new_plan.zones:
        if z.members in old_sets:
            new_ledgers[z.id] = state.zone_ledgers[old_sets[z.members]]
            reused.add(old_sets[z.members])
    for oz in old.zones:
        if oz.id in reused:
            continue
        rest = state.zone_ledgers[oz.id]
        targets = [z for z in new_plan.zones if z.id not in new_ledgers and z.members & oz.members]
        assert targets, "old zone not covered by the new plan"
        for j, z in enumerate(targets):
            if j == len(targets) - 1:
                pieces[z.id].append(rest)
                break
            side = {n: ("A" if n in z.members else "B") for n in state.topology.adjacency}
            piece, rest = lg.split(rest, side, ids=(f"{z.chain}/from-{oz.id}", f"{rest.chain_id}/rest"),
                                   step=step)
            pieces[z.id].append(piece)
    for z in new_plan.zones:
        if z.id in new_ledgers:
            continue
        parts = pieces[z.id]
        if not parts:
            new_ledgers[z.id] = Ledger(z.chain, max_batch=state.config.max_batch)
            continue
        merged = parts[0]
        for nxt in parts[1:]:
            merged = lg.merge(merged, nxt, z.chain, step=step)
        new_ledgers[z.id] = merged
    state.zone_ledgers = new_ledgers
    state.plan = new_plan
    state.plan_history.append(new_plan)
    state.refresh_zone_index()
    if state.config.debug:
        after = Counter()
        for led in new_ledgers.values():
            after.update(led.multiset())
        assert after == before, "rezoning lost or duplicated records"


def _maybe_rezone(state: SimState) -> bool:
    load = _predicted_node_load(state)
    if not should_rezone(zone_loads(state.plan, load), state.step + 1, state.config.rezone_interval):
        return False
    new = compute_zones(state.topology, load, choose_k(len(state.topology.nodes), sum(load.values())),
                        state.rng_zoning.randrange(2**32), epoch=state.plan.epoch + 1)
    realize_plan(state, new, state.step)
    state.rezone_count += 1
    lg.summarize_to_main(state.main, zone_summaries(state, state.step))
    return True


def step(state: SimState) -> StepMetrics:
    """One simulation step, phases in fixed order."""
    state._current = StepMetrics(state.step)
    state._outcomes = []
    m = state._current
    _advance_mobility(state)
    monitor_step(state.catalog, state.topology)
    state.predictor.observe_availability(state.catalog)
    _drain_warm_queues(state)
    items = _generate_requests(state)
    responses = handle_batch(state, items)
    counts: Counter = Counter()
    for (user, payload), resp in zip(items, responses):
        if resp.accepted:
            m.accepted += 1
            m.cost += resp.cost
            m.latencies.append(resp.latency)
        if payload.service_type:
            counts[(user.attached_poa, payload.service_type)] += 1
    state.predictor.observe_requests(counts)
    _apply_trust(state)
    _release_expired(state)
    m.rezoned = _maybe_rezone(state)
    m.blocks_committed = sum(len(l.commit(state.step)) for l in state.all_ledgers())
    if state.config.debug:
        bad = state.topology.audit_usage()
        assert not bad, f"usage audit failed: {bad}"
        for led in state.all_ledgers():
            assert lg.verify(led) is None, f"ledger {led.chain_id} corrupt"
    state.step_metrics.append(m)
    state._current = None
    state.step += 1
    return m


def run_state(config: SimConfig) -> SimState:
    state = build_state(config)
    for _ in range(config.steps):
        step(state)
    return state


def finalize(state: SimState) -> RunMetrics:
    return RunMetrics.aggregate(state.step_metrics, state.rezone_count, state.ctx.budget_exceeded,
                                state.initial_blocks)


def run(config: SimConfig) -> RunMetrics:
    return finalize(run_state(config))


def dump_ledgers(state: SimState, directory: str | Path) -> list[Path]:
    out_dir = Path(directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    named = [(f"zone-{zid}", state.zone_ledgers[zid]) for zid in sorted(state.zone_ledgers)]
    named.append(("main", state.main))
    for name, led in named:
        p = out_dir / f"{name}.ndjson"
        p.write_text(lg.to_ndjson(led))
        b = out_dir / f"{name}.bin"
        b.write_bytes(lg.to_binary(led))
        written += [p, b]
    return written

