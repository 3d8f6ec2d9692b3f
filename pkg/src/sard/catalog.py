"""Service providers, instance registry (AdRe handling) and maintenance monitoring."""
from __future__ import annotations

import dataclasses
import json
import random
from dataclasses import dataclass, field
from typing import Any, Iterable

from .errors import ForeignInstance, NoHosts, UnknownInstance, UnknownProvider
from .ledger import InstanceSnapshot, SiRecord
from .topology import Topology

SI_COST = (25, 40)
SI_CAPACITY = (20, 50)
SIS_PER_PROVIDER = (3, 5)
N_PROVIDERS = 20

B_MIN = 10.0
DRAIN_PER_GBPS = 0.1

REGISTER, MODIFY, DEREGISTER = "register", "modify", "deregister"


@dataclass
class ServiceInstance:
    id: int
    provider: str
    service_type: str
    host: int
    cost: int
    capacity: float
    used: float = 0.0
    trust: float = 1.0
    registered: bool = False
    available: bool = True

    def snapshot(self) -> InstanceSnapshot:
        return InstanceSnapshot(
            id=self.id, provider=self.provider, service_type=self.service_type, host=self.host,
            cost=self.cost, capacity=self.capacity, trust=self.trust, registered=self.registered,
        )


@dataclass(frozen=True)
class CompositeService:
    id: str
    parts: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.parts:
            raise ValueError("composite service needs at least one part")
        if any(a == b for a, b in zip(self.parts, self.parts[1:])):
            raise ValueError("composite parts must not repeat adjacently")


@dataclass
class AdvertisingRequest:
    provider: str
    action: str
    descriptor: dict[str, Any] | int
    poa: int = 0
    timestamp: int = 0
    intents: list[dict] = field(default_factory=list)

    def instance_id(self) -> int:
        if isinstance(self.descriptor, int):
            return self.descriptor
        return int(self.descriptor["id"])


@dataclass(frozen=True)
class Ack:
    ok: bool
    instance: int | None
    action: str
    reason: str = ""


@dataclass
class Catalog:
    instances: dict[int, ServiceInstance] = field(default_factory=dict)
    providers: list[str] = field(default_factory=list)
    composites: dict[str, CompositeService] = field(default_factory=dict)
    monitored: set[int] = field(default_factory=set)

    def registered(self, service_type: str | None = None) -> list[ServiceInstance]:
        out = [si for _, si in sorted(self.instances.items()) if si.registered]
        if service_type is not None:
            out = [si for si in out if si.service_type == service_type]
        return out

    def get(self, si_id: int) -> ServiceInstance:
        try:
            return self.instances[si_id]
        except KeyError:
            raise UnknownInstance(f"instance {si_id}") from None

    def descriptors(self) -> list[dict]:
        return [
            {k: v for k, v in dataclasses.asdict(si).items() if k not in ("used", "registered", "available")}
            for _, si in sorted(self.instances.items())
        ]

    def to_dict(self) -> dict:
        return {
            "providers": list(self.providers),
            "instances": [dataclasses.asdict(si) for _, si in sorted(self.instances.items())],
            "composites": [
                {"id": c.id, "parts": list(c.parts)} for _, c in sorted(self.composites.items())
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "Catalog":
        cat = cls(providers=list(doc["providers"]))
        for d in doc["instances"]:
            si = ServiceInstance(**d)
            cat.instances[si.id] = si
            if si.registered:
                cat.monitored.add(si.id)
        for c in doc.get("composites", []):
            cat.composites[c["id"]] = CompositeService(c["id"], tuple(c["parts"]))
        return cat


def generate_catalog(
    seed: int,
    topo: Topology,
    n_providers: int = N_PROVIDERS,
    service_types: Iterable[str] = ("generic",),
) -> Catalog:
    """Providers with 3-5 unregistered instances each, hosted on edge/cloud nodes."""
    hosts = [n.id for n in topo.hosts()]
    if not hosts:
        raise NoHosts("topology has no edge or cloud nodes")
    types = list(service_types)
    rng = random.Random(seed)
    cat = Catalog()
    next_id = 0
    for p in range(n_providers):
        provider = f"p{p:02d}"
        cat.providers.append(provider)
        for _ in range(rng.randint(*SIS_PER_PROVIDER)):
            cat.instances[next_id] = ServiceInstance(
                id=next_id,
                provider=provider,
                service_type=rng.choice(types),
                host=rng.choice(hosts),
                cost=rng.randint(*SI_COST),
                capacity=float(rng.randint(*SI_CAPACITY)),
            )
            next_id += 1
    return cat


_MODIFIABLE = ("service_type", "host", "cost", "capacity")


def apply_adre(catalog: Catalog, adre: AdvertisingRequest, topo: Topology | None = None) -> tuple[SiRecord, Ack]:
    """Apply a register/modify/deregister request; returns the zone-chain record and the ack."""
    if adre.provider not in catalog.providers:
        raise UnknownProvider(adre.provider)
    si_id = adre.instance_id()
    if adre.action == REGISTER and si_id not in catalog.instances and isinstance(adre.descriptor, dict):
        # a provider may advertise a brand-new instance
        d = adre.descriptor
        catalog.instances[si_id] = ServiceInstance(
            id=si_id, provider=adre.provider, service_type=d["service_type"], host=int(d["host"]),
            cost=int(d["cost"]), capacity=float(d["capacity"]), trust=float(d.get("trust", 1.0)),
        )
    si = catalog.get(si_id)
    if si.provider != adre.provider:
        raise ForeignInstance(f"instance {si_id} belongs to {si.provider}")

    if adre.action == REGISTER:
        if topo is not None:
            topo.node(si.host)
        si.registered = True
        catalog.monitored.add(si.id)
    elif adre.action == MODIFY:
        if not isinstance(adre.descriptor, dict):
            raise ValueError("modify needs a descriptor")
        for key in _MODIFIABLE:
            if key in adre.descriptor:
                val = adre.descriptor[key]
                setattr(si, key, float(val) if key == "capacity" else val)
        if topo is not None:
            topo.node(si.host)
    elif adre.action == DEREGISTER:
        si.registered = False
        catalog.monitored.discard(si.id)
    else:
        raise ValueError(f"unknown AdRe action {adre.action!r}")
    return SiRecord(si.snapshot(), adre.action, adre.timestamp), Ack(True, si.id, adre.action)


def battery_step(battery: float, served_gbps: float, harvest: float) -> float:
    return min(100.0, max(0.0, battery - DRAIN_PER_GBPS * served_gbps + harvest))


def monitor_step(catalog: Catalog, topo: Topology, b_min: float = B_MIN) -> list[int]:
    """Advance host batteries one step and refresh availability; returns flipped instance ids."""
    for node in topo.hosts():
        node.battery = battery_step(node.battery, node.used, node.harvest_rate)
    flipped = []
    for si_id in sorted(catalog.monitored):
        si = catalog.instances[si_id]
        now = topo.node(si.host).battery > b_min and si.used < si.capacity
        if now != si.available:
            flipped.append(si_id)
        si.available = now
    return flipped
