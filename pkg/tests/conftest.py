"""Shared builders for hand-made topologies and catalogs."""
from __future__ import annotations

import pytest
from hypothesis import settings

from sard.catalog import Catalog, ServiceInstance
from sard.topology import InfraNode, NetLink, Topology

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def make_topology(positions, kinds, edges, node_cost=50, node_cap=100.0, link_cap=40.0):
    """``edges`` is a list of (u, v, cost) or (u, v, cost, capacity)."""
    nodes = [
        InfraNode(id=i, position=tuple(p), kind=k, cost=node_cost, capacity=node_cap)
        for i, (p, k) in enumerate(zip(positions, kinds))
    ]
    links = []
    for i, e in enumerate(edges):
        u, v, c = e[:3]
        cap = e[3] if len(e) > 3 else link_cap
        links.append(NetLink(id=i, endpoints=(u, v), cost=c, capacity=float(cap)))
    return Topology(nodes=nodes, links=links)


def make_catalog(instances):
    """``instances``: iterable of ServiceInstance kwargs; all registered."""
    cat = Catalog()
    for kw in instances:
        si = ServiceInstance(registered=True, **kw)
        cat.instances[si.id] = si
        cat.monitored.add(si.id)
        if si.provider not in cat.providers:
            cat.providers.append(si.provider)
    return cat


@pytest.fixture
def line3():
    """PoA 0 -- edge 1 -- edge 2, link costs 10 and 10."""
    return make_topology(
        [(0, 0), (10, 0), (20, 0)], ["poa", "edge", "edge"], [(0, 1, 10), (1, 2, 10)]
    )
