import itertools
import random

import pytest
from hypothesis import given, strategies as st

from sard.errors import CapacityExceeded, EmptyTopology, NoRoute, StaleToken
from sard.topology import (
    LINK_CAPACITY, LINK_COST, NODE_CAPACITY, NODE_COST, Topology, generate_topology, node_kinds,
)

from conftest import make_topology


def brute_force_path(topo, src, dst, metric="cost"):
    """Minimum (total, link sequence) over every simple path, by DFS enumeration."""
    best = None

    def walk(cur, seen, links, total):
        nonlocal best
        if cur == dst:
            cand = (total, tuple(links))
            if best is None or cand < best:
                best = cand
            return
        for lid in topo.adjacency[cur]:
            link = topo.link(lid)
            nxt = link.other(cur)
            if nxt in seen:
                continue
            w = link.cost if metric == "cost" else link.base_latency
            walk(nxt, seen | {nxt}, links + [lid], total + w)

    walk(src, {src}, [], 0.0)
    return best


def test_generated_costs_within_ranges():
    topo = generate_topology(42, 10)
    assert all(LINK_COST[0] <= l.cost <= LINK_COST[1] for l in topo.links)
    assert all(NODE_COST[0] <= n.cost <= NODE_COST[1] for n in topo.nodes)
    assert all(LINK_CAPACITY[0] <= l.capacity <= LINK_CAPACITY[1] for l in topo.links)
    assert all(NODE_CAPACITY[0] <= n.capacity <= NODE_CAPACITY[1] for n in topo.nodes)


def test_single_node():
    topo = generate_topology(7, 1)
    assert len(topo.nodes) == 1 and topo.links == []
    assert topo.is_connected()


def test_generation_deterministic():
    assert generate_topology(42, 10).to_json() == generate_topology(42, 10).to_json()
    assert generate_topology(42, 10).to_json() != generate_topology(43, 10).to_json()


def test_empty_topology_rejected():
    with pytest.raises(EmptyTopology):
        generate_topology(0, 0)


def test_node_kinds_proportions():
    kinds = node_kinds(10)
    assert kinds[:4] == ["poa"] * 4
    assert kinds[-2:] == ["cloud"] * 2
    assert kinds[4:8] == ["edge"] * 4
    assert node_kinds(1) == ["poa"]


@given(st.integers(0, 10_000), st.integers(1, 100))
def test_generated_graph_connected_with_mean_degree(seed, n):
    topo = generate_topology(seed, n)
    assert topo.is_connected()
    max_links = n * (n - 1) // 2
    assert len(topo.links) == min(max_links, -(-3 * n // 2))
    assert len({tuple(sorted(l.endpoints)) for l in topo.links}) == len(topo.links)
    assert all(l.endpoints[0] != l.endpoints[1] for l in topo.links)


def test_shortest_path_identity():
    topo = generate_topology(3, 6)
    assert topo.shortest_path(2, 2) == ([], 0.0)


def test_four_cycle_picks_cheap_side():
    # cycle 0-1-2-3-0 with costs 1, 1, 5, 5
    topo = make_topology([(0, 0), (1, 0), (1, 1), (0, 1)], ["edge"] * 4,
                         [(0, 1, 1), (1, 2, 1), (2, 3, 5), (3, 0, 5)])
    links, total = topo.shortest_path(0, 2)
    assert (links, total) == ([0, 1], 2.0)
    assert brute_force_path(topo, 0, 2) == (2.0, (0, 1))


def test_tie_break_lexicographic():
    # two equal-cost routes 0->3: via links (0, 2) and via links (1, 3)
    topo = make_topology([(0, 0), (1, 0), (0, 1), (1, 1)], ["edge"] * 4,
                         [(0, 1, 3), (0, 2, 3), (1, 3, 3), (2, 3, 3)])
    links, total = topo.shortest_path(0, 3)
    assert total == 6.0
    assert links == [0, 2]
    links_rev, _ = topo.shortest_path(3, 0)
    assert links_rev == [2, 0]


def test_no_route():
    topo = make_topology([(0, 0), (1, 0)], ["edge", "edge"], [])
    with pytest.raises(NoRoute):
        topo.shortest_path(0, 1)


def _random_small_graph(rng, n):
    edges = []
    for u, v in itertools.combinations(range(n), 2):
        if rng.random() < 0.45:
            edges.append((u, v, rng.randint(1, 6)))
    return make_topology([(rng.random(), rng.random()) for _ in range(n)], ["edge"] * n, edges)


@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.sampled_from(["cost", "latency"]))
def test_shortest_path_matches_enumeration(seed, n, metric):
    rng = random.Random(seed)
    topo = _random_small_graph(rng, n)
    for src, dst in itertools.permutations(range(n), 2):
        oracle = brute_force_path(topo, src, dst, metric)
        if oracle is None:
            with pytest.raises(NoRoute):
                topo.shortest_path(src, dst, metric)
            continue
        links, total = topo.shortest_path(src, dst, metric)
        assert (total, tuple(links)) == oracle


def test_reserve_exact_fill(line3):
    tok = line3.reserve([0], host=1, si=None, rate=40)
    assert line3.link(0).used == 40
    assert line3.node(1).used == 40
    assert tok.rate == 40


def test_reserve_atomic_rollback():
    topo = make_topology([(0, 0), (1, 0), (2, 0)], ["poa", "edge", "edge"],
                         [(0, 1, 1, 40), (1, 2, 1, 10)])
    topo.link(1).used = 5
    with pytest.raises(CapacityExceeded):
        topo.reserve([0, 1], host=2, si=None, rate=6)
    assert topo.link(0).used == 0 and topo.link(1).used == 5 and topo.node(2).used == 0


def test_reserve_then_release_restores(line3):
    before = line3.to_json()
    tok = line3.reserve([0, 1], 2, None, 3.5)
    line3.release(tok)
    assert line3.to_json() == before


def test_release_twice_stale(line3):
    tok = line3.reserve([0], 1, None, 1)
    line3.release(tok)
    with pytest.raises(StaleToken):
        line3.release(tok)


def test_release_zero_length_path(line3):
    class Si:
        id, capacity, used = 9, 10.0, 0.0

    si = Si()
    tok = line3.reserve([], 1, si, 4)
    assert si.used == 4 and line3.node(1).used == 4
    line3.release(tok)
    assert si.used == 0 and line3.node(1).used == 0
    assert all(l.used == 0 for l in line3.links)


@given(st.lists(st.tuples(st.booleans(), st.integers(0, 9), st.integers(1, 15)), max_size=60))
def test_usage_conservation_under_random_ops(ops):
    topo = generate_topology(5, 8)
    rng = random.Random(len(ops))
    live = []
    for is_reserve, pick, rate in ops:
        if is_reserve or not live:
            src, dst = rng.sample(range(8), 2)
            path, _ = topo.shortest_path(src, dst)
            try:
                live.append(topo.reserve(path, dst, None, rate))
            except CapacityExceeded:
                pass
        else:
            topo.release(live.pop(pick % len(live)))
        assert topo.audit_usage() == []
        assert all(l.used <= l.capacity + 1e-9 for l in topo.links)
        assert all(n.used <= n.capacity + 1e-9 for n in topo.nodes)


def test_round_trip_dict():
    topo = generate_topology(11, 9)
    again = Topology.from_dict(topo.to_dict())
    assert again.to_json() == topo.to_json()
