import pytest
from hypothesis import given, strategies as st

from sard.catalog import (
    B_MIN, DEREGISTER, MODIFY, REGISTER, SI_CAPACITY, SI_COST, AdvertisingRequest, Catalog, CompositeService,
    apply_adre, battery_step, generate_catalog, monitor_step,
)
from sard.errors import ForeignInstance, NoHosts, UnknownInstance, UnknownProvider
from sard.topology import generate_topology

from conftest import make_catalog, make_topology


@pytest.fixture
def world():
    topo = generate_topology(1, 10)
    return topo, generate_catalog(1, topo)


def test_twenty_providers_sixty_to_hundred_instances(world):
    topo, cat = world
    assert len(cat.providers) == 20
    assert 60 <= len(cat.instances) <= 100
    per = {}
    for si in cat.instances.values():
        per[si.provider] = per.get(si.provider, 0) + 1
        assert SI_COST[0] <= si.cost <= SI_COST[1]
        assert SI_CAPACITY[0] <= si.capacity <= SI_CAPACITY[1]
        assert topo.node(si.host).kind != "poa"
        assert not si.registered
    assert all(3 <= c <= 5 for c in per.values())


def test_single_provider():
    topo = generate_topology(1, 10)
    assert 3 <= len(generate_catalog(1, topo, n_providers=1).instances) <= 5


def test_catalog_deterministic():
    topo = generate_topology(1, 10)
    assert generate_catalog(1, topo).to_json() == generate_catalog(1, topo).to_json()


def test_no_hosts():
    topo = generate_topology(0, 1)
    with pytest.raises(NoHosts):
        generate_catalog(0, topo)


def test_register_fresh_instance(world):
    topo, cat = world
    rec, ack = apply_adre(cat, AdvertisingRequest("p00", REGISTER, 0, timestamp=4), topo)
    assert ack.ok and cat.instances[0].registered
    assert rec.action == REGISTER and rec.instance.id == 0 and rec.step == 4
    assert 0 in cat.monitored


def test_register_brand_new_descriptor(world):
    topo, cat = world
    host = topo.hosts()[0].id
    d = {"id": 999, "service_type": "x", "host": host, "cost": 30, "capacity": 25}
    _, ack = apply_adre(cat, AdvertisingRequest("p03", REGISTER, d), topo)
    assert ack.ok and cat.instances[999].registered and cat.instances[999].capacity == 25.0


def test_register_is_idempotent(world):
    topo, cat = world
    apply_adre(cat, AdvertisingRequest("p00", REGISTER, 0), topo)
    once = cat.to_json()
    apply_adre(cat, AdvertisingRequest("p00", REGISTER, 0), topo)
    assert cat.to_json() == once


def test_deregister_stops_monitoring(world):
    topo, cat = world
    apply_adre(cat, AdvertisingRequest("p00", REGISTER, 0), topo)
    apply_adre(cat, AdvertisingRequest("p00", DEREGISTER, 0), topo)
    assert not cat.instances[0].registered and 0 not in cat.monitored
    assert all(si.id != 0 for si in cat.registered())


def test_modify_preserves_usage_and_trust(world):
    topo, cat = world
    apply_adre(cat, AdvertisingRequest("p00", REGISTER, 0), topo)
    si = cat.instances[0]
    si.used, si.trust = 3.0, 0.7
    apply_adre(cat, AdvertisingRequest("p00", MODIFY, {"id": 0, "cost": 25}), topo)
    assert (si.cost, si.used, si.trust) == (25, 3.0, 0.7)


@given(st.integers(0, 59), st.sampled_from([REGISTER, MODIFY, DEREGISTER]))
def test_adre_touches_only_addressed_instance(target, action):
    topo = generate_topology(1, 10)
    cat = generate_catalog(1, topo)
    before = {k: v.snapshot() for k, v in cat.instances.items()}
    si = cat.instances[target]
    desc = {"id": target, "cost": 26} if action == MODIFY else target
    apply_adre(cat, AdvertisingRequest(si.provider, action, desc), topo)
    for k, v in cat.instances.items():
        if k != target:
            assert v.snapshot() == before[k]


def test_adre_errors(world):
    topo, cat = world
    with pytest.raises(UnknownProvider):
        apply_adre(cat, AdvertisingRequest("nobody", REGISTER, 0))
    with pytest.raises(UnknownInstance):
        apply_adre(cat, AdvertisingRequest("p00", REGISTER, 12345))
    owner = cat.instances[0].provider
    other = next(p for p in cat.providers if p != owner)
    with pytest.raises(ForeignInstance):
        apply_adre(cat, AdvertisingRequest(other, REGISTER, 0))


def _one_instance_world(battery, used=0.0, capacity=100.0):
    topo = make_topology([(0, 0), (1, 0)], ["poa", "edge"], [(0, 1, 10)], node_cap=capacity)
    topo.node(1).battery = battery
    topo.node(1).used = used
    cat = make_catalog([dict(id=0, provider="p", service_type="t", host=1, cost=30, capacity=50.0)])
    return topo, cat


def test_low_battery_unavailable():
    topo, cat = _one_instance_world(5.0)
    topo.node(1).harvest_rate = 0.0
    monitor_step(cat, topo, B_MIN)
    assert not cat.instances[0].available


def test_idle_full_battery_available_forever():
    topo, cat = _one_instance_world(100.0)
    for _ in range(500):
        monitor_step(cat, topo)
        assert cat.instances[0].available and topo.node(1).battery == 100.0


def test_drain_trajectory_matches_closed_form():
    # 50 Gbps served: net -4.5 per step from 95
    topo, cat = _one_instance_world(95.0, used=50.0)
    for k in range(1, 25):
        monitor_step(cat, topo)
        expected = max(0.0, 95.0 - 4.5 * k)
        assert topo.node(1).battery == pytest.approx(expected, abs=1e-9)
        assert cat.instances[0].available == (expected > B_MIN)
    # available for the first 18 steps, unavailable from step 19 on
    topo, cat = _one_instance_world(95.0, used=50.0)
    history = []
    for _ in range(20):
        monitor_step(cat, topo)
        history.append(cat.instances[0].available)
    assert all(history[:18]) and not any(history[18:])


@given(st.floats(0, 100), st.floats(0, 200), st.floats(0, 5))
def test_battery_step_clamped(b, load, harvest):
    assert 0.0 <= battery_step(b, load, harvest) <= 100.0


def test_full_instance_unavailable():
    topo, cat = _one_instance_world(100.0)
    cat.instances[0].used = 50.0
    assert monitor_step(cat, topo) == [0]
    assert not cat.instances[0].available


def test_composite_validation():
    with pytest.raises(ValueError):
        CompositeService("c", ())
    assert CompositeService("c", ("a", "b")).parts == ("a", "b")


def test_catalog_round_trip(world):
    _, cat = world
    assert Catalog.from_dict(cat.to_dict()).to_json() == cat.to_json()
