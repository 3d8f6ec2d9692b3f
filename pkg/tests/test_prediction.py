import copy

import pytest
from hypothesis import given, strategies as st

from sard.catalog import B_MIN
from sard.errors import NoHistory, UnknownSi
from sard.prediction import (
    ALPHA, PredictorState, ewma, forecast_poa_load, forecast_requests, predict_availability, predict_next_poa,
    predict_position, projected_battery,
)

from conftest import make_catalog, make_topology


def _with_history(points):
    s = PredictorState()
    for p in points:
        s.observe_position("u", p)
    return s


def test_single_point_has_no_velocity():
    assert predict_position(_with_history([(0, 0)]), "u", 3) == (0, 0)


def test_constant_velocity_arithmetic():
    assert predict_position(_with_history([(0, 0), (1, 2)]), "u", 1) == (2, 4)


def test_constant_velocity_horizon_five():
    # hand iteration: 2 -> 3 -> 4 -> 5 -> 6 -> 7
    x = 2
    for _ in range(5):
        x += 1
    assert predict_position(_with_history([(0, 0), (1, 0), (2, 0)]), "u", 5) == (x, 0)


def test_no_history():
    with pytest.raises(NoHistory):
        predict_position(PredictorState(), "ghost")


@given(st.integers(-50, 50), st.integers(-50, 50), st.integers(-50, 50), st.integers(-50, 50),
       st.integers(2, 8), st.integers(1, 5))
def test_constant_velocity_exact(x0, y0, vx, vy, n, h):
    s = _with_history([(x0 + t * vx, y0 + t * vy) for t in range(n)])
    t_last = n - 1
    assert predict_position(s, "u", h) == (x0 + (t_last + h) * vx, y0 + (t_last + h) * vy)


def _avail_world(battery, used=0.0):
    topo = make_topology([(0, 0), (1, 0)], ["poa", "edge"], [(0, 1, 10)])
    topo.node(1).battery = battery
    topo.node(1).used = used
    cat = make_catalog([dict(id=0, provider="p", service_type="t", host=1, cost=30, capacity=50.0)])
    return topo, cat


def test_full_idle_available():
    topo, cat = _avail_world(100.0)
    assert predict_availability(PredictorState(availability={0: 1.0}), cat, topo, 0)


def test_projected_battery_crosses_floor():
    # net drain 1 per step: 15 Gbps * 0.1 - 0.5
    topo, cat = _avail_world(10.5, used=15.0)
    assert projected_battery(10.5, 15.0, 0.5, 1) == pytest.approx(9.5)
    assert not predict_availability(PredictorState(availability={0: 1.0}), cat, topo, 0, horizon=1)


def test_flapping_instance_gated():
    topo, cat = _avail_world(100.0)
    assert not predict_availability(PredictorState(availability={0: 0.2}), cat, topo, 0)


def test_unknown_si():
    topo, cat = _avail_world(100.0)
    with pytest.raises(UnknownSi):
        predict_availability(PredictorState(), cat, topo, 42)
    assert B_MIN == 10.0


def test_ewma_fixed_point_and_single_step():
    s = PredictorState()
    for _ in range(200):
        s.observe_requests({(0, "a"): 4})
    assert forecast_requests(s, 0, "a") == pytest.approx(4.0, abs=1e-9)
    s = PredictorState()
    s.observe_requests({(1, "b"): 10})
    assert forecast_requests(s, 1, "b") == pytest.approx(0.3 * 10)
    assert forecast_requests(s, 9, "zzz") == 0.0


@given(st.lists(st.dictionaries(st.sampled_from([(0, "a"), (0, "b"), (1, "a")]), st.integers(0, 20)),
                min_size=1, max_size=30))
def test_ewma_matches_hand_recurrence(steps):
    s = PredictorState()
    oracle = {}
    for counts in steps:
        s.observe_requests(counts)
        for key in set(oracle) | set(counts):
            oracle[key] = ALPHA * counts.get(key, 0) + (1 - ALPHA) * oracle.get(key, 0.0)
        for key, y in oracle.items():
            assert abs(forecast_requests(s, *key) - y) <= 1e-9


@given(st.floats(0, 100), st.lists(st.floats(0, 100), min_size=1, max_size=40))
def test_ewma_bounded_by_observations(y0, obs):
    lo, hi = min(obs + [y0]), max(obs + [y0])
    y = y0
    for o in obs:
        y = ewma(y, o)
        assert lo - 1e-9 <= y <= hi + 1e-9


def _poa_line():
    return make_topology([(0, 0), (100, 0), (200, 0), (300, 0), (400, 0), (500, 0), (600, 0), (700, 0)],
                         ["poa"] * 8, [])


def test_stationary_user_keeps_poa():
    topo = _poa_line()
    s = _with_history([(210, 0), (210, 0)])
    assert predict_next_poa(s, "u", topo) == 2


def test_user_heading_to_poa7_predicted_before_arrival():
    topo = _poa_line()
    s = _with_history([(520, 0), (560, 0)])
    # 3 steps at 40 per step lands at x = 680, closest to PoA 7 at 700
    assert predict_next_poa(s, "u", topo, horizon=3) == 7
    assert predict_next_poa(_with_history([(560, 0)]), "u", topo) == 6


def test_next_poa_tie_to_smaller_id():
    topo = _poa_line()
    assert predict_next_poa(_with_history([(150, 0)]), "u", topo) == 1


def test_predictors_pure_on_snapshots():
    topo, cat = _avail_world(50.0, used=5.0)
    s = _with_history([(0, 0), (3, 4)])
    s.observe_requests({(0, "a"): 3})
    s.observe_availability(cat)
    snap = copy.deepcopy(s)
    first = (predict_position(s, "u", 2), predict_availability(s, cat, topo, 0, 3),
             forecast_requests(s, 0, "a"), forecast_poa_load(s, [0, 1], 3.0))
    second = (predict_position(snap, "u", 2), predict_availability(snap, cat, topo, 0, 3),
              forecast_requests(snap, 0, "a"), forecast_poa_load(snap, [0, 1], 3.0))
    assert first == second
    assert s.positions == snap.positions and s.requests == snap.requests
