import io
import math

import pytest
from hypothesis import given, strategies as st

from sard.errors import BadArea, MalformedRow, NoPoA, NonMonotoneStep
from sard.mobility import User, attach_poa, gen_waypoint_trace, ingest_trace, nearest_poa

from conftest import make_topology


def test_zero_speed_is_stationary():
    tr = gen_waypoint_trace(3, 4, 30, speed_range=(0.0, 0.0))
    starts = {r.user: (r.x, r.y) for r in tr.rows if r.step == 0}
    assert all((r.x, r.y) == starts[r.user] for r in tr.rows)


@given(st.integers(0, 5000), st.floats(0, 80), st.floats(0, 80))
def test_displacement_bounded_and_inside_area(seed, a, b):
    lo, hi = min(a, b), max(a, b)
    area = (300.0, 200.0)
    tr = gen_waypoint_trace(seed, 3, 25, area=area, speed_range=(lo, hi))
    last = {}
    for r in tr.rows:
        assert 0 <= r.x <= area[0] and 0 <= r.y <= area[1]
        if r.user in last:
            px, py = last[r.user]
            assert math.hypot(r.x - px, r.y - py) <= hi + 1e-9
        last[r.user] = (r.x, r.y)


def test_trace_shape_and_determinism():
    a = gen_waypoint_trace(9, 5, 12)
    assert a == gen_waypoint_trace(9, 5, 12)
    assert len(a.rows) == 60 and a.users() == [f"u{i:03d}" for i in range(5)]
    assert sorted(a.by_step()) == list(range(12))


def test_bad_area():
    with pytest.raises(BadArea):
        gen_waypoint_trace(0, 1, 2, area=(0, 10))


def test_ingest_one_row():
    tr = ingest_trace(b"step,user,x,y\n0,u1,0,0")
    assert len(tr.rows) == 1 and tr.rows[0].user == "u1"


def test_ingest_malformed_row_line_number():
    with pytest.raises(MalformedRow) as err:
        ingest_trace(b"step,user,x,y\n0,u1,a,b\n")
    assert err.value.line == 2


def test_ingest_bad_header():
    with pytest.raises(MalformedRow) as err:
        ingest_trace(b"t,u,x,y\n0,u1,0,0\n")
    assert err.value.line == 1


def test_ingest_non_monotone():
    with pytest.raises(NonMonotoneStep):
        ingest_trace(b"step,user,x,y\n1,u1,0,0\n0,u1,1,1\n")


def test_csv_round_trip(tmp_path):
    tr = gen_waypoint_trace(4, 3, 6)
    p = tmp_path / "t.csv"
    p.write_text(tr.to_csv())
    assert ingest_trace(p) == tr
    assert ingest_trace(io.StringIO(tr.to_csv())) == tr


def _poas(positions):
    return make_topology(positions, ["poa"] * len(positions), [])


def test_single_poa_always_chosen():
    topo = make_topology([(0, 0), (500, 500)], ["poa", "edge"], [(0, 1, 1)])
    assert nearest_poa((999, 999), topo) == 0


def test_tie_breaks_to_smaller_id():
    topo = _poas([(100, 100), (100, 100), (0, 0), (100, 100), (100, 100), (20, 0)])
    # user at (10, 0) is 10 away from both PoA 2 and PoA 5
    assert nearest_poa((10, 0), topo) == 2


def test_three_poas_on_a_line():
    topo = _poas([(0, 0), (10, 0), (20, 0)])
    dists = [abs(12 - x) for x in (0, 10, 20)]
    assert nearest_poa((12, 0), topo) == dists.index(min(dists)) == 1


def test_no_poa():
    with pytest.raises(NoPoA):
        nearest_poa((0, 0), make_topology([(0, 0)], ["edge"], []))


@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50)), min_size=1, max_size=50),
       st.tuples(st.floats(0, 50), st.floats(0, 50)))
def test_attach_minimizes_distance(points, pos):
    topo = _poas(points)
    u = User("u", pos)
    chosen = attach_poa(u, topo)
    best = min(((p[0] - pos[0]) ** 2 + (p[1] - pos[1]) ** 2, i) for i, p in enumerate(points))
    assert chosen == best[1]


def test_user_history_bounded():
    u = User("u", (0.0, 0.0))
    for i in range(20):
        u.move_to((float(i), 0.0))
    assert len(u.history) == 8 and u.velocity == (1.0, 0.0)
    with pytest.raises(ValueError):
        User("v", (0, 0), preferences=(0.5, 0.5, 0.5))
