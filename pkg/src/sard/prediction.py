"""Analytic predictors behind the intelligence-hub interface.

Replacing these with learned models means providing the same four calls:
``predict_position``, ``predict_availability``, ``forecast_requests`` and
``predict_next_poa``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .catalog import B_MIN, Catalog, battery_step
from .errors import NoHistory, UnknownSi
from .mobility import HISTORY_LEN, nearest_poa
from .topology import Topology

ALPHA = 0.3
CONTINUITY_HORIZON = 3
AVAILABILITY_GATE = 0.5


def ewma(prev: float, obs: float, alpha: float = ALPHA) -> float:
    return alpha * obs + (1 - alpha) * prev


@dataclass
class PredictorState:
    alpha: float = ALPHA
    positions: dict[str, deque] = field(default_factory=dict)
    availability: dict[int, float] = field(default_factory=dict)
    requests: dict[tuple[int, str], float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")

    def observe_position(self, user: str, pos: tuple[float, float]) -> None:
        self.positions.setdefault(user, deque(maxlen=HISTORY_LEN)).append(pos)

    def observe_availability(self, catalog: Catalog) -> None:
        for si in catalog.registered():
            prev = self.availability.get(si.id, 1.0)
            self.availability[si.id] = ewma(prev, 1.0 if si.available else 0.0, self.alpha)

    def observe_requests(self, counts: Mapping[tuple[int, str], int]) -> None:
        """One EWMA step per known key; keys absent this step observe zero."""
        for key in sorted(set(self.requests) | set(counts)):
            self.requests[key] = ewma(self.requests.get(key, 0.0), float(counts.get(key, 0)), self.alpha)


def predict_position(state: PredictorState, user: str, horizon: int = 1) -> tuple[float, float]:
    hist = state.positions.get(user)
    if not hist:
        raise NoHistory(user)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    last = hist[-1]
    if len(hist) == 1:
        return last
    prev = hist[-2]
    vx, vy = last[0] - prev[0], last[1] - prev[1]
    return (last[0] + horizon * vx, last[1] + horizon * vy)


def projected_battery(battery: float, served_gbps: float, harvest: float, horizon: int) -> float:
    for _ in range(horizon):
        battery = battery_step(battery, served_gbps, harvest)
    return battery


def predict_availability(state: PredictorState, catalog: Catalog, topo: Topology, si_id: int,
                         horizon: int = 1, b_min: float = B_MIN) -> bool:
    si = catalog.instances.get(si_id)
    if si is None or not si.registered:
        raise UnknownSi(str(si_id))
    host = topo.node(si.host)
    battery = projected_battery(host.battery, host.used, host.harvest_rate, horizon)
    return battery > b_min and state.availability.get(si_id, 1.0) >= AVAILABILITY_GATE


def forecast_requests(state: PredictorState, poa: int, service_type: str) -> float:
    return state.requests.get((poa, service_type), 0.0)


def predict_next_poa(state: PredictorState, user: str, topo: Topology,
                     horizon: int = CONTINUITY_HORIZON) -> int:
    return nearest_poa(predict_position(state, user, horizon), topo)


def forecast_poa_load(state: PredictorState, poas: Iterable[int], mean_rate: float) -> dict[int, float]:
    """Expected Gbps arriving at each PoA next step."""
    out = {p: 0.0 for p in poas}
    for (poa, _), y in sorted(state.requests.items()):
        if poa in out:
            out[poa] += y * mean_rate
    return out
