"""Parameter sweeps over node count or request load, CSV emission and ordering checks."""
from __future__ import annotations

import csv
import dataclasses
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .engine import SimConfig, dump_ledgers, finalize, run_state
from .errors import ConfigInvalid, MissingStrategy
from .metrics import RunMetrics

CSV_HEADER = (
    "axis", "value", "strategy", "seed_count", "total_cost_mean", "total_cost_std", "resp_ms_mean",
    "resp_ms_std", "p95_ms", "acceptance_mean", "bytes_saved_mean", "cache_hit_rate", "rezones",
)
TIMING_COLUMN = "runtime_s_mean"
AXES = ("nodes", "requests")

DEFAULT_NODE_VALUES = (5, 10, 15, 20, 25)
DEFAULT_REQUEST_VALUES = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass
class SweepSpec:
    axis: str
    values: Sequence[float]
    strategies: Sequence[str]
    seeds: Sequence[int]
    base: SimConfig = field(default_factory=SimConfig)

    def validate(self) -> "SweepSpec":
        if self.axis not in AXES:
            raise ConfigInvalid("axis", f"one of {', '.join(AXES)}")
        if not self.values:
            raise ConfigInvalid("values", "must be non-empty")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ConfigInvalid("values", "must be strictly increasing")
        if not self.strategies:
            raise ConfigInvalid("strategies", "must be non-empty")
        if not self.seeds:
            raise ConfigInvalid("seeds", "must be non-empty")
        return self

    def config_for(self, value: float, strategy: str, seed: int) -> SimConfig:
        if self.axis == "nodes":
            if int(value) != value:
                raise ConfigInvalid("values", "node counts must be integers")
            changes = {"n_nodes": int(value)}
        else:
            changes = {"request_multiplier": float(value)}
        return dataclasses.replace(self.base, seed=seed, strategy=strategy, **changes).validate()


@dataclass(frozen=True)
class RunRecord:
    axis: str
    value: float
    strategy: str
    seed: int
    metrics: RunMetrics
    runtime_s: float = 0.0
    sr_stream: tuple = ()


@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: float
    strategy: str
    seed_count: int
    total_cost_mean: float
    total_cost_std: float
    resp_ms_mean: float
    resp_ms_std: float
    p95_ms: float
    acceptance_mean: float
    bytes_saved_mean: float
    cache_hit_rate: float
    rezones: float
    runtime_s_mean: float = 0.0


def _std(xs: list[float]) -> float:
    return statistics.stdev(xs) if len(xs) > 1 else 0.0


def aggregate(records: Iterable[RunRecord]) -> list[SweepRow]:
    """Mean and sample standard deviation over seeds per (value, strategy)."""
    groups: dict[tuple[float, str], list[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.value, r.strategy), []).append(r)
    rows = []
    for (value, strategy) in sorted(groups):
        rs = sorted(groups[(value, strategy)], key=lambda r: r.seed)
        ms = [r.metrics for r in rs]
        cost = [m.total_cost for m in ms]
        resp = [m.mean_response_ms for m in ms]
        rows.append(SweepRow(
            axis=rs[0].axis, value=value, strategy=strategy, seed_count=len(rs),
            total_cost_mean=statistics.fmean(cost), total_cost_std=_std(cost),
            resp_ms_mean=statistics.fmean(resp), resp_ms_std=_std(resp),
            p95_ms=statistics.fmean(m.p95_response_ms for m in ms),
            acceptance_mean=statistics.fmean(m.acceptance_rate for m in ms),
            bytes_saved_mean=statistics.fmean(m.bytes_saved for m in ms),
            cache_hit_rate=statistics.fmean(m.cache_hit_rate for m in ms),
            rezones=statistics.fmean(m.rezone_count for m in ms),
            runtime_s_mean=statistics.fmean(r.runtime_s for r in rs),
        ))
    return rows


@dataclass
class SweepResult:
    rows: list[SweepRow]
    runs: list[RunRecord]


def _fmt_value(v: float) -> str:
    return f"{v:.4f}"


def run_sweep(spec: SweepSpec, dump_dir: str | Path | None = None, keep_streams: bool = False) -> SweepResult:
    """Run every (value, strategy, seed) cell; ``keep_streams`` retains each run's generated SRs."""
    spec.validate()
    runs = []
    for value in spec.values:
        for strategy in spec.strategies:
            for seed in spec.seeds:
                cfg = spec.config_for(value, strategy, seed)
                t0 = time.perf_counter()
                state = run_state(cfg)
                elapsed = time.perf_counter() - t0
                if dump_dir is not None:
                    sub = Path(dump_dir) / f"{spec.axis}-{_fmt_value(value)}" / strategy / f"seed-{seed}"
                    dump_ledgers(state, sub)
                stream = tuple(state.sr_log) if keep_streams else ()
                runs.append(RunRecord(spec.axis, value, strategy, seed, finalize(state), elapsed, stream))
    return SweepResult(aggregate(runs), runs)


def emit_csv(rows: Iterable[SweepRow], path: str | Path, timing: bool = False) -> None:
    header = CSV_HEADER + ((TIMING_COLUMN,) if timing else ())
    ordered = sorted(rows, key=lambda r: (r.value, r.strategy))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in ordered:
            line = [
                r.axis, _fmt_value(r.value), r.strategy, str(r.seed_count),
                *(_fmt_value(getattr(r, col)) for col in CSV_HEADER[4:]),
            ]
            if timing:
                line.append(_fmt_value(r.runtime_s_mean))
            w.writerow(line)


def read_csv(path: str | Path) -> list[SweepRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ())[: len(CSV_HEADER)] != CSV_HEADER:
            raise ConfigInvalid("csv", "unexpected header")
        rows = []
        for d in reader:
            rows.append(SweepRow(
                axis=d["axis"], value=float(d["value"]), strategy=d["strategy"], seed_count=int(d["seed_count"]),
                **{col: float(d[col]) for col in CSV_HEADER[4:]},
                runtime_s_mean=float(d.get(TIMING_COLUMN) or 0.0),
            ))
    return rows


@dataclass(frozen=True)
class Verdict:
    value: float
    check: str
    passed: bool
    hard: bool = True
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else ("FAIL" if self.hard else "NOTE")
        return f"[{tag}] value={_fmt_value(self.value)} {self.check} {self.detail}".rstrip()


@dataclass
class Report:
    verdicts: list[Verdict]

    @property
    def ok(self) -> bool:
        return all(v.passed for v in self.verdicts if v.hard)

    def lines(self) -> list[str]:
        return [v.line() for v in self.verdicts]


REQUIRED = ("optimal", "proposed", "random")


def compare_report(rows: Sequence[SweepRow], required: Sequence[str] = REQUIRED) -> Report:
    by_value: dict[float, dict[str, SweepRow]] = {}
    for r in rows:
        by_value.setdefault(r.value, {})[r.strategy] = r
    verdicts = []
    for value in sorted(by_value):
        cell = by_value[value]
        missing = [s for s in required if s not in cell]
        if missing:
            raise MissingStrategy(f"value {value}: missing {', '.join(missing)}")
        opt, prop, rnd = cell["optimal"], cell["proposed"], cell["random"]
        verdicts.append(Verdict(value, "cost(optimal) <= cost(proposed)",
                                opt.total_cost_mean <= prop.total_cost_mean,
                                detail=f"{opt.total_cost_mean:.4f} vs {prop.total_cost_mean:.4f}"))
        verdicts.append(Verdict(value, "cost(proposed) <= cost(random)",
                                prop.total_cost_mean <= rnd.total_cost_mean,
                                detail=f"{prop.total_cost_mean:.4f} vs {rnd.total_cost_mean:.4f}"))
        verdicts.append(Verdict(value, "acceptance(proposed) >= acceptance(random)",
                                prop.acceptance_mean >= rnd.acceptance_mean,
                                detail=f"{prop.acceptance_mean:.4f} vs {rnd.acceptance_mean:.4f}"))
    values = sorted(by_value)
    prop_costs = [by_value[v]["proposed"].total_cost_mean for v in values]
    if len(values) > 1:
        mono = all(b >= a for a, b in zip(prop_costs, prop_costs[1:]))
        verdicts.append(Verdict(values[-1], "cost(proposed) non-decreasing along axis", mono, hard=False))
    return Report(verdicts)
